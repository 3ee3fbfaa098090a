//! Small dense linear algebra: a complex 2×2 matrix type and a Cholesky
//! solver for the modest SPD systems used by least-squares fits.

use crate::error::{NceError, Result};
use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Complex 2×2 matrix, row-major: `m[i][j]` is row `i`, column `j`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[Complex64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [[C0, C0], [C0, C0]] };
    pub const IDENTITY: Mat2 = Mat2 { m: [[C1, C0], [C0, C1]] };

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2::real(a, 0.0, 0.0, d)
    }

    pub fn scalar(s: Complex64) -> Self {
        Mat2::new(s, C0, C0, s)
    }

    /// Outer product u vᵀ of two real vectors.
    pub fn outer(u: [f64; 2], v: [f64; 2]) -> Self {
        Mat2::real(u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1])
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let t = self.transpose();
        t.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Mat2::new(f(self.m[0][0]), f(self.m[0][1]), f(self.m[1][0]), f(self.m[1][1]))
    }

    pub fn re(&self) -> Self {
        self.map(|z| z.re.into())
    }

    pub fn im(&self) -> Self {
        self.map(|z| z.im.into())
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]]
    }

    pub fn from_entries(e: [Complex64; 4]) -> Self {
        Mat2::new(e[0], e[1], e[2], e[3])
    }

    pub fn frobenius(&self) -> f64 {
        self.entries().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.entries().iter().fold(0.0, |a, z| a.max(z.im.abs()))
    }

    pub fn symmetrized(&self) -> Self {
        let off = (self.m[0][1] + self.m[1][0]) * 0.5;
        Mat2::new(self.m[0][0], off, off, self.m[1][1])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        let scale = self.frobenius();
        if scale == 0.0 || det.norm() <= 1e-300 || det.norm() < f64::EPSILON * 1e-2 * scale * scale {
            return None;
        }
        let inv = 1.0 / det;
        Some(Mat2::new(
            self.m[1][1] * inv,
            -self.m[0][1] * inv,
            -self.m[1][0] * inv,
            self.m[0][0] * inv,
        ))
    }

    /// Spectral condition number σ_max/σ_min (infinite when singular).
    pub fn condition(&self) -> f64 {
        let g = self.adjoint() * *self;
        let a = g.m[0][0].re;
        let d = g.m[1][1].re;
        let b = g.m[0][1].norm();
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let hi = mean + disc;
        let lo = (mean - disc).max(0.0);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).sqrt()
        }
    }

    /// uᵀ M u for a real vector u.
    pub fn quad(&self, u: [f64; 2]) -> Complex64 {
        let mut s = C0;
        for i in 0..2 {
            for j in 0..2 {
                s += self.m[i][j] * (u[i] * u[j]);
            }
        }
        s
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// Q M Qᵀ with Q the counter-clockwise rotation by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let q = Mat2::real(c, -s, s, c);
        q * *self * q.transpose()
    }

    /// Elementwise (Frobenius) inner product Σ conj(a_ij) b_ij.
    pub fn inner(&self, other: &Mat2) -> Complex64 {
        let mut s = C0;
        for i in 0..2 {
            for j in 0..2 {
                s += self.m[i][j].conj() * other.m[i][j];
            }
        }
        s
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        for i in 0..2 {
            for j in 0..2 {
                self.m[i][j] += o.m[i][j];
            }
        }
    }
}

impl SubAssign for Mat2 {
    fn sub_assign(&mut self, o: Mat2) {
        for i in 0..2 {
            for j in 0..2 {
                self.m[i][j] -= o.m[i][j];
            }
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let mut r = self;
        r -= o;
        r
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.map(|z| -z)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        self.map(|z| z * s)
    }
}

impl Mul<Complex64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: Complex64) -> Mat2 {
        self.map(|z| z * s)
    }
}

/// Solve `A x = b` in place for a dense symmetric positive definite `A`
/// (row-major, `n × n`), overwriting `b` with `x`. `a` is destroyed.
pub fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    let nrhs = b.len() / n;
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * nrhs);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(NceError::Numerical(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // b is n × nrhs, row-major.
    for c in 0..nrhs {
        for i in 0..n {
            let mut s = b[i * nrhs + c];
            for k in 0..i {
                s -= a[i * n + k] * b[k * nrhs + c];
            }
            b[i * nrhs + c] = s / a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i * nrhs + c];
            for k in i + 1..n {
                s -= a[k * n + i] * b[k * nrhs + c];
            }
            b[i * nrhs + c] = s / a[i * n + i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inverse_times_self_is_identity() {
        let a = Mat2::new(c(2.0, 1.0), c(0.5, -0.3), c(-1.0, 0.2), c(3.0, 0.0));
        let p = a * a.inverse().unwrap();
        assert!((p - Mat2::IDENTITY).frobenius() < 1e-14);
    }

    #[test]
    fn singular_has_no_inverse() {
        let a = Mat2::real(1.0, 2.0, 2.0, 4.0);
        assert!(a.inverse().is_none());
        assert!(a.condition().is_infinite() || a.condition() > 1e15);
    }

    #[test]
    fn condition_of_diagonal() {
        assert!((Mat2::diag(4.0, -0.5).condition() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_by_quarter_turn_swaps_diagonal() {
        let r = Mat2::diag(1.0, -1.0).rotated(std::f64::consts::FRAC_PI_2);
        assert!((r - Mat2::diag(-1.0, 1.0)).frobenius() < 1e-15);
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let mut a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let a0 = a.clone();
        let mut b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a0[i * 3 + j] * x[j]).sum())
            .collect();
        cholesky_solve(&mut a, 3, &mut b).unwrap();
        for (u, v) in b.iter().zip(x) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
