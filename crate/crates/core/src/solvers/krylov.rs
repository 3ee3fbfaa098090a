//! Matrix-free preconditioned Krylov iterations.

use crate::error::{NceError, Result};
use num_complex::Complex64;

#[derive(Debug)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator. `x` holds the initial guess and the result.
/// Convergence: ‖b − Ax‖ ≤ tol·‖b‖.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovOutcome { iterations: 0, residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok(KrylovOutcome { iterations: it, residual: res });
        }
        if it == max_iter {
            return Err(NceError::NoConvergence { iterations: it, residual: res });
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Right-preconditioned BiCGSTAB for a general complex operator.
pub fn bicgstab(
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    precond: impl Fn(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return Ok(KrylovOutcome { iterations: 0, residual: 0.0 });
    }
    let mut tmp = vec![zero; n];
    apply(x, &mut tmp);
    let mut r: Vec<Complex64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let mut rho = Complex64::new(1.0, 0.0);
    let mut alpha = Complex64::new(1.0, 0.0);
    let mut omega = Complex64::new(1.0, 0.0);
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut y = vec![zero; n];
    let mut z = vec![zero; n];
    let mut t = vec![zero; n];
    let mut s = vec![zero; n];
    for it in 0..=max_iter {
        let res = cnorm(&r) / bnorm;
        if res <= tol {
            return Ok(KrylovOutcome { iterations: it, residual: res });
        }
        if it == max_iter {
            return Err(NceError::NoConvergence { iterations: it, residual: res });
        }
        let rho_new = cdot(&r_hat, &r);
        if rho_new.norm() == 0.0 || omega.norm() == 0.0 {
            return Err(NceError::NoConvergence { iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        apply(&y, &mut v);
        alpha = rho / cdot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if cnorm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            apply(x, &mut tmp);
            let res = b.iter().zip(&tmp).map(|(b, a)| (b - a).norm_sqr()).sum::<f64>().sqrt() / bnorm;
            return Ok(KrylovOutcome { iterations: it + 1, residual: res });
        }
        precond(&s, &mut z);
        apply(&z, &mut t);
        let tt = cdot(&t, &t);
        omega = if tt.norm() == 0.0 { zero } else { cdot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let out = pcg(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 200).unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(out.iterations > 0);
    }

    #[test]
    fn bicgstab_solves_complex_nonsymmetric() {
        let n = 40;
        let apply = |x: &[Complex64], y: &mut [Complex64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0.into() };
                let r = if i + 1 < n { x[i + 1] } else { 0.0.into() };
                y[i] = Complex64::new(4.0, 1.0) * x[i] - l * 1.5 - r * Complex64::new(0.0, 0.5);
            }
        };
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        bicgstab(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 500).unwrap();
        let mut ax = vec![Complex64::new(0.0, 0.0); n];
        apply(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(a, b)| (a - b).norm() < 1e-9));
    }

    #[test]
    fn non_convergence_is_reported() {
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = (i + 1) as f64 * x[i];
            }
        };
        let b = vec![1.0; 30];
        let mut x = vec![0.0; 30];
        let err = pcg(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(err, NceError::NoConvergence { iterations: 3, .. }));
    }
}
