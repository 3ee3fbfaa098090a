//! Frequency-domain solve for the dynamic effective permittivity.
//!
//! The out-of-plane magnetic field H_z lives on cell corners and obeys
//! ∇·((ε₀/ε)∇H) + k₀²H = 0. Each edge between two corners borders two
//! cells and carries the coefficient ε₀·mean(1/ε) of those cells, which makes
//! the scheme the exact discrete dual of the cell-centred conduction
//! discretization in the static limit. A Bloch wave H = e^{ik·x}u with
//! k = k₀·ê is sought with u = 1 + ũ, mean(ũ) = 0; the mean equation is left
//! out so that k₀ need not lie on the effective dispersion curve.

use super::krylov::bicgstab;
use super::{FieldSolution, ITERATIONS_PER_SIDE};
use crate::error::{param, NceError, Result};
use crate::fft::Fft2;
use crate::gridfield::Microstructure;
use crate::kernels::MediumKind;
use crate::linalg::Mat2;
use crate::sce::EffectiveTensor;
use num_complex::Complex64;
use std::f64::consts::PI;

struct BlochOperator {
    n: usize,
    h: f64,
    k0: f64,
    /// Edge from corner c to c + x̂ and to c + ŷ.
    ax: Vec<f64>,
    ay: Vec<f64>,
    /// Bloch phases e^{i kx h}, e^{i ky h}.
    px: Complex64,
    py: Complex64,
}

impl BlochOperator {
    fn new(m: &Microstructure, eps0: f64, eps1: f64, k0: f64, k: [f64; 2]) -> Self {
        let n = m.side();
        let h = 1.0 / n as f64;
        let inv: Vec<f64> = m.cells().iter().map(|&c| 1.0 / if c == 1 { eps1 } else { eps0 }).collect();
        let cell = |x: usize, y: usize| inv[(y % n) * n + x % n];
        let mut ax = vec![0.0; n * n];
        let mut ay = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                // Corner (x, y) sits at the lower-left of cell (x, y).
                ax[y * n + x] = eps0 * 0.5 * (cell(x, y + n - 1) + cell(x, y));
                ay[y * n + x] = eps0 * 0.5 * (cell(x + n - 1, y) + cell(x, y));
            }
        }
        let px = Complex64::from_polar(1.0, k[0] * h);
        let py = Complex64::from_polar(1.0, k[1] * h);
        BlochOperator { n, h, k0, ax, ay, px, py }
    }

    fn apply(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let h2 = self.h * self.h;
        let (px, py) = (self.px, self.py);
        for y in 0..n {
            let yu = (y + 1) % n;
            let yd = (y + n - 1) % n;
            for x in 0..n {
                let xr = (x + 1) % n;
                let xl = (x + n - 1) % n;
                let c = y * n + x;
                let uc = u[c];
                let s = self.ax[c] * (px * u[y * n + xr] - uc)
                    + self.ax[y * n + xl] * (px.conj() * u[y * n + xl] - uc)
                    + self.ay[c] * (py * u[yu * n + x] - uc)
                    + self.ay[yd * n + x] * (py.conj() * u[yd * n + x] - uc);
                out[c] = s / h2 + uc * (self.k0 * self.k0);
            }
        }
    }
}

fn project_mean(v: &mut [Complex64]) {
    let mean = v.iter().sum::<Complex64>() / v.len() as f64;
    v.iter_mut().for_each(|z| *z -= mean);
}

/// Fourier symbol of the Bloch operator with every edge coefficient set to
/// `a_mean`; the mean mode is marked with 0 (it is projected out).
fn homogenized_symbol(n: usize, a_mean: f64, k0: f64, k: [f64; 2]) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut out = vec![0.0; n * n];
    for my in 0..n {
        for mx in 0..n {
            if mx == 0 && my == 0 {
                continue;
            }
            let qx = k[0] + 2.0 * PI * mx as f64;
            let qy = k[1] + 2.0 * PI * my as f64;
            let lap = (4.0 - 2.0 * (qx * h).cos() - 2.0 * (qy * h).cos()) / (h * h);
            out[my * n + mx] = k0 * k0 - a_mean * lap;
        }
    }
    out
}

/// Ratio of the largest to the smallest Fourier symbol of the homogenized
/// operator over nonzero frequencies: a cheap resonance indicator.
fn symbol_condition(n: usize, a_mean: f64, k0: f64, k: [f64; 2]) -> f64 {
    let h = 1.0 / n as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for my in 0..n {
        for mx in 0..n {
            if mx == 0 && my == 0 {
                continue;
            }
            let qx = k[0] + 2.0 * PI * mx as f64;
            let qy = k[1] + 2.0 * PI * my as f64;
            let lap = (2.0 - 2.0 * (qx * h).cos() + 2.0 - 2.0 * (qy * h).cos()) / (h * h);
            let v = (k0 * k0 - a_mean * lap).abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi / lo.max(f64::MIN_POSITIVE)
}

/// One Bloch solve with wave vector k₀·`direction`.
pub fn wave_solve(
    m: &Microstructure,
    eps0: f64,
    eps1: f64,
    k0: f64,
    direction: [f64; 2],
    tol: f64,
) -> Result<FieldSolution> {
    if !(eps0 > 0.0 && eps1 > 0.0) {
        return param("permittivities must be positive");
    }
    if !(k0 > 0.0) {
        return param("k0 must be positive");
    }
    if !(tol > 0.0) {
        return param("tolerance must be positive");
    }
    let dn = direction[0].hypot(direction[1]);
    let k = [k0 * direction[0] / dn, k0 * direction[1] / dn];
    let n = m.side();
    let g = n * n;
    let op = BlochOperator::new(m, eps0, eps1, k0, k);

    let ones = vec![Complex64::new(1.0, 0.0); g];
    let mut rhs = vec![Complex64::new(0.0, 0.0); g];
    op.apply(&ones, &mut rhs);
    rhs.iter_mut().for_each(|z| *z = -*z);
    let scale = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    project_mean(&mut rhs);
    // A uniform medium drives no fluctuation; drop the rounding residue.
    if rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() <= 1e-12 * scale {
        rhs.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }

    let apply = |v: &[Complex64], out: &mut [Complex64]| {
        let mut p = v.to_vec();
        project_mean(&mut p);
        op.apply(&p, out);
        project_mean(out);
    };
    let a_mean = (op.ax.iter().sum::<f64>() + op.ay.iter().sum::<f64>()) / (2 * g) as f64;
    let symbol = homogenized_symbol(n, a_mean, k0, k);
    let plan = Fft2::new(n);
    let precond = |r: &[Complex64], z: &mut [Complex64]| {
        z.copy_from_slice(r);
        plan.forward(z);
        for (v, s) in z.iter_mut().zip(&symbol) {
            *v = if *s == 0.0 { Complex64::new(0.0, 0.0) } else { *v / *s };
        }
        plan.inverse(z);
    };
    let mut ut = vec![Complex64::new(0.0, 0.0); g];
    let outcome = match bicgstab(apply, precond, &rhs, &mut ut, tol, ITERATIONS_PER_SIDE * n) {
        Ok(o) => o,
        Err(NceError::NoConvergence { iterations, residual }) => {
            let cond = symbol_condition(n, a_mean, k0, k);
            if cond > 1e6 {
                return Err(NceError::Resonance { cond });
            }
            return Err(NceError::NoConvergence { iterations, residual });
        }
        Err(e) => return Err(e),
    };
    let u: Vec<Complex64> = ut.iter().map(|z| z + 1.0).collect();

    // D = (∂_y H, −∂_x H) up to the common factor 1/(iω); E = D/ε on the same
    // edge. Bloch phases are removed at edge midpoints.
    let hx = Complex64::from_polar(1.0, k[0] * op.h / 2.0);
    let hy = Complex64::from_polar(1.0, k[1] * op.h / 2.0);
    let mut d = [Complex64::new(0.0, 0.0); 2];
    let mut e = [Complex64::new(0.0, 0.0); 2];
    for y in 0..n {
        for x in 0..n {
            let c = y * n + x;
            let dyh = (hy * u[((y + 1) % n) * n + x] - hy.conj() * u[c]) / op.h;
            let dxh = (hx * u[y * n + (x + 1) % n] - hx.conj() * u[c]) / op.h;
            d[0] += dyh;
            e[0] += dyh * (op.ay[c] / eps0);
            d[1] -= dxh;
            e[1] -= dxh * (op.ax[c] / eps0);
        }
    }
    let inv_g = 1.0 / g as f64;
    Ok(FieldSolution {
        side: n,
        field: u,
        flux_mean: [d[0] * inv_g, d[1] * inv_g],
        field_mean: [e[0] * inv_g, e[1] * inv_g],
        residual_norm: outcome.residual,
        iterations: outcome.iterations,
    })
}

/// εₑ from Bloch solves along x and y: εₑ = [D₁ D₂][E₁ E₂]⁻¹, symmetrized.
///
/// Real coefficients make the −k solve the complex conjugate of the +k
/// solve, so εₑ(−k) = conj εₑ(k). The returned tensor is the average of the
/// two, i.e. the real part, which drops the odd-in-k (spatially dispersive)
/// response that a finite periodic cell without inversion symmetry carries.
pub fn effective_permittivity(m: &Microstructure, eps0: f64, eps1: f64, k0: f64, tol: f64) -> Result<EffectiveTensor> {
    let s1 = wave_solve(m, eps0, eps1, k0, [1.0, 0.0], tol)?;
    let s2 = wave_solve(m, eps0, eps1, k0, [0.0, 1.0], tol)?;
    let dm = Mat2::new(s1.flux_mean[0], s2.flux_mean[0], s1.flux_mean[1], s2.flux_mean[1]);
    let em = Mat2::new(s1.field_mean[0], s2.field_mean[0], s1.field_mean[1], s2.field_mean[1]);
    let inv = em
        .inverse()
        .ok_or_else(|| NceError::Numerical("mean fields of the two Bloch solves are degenerate".into()))?;
    Ok(EffectiveTensor { m: (dm * inv).symmetrized().re(), kind: MediumKind::Wave })
}
