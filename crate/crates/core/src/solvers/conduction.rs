use super::krylov::pcg;
use super::{FieldSolution, ITERATIONS_PER_SIDE};
use crate::error::{param, Result};
use crate::gridfield::Microstructure;
use crate::kernels::MediumKind;
use crate::linalg::Mat2;
use crate::sce::EffectiveTensor;
use num_complex::Complex64;

/// Face conductances: `gx[c]` joins cell c to its +x neighbour, `gy[c]` to
/// its +y neighbour (periodic), each the harmonic mean of the two cells.
fn face_conductances(m: &Microstructure, s0: f64, s1: f64) -> (Vec<f64>, Vec<f64>) {
    let n = m.side();
    let sigma: Vec<f64> = m.cells().iter().map(|&c| if c == 1 { s1 } else { s0 }).collect();
    let harm = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let c = y * n + x;
            gx[c] = harm(sigma[c], sigma[y * n + (x + 1) % n]);
            gy[c] = harm(sigma[c], sigma[((y + 1) % n) * n + x]);
        }
    }
    (gx, gy)
}

/// Solve ∇·(σ∇Φ) = 0 with Φ = −E₀·x + φ_per by cell-centred finite volumes.
/// The potential is measured in units of the cell size.
pub fn conduction_solve(
    m: &Microstructure,
    sigma0: f64,
    sigma1: f64,
    e0: [f64; 2],
    tol: f64,
) -> Result<FieldSolution> {
    if !(sigma0 > 0.0 && sigma1 > 0.0) {
        return param("conductivities must be positive");
    }
    if !(tol > 0.0) {
        return param("tolerance must be positive");
    }
    let n = m.side();
    let g = n * n;
    let (gx, gy) = face_conductances(m, sigma0, sigma1);
    let left = |c: usize| (c / n) * n + (c % n + n - 1) % n;
    let down = |c: usize| ((c / n + n - 1) % n) * n + c % n;
    let right = |c: usize| (c / n) * n + (c % n + 1) % n;
    let up = |c: usize| ((c / n + 1) % n) * n + c % n;

    // (Aψ)_c = Σ_f g_f (ψ_c − ψ_nb);  b_c = Σ_f g_f (−E₀·δ_f)
    let mut b = vec![0.0; g];
    let mut diag = vec![0.0; g];
    for c in 0..g {
        b[c] = -gx[c] * e0[0] + gx[left(c)] * e0[0] - gy[c] * e0[1] + gy[down(c)] * e0[1];
        diag[c] = gx[c] + gx[left(c)] + gy[c] + gy[down(c)];
    }
    let apply = |p: &[f64], out: &mut [f64]| {
        for c in 0..g {
            out[c] = diag[c] * p[c]
                - gx[c] * p[right(c)]
                - gx[left(c)] * p[left(c)]
                - gy[c] * p[up(c)]
                - gy[down(c)] * p[down(c)];
        }
    };
    let precond = |r: &[f64], z: &mut [f64]| {
        for c in 0..g {
            z[c] = r[c] / diag[c];
        }
        let mean = z.iter().sum::<f64>() / g as f64;
        z.iter_mut().for_each(|v| *v -= mean);
    };
    let mut psi = vec![0.0; g];
    let out = pcg(apply, precond, &b, &mut psi, tol, ITERATIONS_PER_SIDE * n)?;

    let mut jx = 0.0;
    let mut jy = 0.0;
    for c in 0..g {
        jx += gx[c] * (e0[0] - (psi[right(c)] - psi[c]));
        jy += gy[c] * (e0[1] - (psi[up(c)] - psi[c]));
    }
    Ok(FieldSolution {
        side: n,
        field: psi.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        flux_mean: [Complex64::new(jx / g as f64, 0.0), Complex64::new(jy / g as f64, 0.0)],
        field_mean: [e0[0].into(), e0[1].into()],
        residual_norm: out.residual,
        iterations: out.iterations,
    })
}

/// Σₑ from unit mean fields along x and y; columns are ⟨J⟩, symmetrized.
pub fn effective_conductivity(m: &Microstructure, sigma0: f64, sigma1: f64, tol: f64) -> Result<EffectiveTensor> {
    let sx = conduction_solve(m, sigma0, sigma1, [1.0, 0.0], tol)?;
    let sy = conduction_solve(m, sigma0, sigma1, [0.0, 1.0], tol)?;
    let t = Mat2::new(sx.flux_mean[0], sy.flux_mean[0], sx.flux_mean[1], sy.flux_mean[1]);
    Ok(EffectiveTensor { m: t.symmetrized(), kind: MediumKind::Conduction })
}
