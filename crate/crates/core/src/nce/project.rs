use super::model::{KernelKind, KernelModel, ModelEval, ModelGrid};
use crate::error::{param, Result};
use crate::kernels::{conduction_kernel, helmholtz_green, MediumKind, MediumSpec};
use crate::linalg::cholesky_solve;
use crate::sce::in_cavity;

/// Least-squares projection of the analytic kernel onto the Bessel–Fourier
/// basis with the α grid and envelope held fixed.
///
/// The fit uses every integer displacement outside the cavity within the
/// disk of radius side/2 (in cells). For Hessian kernels only the real part
/// is matched; the imaginary coefficients are pinned to zero by the ridge.
pub fn project_analytic(
    spec: &MediumSpec,
    n_max: usize,
    m_radial: usize,
    side: usize,
    alpha_env: Option<f64>,
    cavity: usize,
) -> Result<KernelModel> {
    spec.validate()?;
    if cavity == 0 {
        return param("cavity radius must be at least one cell");
    }
    let kind = KernelKind::for_medium(spec.kind);
    let env = alpha_env.unwrap_or_else(|| KernelModel::default_alpha_env(kind, spec.d));
    let mut km = KernelModel::zeros(*spec, n_max, m_radial, side, env);
    km.validate()?;
    let extent = side as i64 / 2;
    let grid = ModelGrid::new(side, extent, km.n_orders);
    let ev = ModelEval::new(&km, &grid);
    let h = 1.0 / side as f64;
    let nm = km.n_orders * km.m_radial;
    let ncol = 2 * nm;

    // Normal equations shared by all four entries; one right-hand side each.
    let mut ata = vec![0.0; ncol * ncol];
    let mut atb = vec![0.0; ncol * 4];
    let mut row_re = vec![0.0; ncol];
    let mut row_im = vec![0.0; ncol];
    for (c, &(d, g)) in grid.cells.iter().enumerate() {
        if g == usize::MAX || in_cavity(d, cavity) || d[0] * d[0] + d[1] * d[1] > extent * extent {
            continue;
        }
        let r = [d[0] as f64 * h, d[1] as f64 * h];
        let target = match spec.kind {
            MediumKind::Conduction => conduction_kernel(r, spec.prop0)?,
            MediumKind::Wave => helmholtz_green(r, spec.prop0, spec.k0)?,
        };
        // Columns: [c_re over (n, m), c_im over (n, m)].
        for n in 0..km.n_orders {
            let ph = grid.phase(c, n);
            for m in 0..km.m_radial {
                let k = n * km.m_radial + m;
                let phi = ph * ev.radial[g * nm + k];
                row_re[k] = phi.re;
                row_re[nm + k] = -phi.im;
                row_im[k] = phi.im;
                row_im[nm + k] = phi.re;
            }
        }
        let e = target.entries();
        let mut add = |row: &[f64], vals: [f64; 4]| {
            for a in 0..ncol {
                if row[a] == 0.0 {
                    continue;
                }
                for b in 0..ncol {
                    ata[a * ncol + b] += row[a] * row[b];
                }
                for (ij, v) in vals.iter().enumerate() {
                    atb[a * 4 + ij] += row[a] * v;
                }
            }
        };
        add(&row_re, [e[0].re, e[1].re, e[2].re, e[3].re]);
        if kind == KernelKind::Green {
            add(&row_im, [e[0].im, e[1].im, e[2].im, e[3].im]);
        }
    }
    let trace: f64 = (0..ncol).map(|i| ata[i * ncol + i]).sum();
    let ridge = 1e-10 * trace / ncol as f64 + f64::MIN_POSITIVE;
    for i in 0..ncol {
        ata[i * ncol + i] += ridge;
    }
    cholesky_solve(&mut ata, ncol, &mut atb)?;
    for ij in 0..4 {
        for n in 0..km.n_orders {
            for m in 0..km.m_radial {
                let k = n * km.m_radial + m;
                let idx = km.coef_index(ij, n, m);
                km.c_re[idx] = atb[k * 4 + ij];
                km.c_im[idx] = atb[(nm + k) * 4 + ij];
            }
        }
    }
    Ok(km)
}
