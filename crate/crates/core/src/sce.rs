//! Strong-contrast expansion: the A₂/A₃ convolution terms on the torus and
//! the closed-form solve of the truncated series for the effective tensor.

use crate::correlations::{total_correlation_2, CorrelationSet};
use crate::error::{param, NceError, Result};
use crate::fft::{min_image, wrap};
use crate::kernels::{contrast_beta, KernelEval, MediumKind, MediumSpec};
use crate::linalg::Mat2;
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveTensor {
    pub m: Mat2,
    pub kind: MediumKind,
}

impl EffectiveTensor {
    pub fn isotropic(value: f64, kind: MediumKind) -> Self {
        EffectiveTensor { m: Mat2::diag(value, value), kind }
    }

    /// uᵀ M u with u = (cos θ, sin θ).
    pub fn directional(&self, theta: f64) -> Complex64 {
        self.m.quad([theta.cos(), theta.sin()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesTerms {
    pub a2: Mat2,
    pub a3: Option<Mat2>,
    pub cavity_radius_cells: usize,
}

impl SeriesTerms {
    pub fn order(&self) -> usize {
        if self.a3.is_some() {
            3
        } else {
            2
        }
    }
}

/// Truncation order, cavity and window settings for one series evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesConfig {
    pub order: usize,
    pub cavity_radius_cells: usize,
    /// S₃ window (fraction of the domain edge); `None` uses the full window
    /// stored in the correlation set.
    pub window_radius: Option<f64>,
    /// Density ρ in the (−1/ρ) prefactor of A₃; `None` means ρ = φ.
    pub rho: Option<f64>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { order: 2, cavity_radius_cells: 1, window_radius: None, rho: None }
    }
}

impl SeriesConfig {
    pub fn order(order: usize) -> Self {
        SeriesConfig { order, ..Default::default() }
    }
}

#[inline]
pub(crate) fn in_cavity(d: [i64; 2], cavity: usize) -> bool {
    let c = cavity as i64;
    d[0] * d[0] + d[1] * d[1] < c * c
}

/// T(r) tabulated at integer cell displacements in [−extent, extent]²,
/// zero inside the cavity.
#[derive(Clone, Debug)]
pub struct KernelTable {
    side: usize,
    extent: i64,
    cavity: usize,
    values: Vec<Mat2>,
}

impl KernelTable {
    pub fn build(kernel: &dyn KernelEval, side: usize, extent: i64, cavity: usize) -> Result<Self> {
        let w = (2 * extent + 1) as usize;
        let h = 1.0 / side as f64;
        let mut values = vec![Mat2::ZERO; w * w];
        for dy in -extent..=extent {
            for dx in -extent..=extent {
                if in_cavity([dx, dy], cavity) {
                    continue;
                }
                values[((dy + extent) as usize) * w + (dx + extent) as usize] =
                    kernel.t([dx as f64 * h, dy as f64 * h])?;
            }
        }
        Ok(KernelTable { side, extent, cavity, values })
    }

    /// Wrap precomputed values laid out over [−extent, extent]² (row = dy).
    pub fn from_values(side: usize, extent: i64, cavity: usize, values: Vec<Mat2>) -> Self {
        assert_eq!(values.len(), ((2 * extent + 1) * (2 * extent + 1)) as usize);
        KernelTable { side, extent, cavity, values }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn extent(&self) -> i64 {
        self.extent
    }

    pub fn cavity(&self) -> usize {
        self.cavity
    }

    #[inline]
    pub fn index(&self, d: [i64; 2]) -> usize {
        let w = 2 * self.extent + 1;
        ((d[1] + self.extent) * w + d[0] + self.extent) as usize
    }

    #[inline]
    pub fn get(&self, d: [i64; 2]) -> Mat2 {
        self.values[self.index(d)]
    }

    pub fn values(&self) -> &[Mat2] {
        &self.values
    }
}

/// Table extent needed for a given side and S₃ window (in cells).
pub fn required_extent(side: usize, window_cells: i64) -> i64 {
    (side as i64 / 2).max(2 * window_cells)
}

/// Grid cells contributing to A₂: (array index, displacement, weight).
///
/// On an even grid the Nyquist offset side/2 has two equally short images,
/// ±side/2; such cells are listed once per image with the weight split
/// evenly, which keeps the sum equivariant under 90° rotations.
pub fn a2_cells(side: usize, cavity: usize) -> Vec<(usize, [i64; 2], f64)> {
    let half = (side / 2) as i64;
    let images = |i: usize| -> Vec<i64> {
        let d = min_image(i, side);
        if side % 2 == 0 && d == half && half > 0 {
            vec![half, -half]
        } else {
            vec![d]
        }
    };
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        let ys = images(y);
        for x in 0..side {
            let xs = images(x);
            if in_cavity([xs[0], ys[0]], cavity) {
                continue;
            }
            let w = 1.0 / (xs.len() * ys.len()) as f64;
            for &dy in &ys {
                for &dx in &xs {
                    out.push((y * side + x, [dx, dy], w));
                }
            }
        }
    }
    out
}

fn check_cavity(side: usize, cavity: usize) -> Result<()> {
    if cavity == 0 {
        return param("cavity radius must be at least one cell");
    }
    let half = (side / 2) as f64;
    if (cavity as f64) > half * std::f64::consts::SQRT_2 {
        return param("cavity covers the whole grid");
    }
    Ok(())
}

/// A₂ = (d/Ω_d) ΔV Σ_{r ∉ cavity} χ(r) T(r).
pub fn assemble_a2(chi: &[f64], side: usize, table: &KernelTable, spec: &MediumSpec) -> Result<Mat2> {
    check_cavity(side, table.cavity)?;
    if chi.len() != side * side || table.side != side || table.extent < side as i64 / 2 {
        return param("χ array, grid side and kernel table disagree");
    }
    let dv = 1.0 / (side * side) as f64;
    let mut acc = Mat2::ZERO;
    for (i, d, w) in a2_cells(side, table.cavity) {
        acc += table.get(d) * (chi[i] * w);
    }
    Ok(acc * (spec.d as f64 / spec.omega_d() * dv))
}

/// Window offsets (indices into the S₃ table) that take part in A₃.
pub fn a3_offsets(cs: &CorrelationSet, window_radius: Option<f64>) -> Result<Vec<usize>> {
    let t = cs
        .s3
        .as_ref()
        .ok_or_else(|| NceError::Param("order 3 requires S₃ in the correlation set".into()))?;
    let rc = match window_radius {
        None => t.radius_cells(),
        Some(w) => {
            if w > cs.window_radius + 1e-12 {
                return param(format!(
                    "requested window {w} exceeds the stored S₃ window {}",
                    cs.window_radius
                ));
            }
            (w * cs.side as f64 + 1e-9).floor() as i64
        }
    };
    Ok(t.offsets()
        .iter()
        .enumerate()
        .filter(|(_, r)| r[0] * r[0] + r[1] * r[1] <= rc * rc)
        .map(|(i, _)| i)
        .collect())
}

/// Weighted configurations of the A₃ sum: (r₁, r₂ − r₁, Δ₃), with every
/// configuration that puts a kernel argument or r₂ inside the cavity removed.
pub fn a3_configurations(
    cs: &CorrelationSet,
    cavity: usize,
    window_radius: Option<f64>,
) -> Result<Vec<([i64; 2], [i64; 2], f64)>> {
    let idx = a3_offsets(cs, window_radius)?;
    let t = cs.s3.as_ref().expect("checked by a3_offsets");
    let offs = t.offsets();
    let mut out = Vec::new();
    for &i in &idx {
        let r1 = offs[i];
        if in_cavity(r1, cavity) {
            continue;
        }
        for &j in &idx {
            let r2 = offs[j];
            let r21 = [r2[0] - r1[0], r2[1] - r1[1]];
            if in_cavity(r2, cavity) || in_cavity(r21, cavity) {
                continue;
            }
            let s2a = cs.s2[wrap(r1[1], cs.side) * cs.side + wrap(r1[0], cs.side)];
            let s2b = cs.s2[wrap(r21[1], cs.side) * cs.side + wrap(r21[0], cs.side)];
            out.push((r1, r21, s2a * s2b - cs.phi * t.at(i, j)));
        }
    }
    Ok(out)
}

/// Prefactor (−1/ρ)(d/Ω_d)² ΔV² of the A₃ sum.
pub fn a3_prefactor(cs: &CorrelationSet, spec: &MediumSpec, rho: Option<f64>) -> Result<f64> {
    let rho = rho.unwrap_or(cs.phi);
    if rho == 0.0 {
        return param("A₃ needs a nonzero density ρ");
    }
    let dv = cs.cell_size() * cs.cell_size();
    let f = spec.d as f64 / spec.omega_d() * dv;
    Ok(-f * f / rho)
}

/// A₃ = (−1/ρ)(d/Ω_d)² ΔV² Σ Δ₃(r₁, r₂) T(r₁) T(r₂ − r₁).
pub fn assemble_a3(
    cs: &CorrelationSet,
    table: &KernelTable,
    spec: &MediumSpec,
    window_radius: Option<f64>,
    rho: Option<f64>,
) -> Result<Mat2> {
    check_cavity(cs.side, table.cavity)?;
    let configs = a3_configurations(cs, table.cavity, window_radius)?;
    let need = configs
        .iter()
        .map(|(a, b, _)| a[0].abs().max(a[1].abs()).max(b[0].abs()).max(b[1].abs()))
        .max()
        .unwrap_or(0);
    if need > table.extent {
        return param("kernel table does not cover the S₃ window");
    }
    let mut acc = Mat2::ZERO;
    for (r1, r21, w) in configs {
        if w != 0.0 {
            acc += table.get(r1) * table.get(r21) * w;
        }
    }
    Ok(acc * a3_prefactor(cs, spec, rho)?)
}

/// Assemble all terms up to `cfg.order` for one correlation set.
pub fn assemble_terms(
    cs: &CorrelationSet,
    spec: &MediumSpec,
    kernel: &dyn KernelEval,
    cfg: &SeriesConfig,
) -> Result<SeriesTerms> {
    if cfg.order != 2 && cfg.order != 3 {
        return param(format!("series order must be 2 or 3, got {}", cfg.order));
    }
    check_cavity(cs.side, cfg.cavity_radius_cells)?;
    let wc = if cfg.order == 3 {
        cs.s3.as_ref().map(|t| t.radius_cells()).unwrap_or(0)
    } else {
        0
    };
    let table = KernelTable::build(kernel, cs.side, required_extent(cs.side, wc), cfg.cavity_radius_cells)?;
    terms_from_table(cs, spec, &table, cfg)
}

pub fn terms_from_table(
    cs: &CorrelationSet,
    spec: &MediumSpec,
    table: &KernelTable,
    cfg: &SeriesConfig,
) -> Result<SeriesTerms> {
    let chi = total_correlation_2(cs);
    let a2 = assemble_a2(&chi, cs.side, table, spec)?;
    let a3 = if cfg.order == 3 {
        Some(assemble_a3(cs, table, spec, cfg.window_radius, cfg.rho)?)
    } else {
        None
    };
    Ok(SeriesTerms { a2, a3, cavity_radius_cells: table.cavity })
}

/// R = βφI − Σ Aₙ βⁿ, which is also D̂.
pub fn d_hat(terms: &SeriesTerms, beta: f64, phi: f64) -> Mat2 {
    let mut r = Mat2::scalar((beta * phi).into()) - terms.a2 * (beta * beta);
    if let Some(a3) = terms.a3 {
        r -= a3 * (beta * beta * beta);
    }
    r
}

/// Σₑ = p₀ (R + (d−1)β²φ²I)(R − β²φ²I)⁻¹.
pub fn solve_effective(terms: &SeriesTerms, beta: f64, phi: f64, spec: &MediumSpec) -> Result<EffectiveTensor> {
    if beta == 0.0 || phi == 0.0 {
        return Ok(EffectiveTensor::isotropic(spec.prop0, spec.kind));
    }
    let r = d_hat(terms, beta, phi);
    let a = beta * beta * phi * phi;
    let den = r - Mat2::scalar(a.into());
    let cond = den.condition();
    let inv = match den.inverse() {
        Some(inv) if cond < 1e12 => inv,
        _ => return Err(NceError::NearPercolation { cond }),
    };
    let num = r + Mat2::scalar(((spec.d as f64 - 1.0) * a).into());
    let mut m = num * inv * spec.prop0;
    if spec.kind == MediumKind::Conduction {
        m = m.re();
    }
    Ok(EffectiveTensor { m, kind: spec.kind })
}

/// D = β²φ²(Σₑ − p₀I)⁻¹(Σₑ + p₀I), the data-side counterpart of D̂.
pub fn d_map(sigma_e: &EffectiveTensor, beta: f64, phi: f64, spec: &MediumSpec) -> Result<Mat2> {
    let p0 = Mat2::scalar(spec.prop0.into());
    let diff = sigma_e.m - p0;
    let inv = diff
        .inverse()
        .filter(|_| diff.frobenius() > 1e-12 * spec.prop0)
        .ok_or_else(|| NceError::Numerical("Σₑ = p₀I: degenerate contrast, D is undefined".into()))?;
    Ok(inv * (sigma_e.m + p0) * (beta * beta * phi * phi))
}

/// Assemble and solve: the single prediction entry point for analytic and
/// learned kernels alike.
pub fn predict(
    cs: &CorrelationSet,
    spec: &MediumSpec,
    kernel: &dyn KernelEval,
    cfg: &SeriesConfig,
) -> Result<EffectiveTensor> {
    spec.validate()?;
    let beta = contrast_beta(spec)?;
    if beta == 0.0 || cs.phi == 0.0 {
        return Ok(EffectiveTensor::isotropic(spec.prop0, spec.kind));
    }
    let terms = assemble_terms(cs, spec, kernel, cfg)?;
    solve_effective(&terms, beta, cs.phi, spec)
}
