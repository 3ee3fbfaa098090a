//! Sensitivity of directional effective properties to S₂ and to the
//! spectral density, plus design diagnostics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlations::{k_vector, CorrelationSet, SpectralDensity};
use crate::error::{param, NceError, Result};
use crate::fft::{min_image, to_complex, Fft2};
use crate::kernels::{contrast_beta, KernelEval, MediumKind, MediumSpec};
use crate::linalg::Mat2;
use crate::nce::RidgeModel;
use crate::sce::{a2_cells, d_hat, terms_from_table, KernelTable, SeriesConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSpace {
    Real,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

impl Part {
    fn pick(self, z: Complex64) -> f64 {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSource {
    Analytic,
    Learned,
    Baseline,
}

/// What was differentiated: part of uᵀΣₑu with u = (cos θ, sin θ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapTarget {
    pub kind: MediumKind,
    pub theta: f64,
    pub part: Part,
}

/// Values in the displacement-array layout (row = y, wrapped negatives),
/// over r for real-space maps and over k = 2π·m for Fourier maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub side: usize,
    pub values: Vec<f64>,
    pub space: MapSpace,
    pub target: MapTarget,
    pub source: KernelSource,
}

fn direction(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

/// ∂(uᵀΣₑu)/∂S₂(r) of the order-2 series, zero inside the cavity.
///
/// With P = (R − aI)⁻¹, a = β²φ² and R = βφI − β²A₂, the closed form is
/// dΣₑ = −p₀·d·a·P dR P, and dA₂/dS₂(r) = (d/Ω_d)ΔV·T(r).
pub fn sensitivity_s2(
    kernel: &dyn KernelEval,
    source: KernelSource,
    spec: &MediumSpec,
    cs: &CorrelationSet,
    theta: f64,
    part: Part,
    cfg: &SeriesConfig,
) -> Result<SensitivityMap> {
    spec.validate()?;
    if cfg.order != 2 {
        return param("sensitivity maps are available at series order 2 only");
    }
    let side = cs.side;
    let target = MapTarget { kind: spec.kind, theta, part };
    let mut values = vec![0.0; side * side];
    let beta = contrast_beta(spec)?;
    if beta == 0.0 || cs.phi == 0.0 {
        return Ok(SensitivityMap { side, values, space: MapSpace::Real, target, source });
    }
    let table = KernelTable::build(kernel, side, side as i64 / 2, cfg.cavity_radius_cells)?;
    let terms = terms_from_table(cs, spec, &table, cfg)?;
    let a = beta * beta * cs.phi * cs.phi;
    let den = d_hat(&terms, beta, cs.phi) - Mat2::scalar(a.into());
    let cond = den.condition();
    let p = match den.inverse() {
        Some(p) if cond < 1e12 => p,
        _ => return Err(NceError::NearPercolation { cond }),
    };
    let u = direction(theta);
    let pu = p.apply([u[0].into(), u[1].into()]);
    let pt = p.transpose().apply([u[0].into(), u[1].into()]);
    let dv = 1.0 / (side * side) as f64;
    let f = spec.d as f64 / spec.omega_d() * dv;
    let pre = spec.prop0 * spec.d as f64 * a * beta * beta * f;
    for (i, d, w) in a2_cells(side, cfg.cavity_radius_cells) {
        let tp = table.get(d).apply(pu);
        let mut v = (pt[0] * tp[0] + pt[1] * tp[1]) * (pre * w);
        if spec.kind == MediumKind::Conduction {
            v = v.re.into();
        }
        values[i] += part.pick(v);
    }
    Ok(SensitivityMap { side, values, space: MapSpace::Real, target, source })
}

/// The real-space map carried to wave-vector space with the spectral-density
/// convention: Re[ΔV · DFT(map)].
pub fn to_fourier(map: &SensitivityMap) -> Result<SensitivityMap> {
    if map.space != MapSpace::Real {
        return param("map is already in Fourier space");
    }
    let side = map.side;
    let dv = 1.0 / (side * side) as f64;
    let mut buf = to_complex(&map.values);
    Fft2::new(side).forward(&mut buf);
    Ok(SensitivityMap {
        side,
        values: buf.iter().map(|z| z.re * dv).collect(),
        space: MapSpace::Fourier,
        target: map.target,
        source: map.source,
    })
}

pub fn sensitivity_psd(
    kernel: &dyn KernelEval,
    source: KernelSource,
    spec: &MediumSpec,
    cs: &CorrelationSet,
    theta: f64,
    part: Part,
    cfg: &SeriesConfig,
) -> Result<SensitivityMap> {
    to_fourier(&sensitivity_s2(kernel, source, spec, cs, theta, part, cfg)?)
}

/// Input gradient of the ridge baseline for direction θ, in grid layout.
pub fn baseline_sensitivity(model: &RidgeModel, theta: f64) -> SensitivityMap {
    SensitivityMap {
        side: model.side,
        values: model.input_gradient(direction(theta)),
        space: MapSpace::Real,
        target: MapTarget { kind: model.kind, theta, part: Part::Re },
        source: KernelSource::Baseline,
    }
}

/// Share of Σ|values| on the annulus ||k| − k₀| ≤ half_width.
pub fn ring_mass(map: &SensitivityMap, k0: f64, half_width: f64) -> Result<f64> {
    if map.space != MapSpace::Fourier {
        return param("ring mass needs a Fourier-space map");
    }
    let mut ring = 0.0;
    let mut total = 0.0;
    let mut bins = 0;
    for (i, v) in map.values.iter().enumerate() {
        let k = k_vector(i, map.side);
        let kk = k[0].hypot(k[1]);
        total += v.abs();
        if (kk - k0).abs() <= half_width {
            ring += v.abs();
            bins += 1;
        }
    }
    if bins == 0 {
        return param(format!("no wave-vector bin within {half_width} of |k| = {k0} at side {}", map.side));
    }
    Ok(if total > 0.0 { ring / total } else { 0.0 })
}

/// Mean χ̃ over |k| ≤ k_max relative to the mean over all bins.
pub fn exclusion_score(sd: &SpectralDensity, k_max: f64) -> f64 {
    let n = sd.chi_k.len() as f64;
    let overall = sd.chi_k.iter().sum::<f64>() / n;
    let (sum, count) = sd
        .chi_k
        .iter()
        .zip(&sd.k_grid)
        .filter(|(_, k)| **k <= k_max)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    (sum / count as f64) / overall
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionEstimate {
    pub n_points: usize,
    pub r0: f64,
    pub connected: u64,
    pub samples: u64,
    pub fraction: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

fn wilson(k: u64, n: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let den = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn torus_dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let w = |d: f64| {
        let d = d.abs();
        d.min(1.0 - d)
    };
    let dx = w(a[0] - b[0]);
    let dy = w(a[1] - b[1]);
    dx * dx + dy * dy
}

/// Monte-Carlo fraction of N-point configurations on the unit torus (first
/// point at the origin, the rest uniform) that form one cluster under the
/// |r| ≤ r0 adjacency. `side` sets the sampling lattice: points are drawn at
/// cell centres of a side × side grid, or continuously when `side` is 0.
pub fn connected_fraction(side: usize, r0: f64, n_points: usize, samples: u64, seed: u64) -> Result<FractionEstimate> {
    if n_points < 2 {
        return param("need at least two points");
    }
    if !(r0 > 0.0) {
        return param("adjacency radius must be positive");
    }
    if samples == 0 {
        return param("need at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2 = r0 * r0;
    let mut pts = vec![[0.0; 2]; n_points];
    let mut seen = vec![false; n_points];
    let mut stack = Vec::with_capacity(n_points);
    let mut connected = 0;
    for _ in 0..samples {
        for p in pts.iter_mut().skip(1) {
            *p = if side == 0 {
                [rng.random::<f64>(), rng.random::<f64>()]
            } else {
                let h = 1.0 / side as f64;
                [rng.random_range(0..side) as f64 * h, rng.random_range(0..side) as f64 * h]
            };
        }
        seen.iter_mut().for_each(|s| *s = false);
        seen[0] = true;
        stack.clear();
        stack.push(0);
        let mut reached = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n_points {
                if !seen[j] && torus_dist2(pts[i], pts[j]) <= r2 {
                    seen[j] = true;
                    reached += 1;
                    stack.push(j);
                }
            }
        }
        if reached == n_points {
            connected += 1;
        }
    }
    let (ci_low, ci_high) = wilson(connected, samples);
    Ok(FractionEstimate {
        n_points,
        r0,
        connected,
        samples,
        fraction: connected as f64 / samples as f64,
        ci_low,
        ci_high,
    })
}

/// Least-squares slope of ln γ(N) against N.
pub fn log_slope(estimates: &[FractionEstimate]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .map(|e| (e.n_points as f64, e.fraction))
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| p.1 <= 0.0) {
        return param("slope needs at least two estimates with nonzero fraction");
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Sign agreement over the cells where `reference` is nonzero, and the
/// normalized L2 distance ‖a/‖a‖ − b/‖b‖‖ between the two maps.
pub fn compare_maps(candidate: &SensitivityMap, reference: &SensitivityMap) -> Result<(f64, f64)> {
    if candidate.side != reference.side || candidate.space != reference.space {
        return param("maps differ in grid or space");
    }
    let mut agree = 0usize;
    let mut count = 0usize;
    for (a, b) in candidate.values.iter().zip(&reference.values) {
        if *b != 0.0 {
            count += 1;
            if a.signum() == b.signum() && *a != 0.0 {
                agree += 1;
            }
        }
    }
    let na = candidate.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = reference.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if count == 0 || na == 0.0 || nb == 0.0 {
        return param("cannot compare against an all-zero map");
    }
    let dist = candidate
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a / na - b / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((agree as f64 / count as f64, dist))
}

/// Min/max normalization applied to a PGM export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    /// Grey level = round(255·(value − min)/(max − min)); 0 everywhere when max = min.
    pub rule: String,
}

impl SensitivityMap {
    /// Coordinate of array index `i`: displacement r (cell units × h) or wave vector k.
    pub fn coordinate(&self, i: usize) -> [f64; 2] {
        match self.space {
            MapSpace::Real => {
                let h = 1.0 / self.side as f64;
                [min_image(i % self.side, self.side) as f64 * h, min_image(i / self.side, self.side) as f64 * h]
            }
            MapSpace::Fourier => k_vector(i, self.side),
        }
    }

    pub fn to_csv(&self) -> String {
        let (a, b) = match self.space {
            MapSpace::Real => ("rx", "ry"),
            MapSpace::Fourier => ("kx", "ky"),
        };
        let mut s = format!("{a},{b},value\n");
        for (i, v) in self.values.iter().enumerate() {
            let c = self.coordinate(i);
            s.push_str(&format!("{},{},{:e}\n", c[0], c[1], v));
        }
        s
    }

    /// 8-bit binary PGM with the origin moved to the image centre, plus the
    /// normalization record.
    pub fn to_pgm(&self) -> (Vec<u8>, Normalization) {
        render_pgm(self.side, &self.values)
    }
}

/// PGM rendering of a square map in displacement-array layout; see
/// [`SensitivityMap::to_pgm`].
pub fn render_pgm(side: usize, values: &[f64]) -> (Vec<u8>, Normalization) {
    let n = side;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm = Normalization {
        min,
        max,
        rule: "grey = round(255*(value-min)/(max-min)), 0 if max == min; origin at pixel (side/2, side/2)".into(),
    };
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for row in 0..n {
        // Top row of the image is the largest y.
        let y = (n - 1 - row + n / 2) % n;
        for col in 0..n {
            let x = (col + n / 2) % n;
            let v = values[y * n + x];
            let g = if max > min { (255.0 * (v - min) / (max - min)).round() as u8 } else { 0 };
            out.push(g);
        }
    }
    (out, norm)
}

/// Read back a map written by [`SensitivityMap::to_csv`]: (space, side,
/// values in displacement-array layout). Rows may come in any order.
pub fn parse_map_csv(text: &str) -> Result<(MapSpace, usize, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let space = match lines.next().map(str::trim) {
        Some("rx,ry,value") => MapSpace::Real,
        Some("kx,ky,value") => MapSpace::Fourier,
        other => return Err(NceError::Format(format!("unexpected map header {other:?}"))),
    };
    let rows: Vec<[f64; 3]> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
                .map_err(|e| NceError::Format(format!("bad map row {l:?}: {e}")))?;
            match f.as_slice() {
                [a, b, c] => Ok([*a, *b, *c]),
                _ => Err(NceError::Format(format!("map row {l:?} needs three columns"))),
            }
        })
        .collect::<Result<_>>()?;
    let side = (rows.len() as f64).sqrt().round() as usize;
    if side == 0 || side * side != rows.len() {
        return Err(NceError::Format(format!("{} rows do not form a square map", rows.len())));
    }
    let unit = match space {
        MapSpace::Real => 1.0 / side as f64,
        MapSpace::Fourier => 2.0 * std::f64::consts::PI,
    };
    let mut values = vec![f64::NAN; side * side];
    for [a, b, v] in rows {
        let wrap = |c: f64| ((c / unit).round() as i64).rem_euclid(side as i64) as usize;
        let i = wrap(b) * side + wrap(a);
        if !values[i].is_nan() {
            return Err(NceError::Format(format!("duplicate map coordinate ({a}, {b})")));
        }
        values[i] = v;
    }
    Ok((space, side, values))
}
