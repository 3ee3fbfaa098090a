//! Two- and three-point correlation functions, total correlations and the
//! spectral density, all on the periodic grid.
//!
//! Displacement arrays follow the field layout: entry `y * side + x` holds
//! the value at displacement (x, y), with negative offsets wrapped.

use crate::error::{param, NceError, Result};
use crate::fft::{min_image, to_complex, wrap, Fft2};
use crate::gridfield::{volume_fraction, Microstructure};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Sparse S₃ table over configurations {0, r₁, r₂} with both offsets inside
/// a disk of `radius` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct S3Table {
    radius: i64,
    offsets: Vec<[i64; 2]>,
    /// Position of each (dx, dy) in `offsets`, over the (2R+1)² bounding box.
    lookup: Vec<Option<usize>>,
    /// `values[i * n + j]` is S₃(0, offsets[i], offsets[j]).
    values: Vec<f64>,
}

impl S3Table {
    fn empty(radius: i64) -> Self {
        let w = (2 * radius + 1) as usize;
        let mut offsets = Vec::new();
        let mut lookup = vec![None; w * w];
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    lookup[((dy + radius) as usize) * w + (dx + radius) as usize] = Some(offsets.len());
                    offsets.push([dx, dy]);
                }
            }
        }
        let n = offsets.len();
        S3Table { radius, offsets, lookup, values: vec![0.0; n * n] }
    }

    pub fn radius_cells(&self) -> i64 {
        self.radius
    }

    /// All offsets in the window, ordered by dy then dx.
    pub fn offsets(&self) -> &[[i64; 2]] {
        &self.offsets
    }

    pub fn index_of(&self, r: [i64; 2]) -> Option<usize> {
        let rr = self.radius;
        if r[0].abs() > rr || r[1].abs() > rr {
            return None;
        }
        let w = (2 * rr + 1) as usize;
        self.lookup[((r[1] + rr) as usize) * w + (r[0] + rr) as usize]
    }

    pub fn get(&self, r1: [i64; 2], r2: [i64; 2]) -> Option<f64> {
        let i = self.index_of(r1)?;
        let j = self.index_of(r2)?;
        Some(self.values[i * self.offsets.len() + j])
    }

    /// Value by offset indices (see [`S3Table::offsets`]).
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.offsets.len() + j]
    }

    /// Build from explicit (r₁, r₂, value) records; missing pairs stay 0.
    pub fn from_records(radius: i64, records: &[([i64; 2], [i64; 2], f64)]) -> Result<Self> {
        let mut t = S3Table::empty(radius);
        let n = t.offsets.len();
        for (r1, r2, v) in records {
            match (t.index_of(*r1), t.index_of(*r2)) {
                (Some(i), Some(j)) => t.values[i * n + j] = *v,
                _ => return Err(NceError::Format(format!("record {r1:?},{r2:?} outside window"))),
            }
        }
        Ok(t)
    }

    pub fn records(&self) -> impl Iterator<Item = ([i64; 2], [i64; 2], f64)> + '_ {
        let n = self.offsets.len();
        (0..n * n).map(move |k| (self.offsets[k / n], self.offsets[k % n], self.values[k]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSet {
    pub side: usize,
    pub phi: f64,
    pub s2: Vec<f64>,
    pub s3: Option<S3Table>,
    pub n_patches: usize,
    /// Window radius as a fraction of the domain edge (0 when no S₃).
    pub window_radius: f64,
}

impl CorrelationSet {
    pub fn cell_size(&self) -> f64 {
        1.0 / self.side as f64
    }

    pub fn order(&self) -> usize {
        if self.s3.is_some() {
            3
        } else {
            2
        }
    }

    /// S₂ at a signed displacement (wrapped onto the torus).
    pub fn s2_at(&self, r: [i64; 2]) -> f64 {
        self.s2[wrap(r[1], self.side) * self.side + wrap(r[0], self.side)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensity {
    pub side: usize,
    /// ΔV-scaled DFT of χ, same layout as the displacement arrays.
    pub chi_k: Vec<f64>,
    /// |k| per bin, k = 2π·(min-image integer frequency).
    pub k_grid: Vec<f64>,
}

/// Wave vector of the DFT bin at index `i` on a `side × side` grid.
pub fn k_vector(i: usize, side: usize) -> [f64; 2] {
    [
        2.0 * PI * min_image(i % side, side) as f64,
        2.0 * PI * min_image(i / side, side) as f64,
    ]
}

/// S₂(r) = (1/G) Σ_j x_j x_{j+r} via FFT autocorrelation.
pub fn two_point(m: &Microstructure) -> Vec<f64> {
    let plan = Fft2::new(m.side());
    two_point_with(&plan, m)
}

fn two_point_with(plan: &Fft2, m: &Microstructure) -> Vec<f64> {
    let mut buf = to_complex(&m.as_f64());
    plan.forward(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex64::new(z.norm_sqr(), 0.0));
    plan.inverse(&mut buf);
    let g = buf.len() as f64;
    buf.iter().map(|z| z.re / g).collect()
}

fn window_cells(side: usize, window_radius: f64) -> Result<i64> {
    if !(window_radius >= 0.0 && window_radius <= 0.5) {
        return param(format!("window radius {window_radius} must lie in [0, 0.5]"));
    }
    Ok((window_radius * side as f64 + 1e-9).floor() as i64)
}

/// Windowed S₃(0, r₁, r₂) = (1/G) Σ_j x_j x_{j+r₁} x_{j+r₂}, one FFT
/// cross-correlation per r₁.
pub fn three_point(m: &Microstructure, window_radius: f64) -> Result<S3Table> {
    let side = m.side();
    let plan = Fft2::new(side);
    three_point_with(&plan, m, window_cells(side, window_radius)?)
}

fn three_point_with(plan: &Fft2, m: &Microstructure, radius: i64) -> Result<S3Table> {
    let side = m.side();
    let g = (side * side) as f64;
    let x = m.as_f64();
    let mut fx = to_complex(&x);
    plan.forward(&mut fx);
    let mut table = S3Table::empty(radius);
    let n = table.offsets.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); side * side];
    for i in 0..n {
        let [dx, dy] = table.offsets[i];
        for yy in 0..side {
            let ys = wrap(yy as i64 + dy, side);
            for xx in 0..side {
                let xs = wrap(xx as i64 + dx, side);
                buf[yy * side + xx] = Complex64::new(x[yy * side + xx] * x[ys * side + xs], 0.0);
            }
        }
        plan.forward(&mut buf);
        for (b, f) in buf.iter_mut().zip(&fx) {
            *b = b.conj() * f;
        }
        plan.inverse(&mut buf);
        for j in 0..n {
            let [ex, ey] = table.offsets[j];
            table.values[i * n + j] = buf[wrap(ey, side) * side + wrap(ex, side)].re / g;
        }
    }
    Ok(table)
}

/// Patch-averaged correlations. `order` 2 skips S₃.
pub fn average_correlations(
    patches: &[Microstructure],
    order: usize,
    window_radius: f64,
) -> Result<CorrelationSet> {
    let first = patches.first().ok_or_else(|| NceError::Param("empty patch list".into()))?;
    let side = first.side();
    if patches.iter().any(|p| p.side() != side) {
        return param("patches have mixed sides");
    }
    if order != 2 && order != 3 {
        return param(format!("order must be 2 or 3, got {order}"));
    }
    let radius = window_cells(side, window_radius)?;
    let plan = Fft2::new(side);
    let mut s2 = vec![0.0; side * side];
    let mut s3: Option<S3Table> = None;
    let mut phi = 0.0;
    for p in patches {
        phi += volume_fraction(p);
        for (a, b) in s2.iter_mut().zip(two_point_with(&plan, p)) {
            *a += b;
        }
        if order == 3 {
            let t = three_point_with(&plan, p, radius)?;
            match s3.as_mut() {
                None => s3 = Some(t),
                Some(acc) => acc.values.iter_mut().zip(&t.values).for_each(|(a, b)| *a += b),
            }
        }
    }
    let inv = 1.0 / patches.len() as f64;
    s2.iter_mut().for_each(|v| *v *= inv);
    if let Some(t) = s3.as_mut() {
        t.values.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(CorrelationSet {
        side,
        phi: phi * inv,
        s2,
        s3,
        n_patches: patches.len(),
        window_radius: if order == 3 { window_radius } else { 0.0 },
    })
}

/// χ(r) = S₂(r) − φ².
pub fn total_correlation_2(cs: &CorrelationSet) -> Vec<f64> {
    let p2 = cs.phi * cs.phi;
    cs.s2.iter().map(|v| v - p2).collect()
}

/// Δ₃(r₁, r₂) = S₂(r₁)·S₂(r₂ − r₁) − φ·S₃(0, r₁, r₂).
pub fn total_correlation_3(cs: &CorrelationSet, r1: [i64; 2], r2: [i64; 2]) -> Result<f64> {
    let s3 = cs
        .s3
        .as_ref()
        .and_then(|t| t.get(r1, r2))
        .ok_or_else(|| NceError::Lookup(format!("no S₃ entry for {r1:?}, {r2:?}")))?;
    Ok(cs.s2_at(r1) * cs.s2_at([r2[0] - r1[0], r2[1] - r1[1]]) - cs.phi * s3)
}

/// ΔV-scaled DFT of χ, approximating the continuum transform χ̃(k). With
/// bin area Δk = (2π)², Parseval reads Σ_k χ̃(k)²·Δk = (2π)²·Σ_r χ(r)²·ΔV.
pub fn spectral_density(cs: &CorrelationSet) -> SpectralDensity {
    let side = cs.side;
    let dv = cs.cell_size() * cs.cell_size();
    let mut buf = to_complex(&total_correlation_2(cs));
    Fft2::new(side).forward(&mut buf);
    SpectralDensity {
        side,
        chi_k: buf.iter().map(|z| z.re * dv).collect(),
        k_grid: (0..side * side)
            .map(|i| {
                let k = k_vector(i, side);
                (k[0] * k[0] + k[1] * k[1]).sqrt()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_two_by_two() {
        let m = Microstructure::from_cells(2, vec![1, 0, 0, 0]).unwrap();
        let s2 = two_point(&m);
        assert!((s2[0] - 0.25).abs() < 1e-15);
        assert!(s2[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn degenerate_three_point_configurations() {
        let m = crate::gridfield::generate_gaussian_levelset(5, 16, 0.1, 0.1, 0.4).unwrap();
        let s2 = two_point(&m);
        let t = three_point(&m, 0.25).unwrap();
        let phi = volume_fraction(&m);
        assert!((t.get([0, 0], [0, 0]).unwrap() - phi).abs() < 1e-12);
        for &r in t.offsets() {
            let want = s2[wrap(r[1], 16) * 16 + wrap(r[0], 16)];
            assert!((t.get(r, [0, 0]).unwrap() - want).abs() < 1e-12);
        }
        assert!(three_point(&m, 0.6).is_err());
    }

    #[test]
    fn delta3_vanishes_on_diagonal_and_for_full_phase() {
        let m = crate::gridfield::generate_gaussian_levelset(5, 16, 0.1, 0.1, 0.4).unwrap();
        let cs = average_correlations(&[m], 3, 0.25).unwrap();
        for &r in cs.s3.as_ref().unwrap().offsets() {
            assert!(total_correlation_3(&cs, r, r).unwrap().abs() < 1e-14);
        }
        let ones = Microstructure::filled(8, 1).unwrap();
        let cs = average_correlations(&[ones], 3, 0.25).unwrap();
        assert_eq!(total_correlation_3(&cs, [1, 0], [0, 2]).unwrap(), 0.0);
        assert!(matches!(total_correlation_3(&cs, [5, 0], [0, 0]), Err(NceError::Lookup(_))));
    }

    #[test]
    fn average_of_duplicates_is_idempotent() {
        let m = crate::gridfield::generate_gaussian_levelset(2, 16, 0.1, 0.2, 0.5).unwrap();
        let one = average_correlations(std::slice::from_ref(&m), 3, 0.2).unwrap();
        let three = average_correlations(&[m.clone(), m.clone(), m], 3, 0.2).unwrap();
        for (a, b) in one.s2.iter().zip(&three.s2) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(three.n_patches, 3);
        assert!(average_correlations(&[], 2, 0.0).is_err());
    }

    #[test]
    fn spectral_density_of_flat_chi_is_zero() {
        let cs = average_correlations(&[Microstructure::filled(8, 1).unwrap()], 2, 0.0).unwrap();
        assert!(spectral_density(&cs).chi_k.iter().all(|v| v.abs() < 1e-15));
    }
}
