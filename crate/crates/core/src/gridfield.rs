//! Binary bi-phase microstructures on a periodic unit-square grid.
//!
//! Cells are stored row-major with index `y * side + x`; value 1 marks the
//! contrast (inclusion) phase and 0 the reference (matrix) phase. All
//! randomness comes from `ChaCha8Rng::seed_from_u64`, whose output stream is
//! fixed across platforms and crate versions of the 0.9 line.

use crate::error::{param, Result};
use crate::fft::{min_image, to_complex, Fft2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub seed: u64,
    pub corr_len_x: f64,
    pub corr_len_y: f64,
    pub target_phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Microstructure {
    side: usize,
    cells: Vec<u8>,
    pub meta: Option<GenerationMeta>,
}

impl Microstructure {
    pub fn from_cells(side: usize, cells: Vec<u8>) -> Result<Self> {
        if side == 0 {
            return param("side must be positive");
        }
        if cells.len() != side * side {
            return param(format!("expected {} cells, got {}", side * side, cells.len()));
        }
        if cells.iter().any(|&c| c > 1) {
            return param("cell values must be 0 or 1");
        }
        Ok(Microstructure { side, cells, meta: None })
    }

    pub fn filled(side: usize, value: u8) -> Result<Self> {
        Self::from_cells(side, vec![value; side * side])
    }

    /// Stripes varying along x: columns `x < side/2` hold the contrast phase.
    pub fn laminate_x(side: usize) -> Result<Self> {
        Self::from_fn(side, |x, _| (x < side / 2) as u8)
    }

    /// Checkerboard of `block × block` squares.
    pub fn checkerboard(side: usize, block: usize) -> Result<Self> {
        if block == 0 || side % (2 * block) != 0 {
            return param("side must be a multiple of 2·block");
        }
        Self::from_fn(side, |x, y| ((x / block + y / block) % 2) as u8)
    }

    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let cells = (0..side * side).map(|i| f(i % side, i / side)).collect();
        Self::from_cells(side, cells)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.side as f64
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.cells[y * self.side + x]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Cyclic shift: the new cell (x, y) is the old cell (x - dx, y - dy).
    pub fn shifted(&self, dx: i64, dy: i64) -> Self {
        let s = self.side as i64;
        let mut m = Self::from_fn(self.side, |x, y| {
            self.get(
                (x as i64 - dx).rem_euclid(s) as usize,
                (y as i64 - dy).rem_euclid(s) as usize,
            )
        })
        .expect("valid shape");
        m.meta = self.meta.clone();
        m
    }

    /// Swap the x and y axes.
    pub fn transposed(&self) -> Self {
        Self::from_fn(self.side, |x, y| self.get(y, x)).expect("valid shape")
    }

    /// Counter-clockwise quarter turn about the origin of the torus:
    /// the cell at (x, y) moves to (−y, x).
    pub fn rotated90(&self) -> Self {
        let s = self.side;
        Self::from_fn(s, |x, y| self.get(y, (s - x) % s)).expect("valid shape")
    }
}

/// Fraction of cells in the contrast phase.
pub fn volume_fraction(m: &Microstructure) -> f64 {
    m.count_ones() as f64 / m.cells.len() as f64
}

fn check_generation(side: usize, phi: f64) -> Result<()> {
    if side < 4 || !side.is_power_of_two() {
        return param(format!("side must be a power of two ≥ 4, got {side}"));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return param(format!("phi must lie in (0, 1), got {phi}"));
    }
    Ok(())
}

/// Gaussian level-set field: white noise, anisotropic Gaussian low-pass
/// filter, then a quantile threshold that fixes the ones count to
/// round(phi·G).
pub fn generate_gaussian_levelset(
    seed: u64,
    side: usize,
    corr_len_x: f64,
    corr_len_y: f64,
    phi: f64,
) -> Result<Microstructure> {
    check_generation(side, phi)?;
    for (name, l) in [("corr_len_x", corr_len_x), ("corr_len_y", corr_len_y)] {
        if !(l > 0.0 && l < 1.0) {
            return param(format!("{name} must lie in (0, 1), got {l}"));
        }
    }
    let noise = white_noise(seed, side);
    let plan = Fft2::new(side);
    let mut buf = to_complex(&noise);
    plan.forward(&mut buf);
    for y in 0..side {
        let ky = 2.0 * PI * min_image(y, side) as f64;
        for x in 0..side {
            let kx = 2.0 * PI * min_image(x, side) as f64;
            let w = (-(kx * kx * corr_len_x * corr_len_x + ky * ky * corr_len_y * corr_len_y) / 2.0).exp();
            buf[y * side + x] *= w;
        }
    }
    plan.inverse(&mut buf);
    let field: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let mut m = threshold_top(side, &field, phi);
    m.meta = Some(GenerationMeta { seed, corr_len_x, corr_len_y, target_phi: phi });
    Ok(m)
}

/// Binary field whose spectral density is pushed towards zero for
/// 0 < |k| ≤ `k_exclusion` (radians per unit length). Starting from a
/// thresholded white-noise field, `iterations` sweeps of G random
/// phase-1/phase-0 swap proposals are made, each kept only if it lowers
/// Σ |m̂(k)|² over the exclusion disk. The ones count never changes.
pub fn generate_spectral_shaped(
    seed: u64,
    side: usize,
    phi: f64,
    k_exclusion: f64,
    iterations: usize,
) -> Result<Microstructure> {
    check_generation(side, phi)?;
    if !(k_exclusion >= 0.0) {
        return param("exclusion radius must be non-negative");
    }
    let mut m = threshold_top(side, &white_noise(seed, side), phi);
    let mut disk = Vec::new();
    for y in 0..side {
        for x in 0..side {
            let (mx, my) = (min_image(x, side), min_image(y, side));
            let k = 2.0 * PI * ((mx * mx + my * my) as f64).sqrt();
            if k > 0.0 && k <= k_exclusion {
                disk.push((x, y));
            }
        }
    }
    if disk.is_empty() {
        return Ok(m);
    }
    let roots: Vec<Complex64> = (0..side).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / side as f64)).collect();
    let phase = |k: (usize, usize), cell: usize| roots[(k.0 * (cell % side) + k.1 * (cell / side)) % side];
    let mut amp: Vec<Complex64> = disk
        .iter()
        .map(|&k| (0..side * side).filter(|&c| m.cells[c] == 1).map(|c| phase(k, c)).sum())
        .collect();
    let g = side * side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let mut trial = vec![Complex64::new(0.0, 0.0); disk.len()];
    for _ in 0..iterations * g {
        let a = rng.random_range(0..g);
        let b = rng.random_range(0..g);
        if m.cells[a] == m.cells[b] {
            continue;
        }
        let (one, zero) = if m.cells[a] == 1 { (a, b) } else { (b, a) };
        let mut before = 0.0;
        let mut after = 0.0;
        for (t, (&k, f)) in trial.iter_mut().zip(disk.iter().zip(&amp)) {
            *t = f + phase(k, zero) - phase(k, one);
            before += f.norm_sqr();
            after += t.norm_sqr();
        }
        if after < before {
            amp.copy_from_slice(&trial);
            m.cells[one] = 0;
            m.cells[zero] = 1;
        }
    }
    Ok(m)
}

fn white_noise(seed: u64, side: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..side * side).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Mark the round(phi·G) largest values as phase 1; ties go to the lower index.
fn threshold_top(side: usize, field: &[f64], phi: f64) -> Microstructure {
    let g = side * side;
    let ones = (phi * g as f64).round() as usize;
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    let mut cells = vec![0u8; g];
    for &i in &order[..ones] {
        cells[i] = 1;
    }
    Microstructure { side, cells, meta: None }
}

/// Cut `count` periodic patches at uniformly random anchors.
pub fn sample_patches(
    m: &Microstructure,
    patch_side: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Microstructure>> {
    if patch_side == 0 || patch_side > m.side {
        return param(format!("patch side {patch_side} must lie in 1..={}", m.side));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = m.side;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let ax = rng.random_range(0..s);
        let ay = rng.random_range(0..s);
        out.push(
            Microstructure::from_fn(patch_side, |x, y| m.get((ax + x) % s, (ay + y) % s))
                .expect("valid shape"),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_volume_fraction_after_threshold() {
        let m = generate_gaussian_levelset(1, 64, 0.05, 0.05, 0.5).unwrap();
        assert_eq!(m.count_ones(), 2048);
        let m = generate_gaussian_levelset(3, 32, 0.1, 0.02, 0.3).unwrap();
        assert_eq!(m.count_ones(), (0.3f64 * 1024.0).round() as usize);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_gaussian_levelset(7, 32, 0.1, 0.2, 0.4).unwrap();
        let b = generate_gaussian_levelset(7, 32, 0.1, 0.2, 0.4).unwrap();
        let c = generate_gaussian_levelset(8, 32, 0.1, 0.2, 0.4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.cells(), c.cells());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_gaussian_levelset(1, 48, 0.1, 0.1, 0.5).is_err());
        assert!(generate_gaussian_levelset(1, 64, 0.0, 0.1, 0.5).is_err());
        assert!(generate_gaussian_levelset(1, 64, 0.1, 1.0, 0.5).is_err());
        assert!(generate_gaussian_levelset(1, 64, 0.1, 0.1, 1.0).is_err());
        assert!(Microstructure::from_cells(2, vec![0, 2, 0, 0]).is_err());
    }

    #[test]
    fn volume_fraction_examples() {
        assert_eq!(volume_fraction(&Microstructure::filled(4, 0).unwrap()), 0.0);
        assert_eq!(volume_fraction(&Microstructure::filled(4, 1).unwrap()), 1.0);
        let m = Microstructure::from_cells(2, vec![1, 0, 0, 0]).unwrap();
        assert_eq!(volume_fraction(&m), 0.25);
    }

    #[test]
    fn full_size_patch_is_cyclic_shift() {
        let m = generate_gaussian_levelset(2, 16, 0.1, 0.1, 0.5).unwrap();
        let p = &sample_patches(&m, 16, 1, 9).unwrap()[0];
        assert_eq!(p.count_ones(), m.count_ones());
        let found = (0..16).any(|dx| (0..16).any(|dy| m.shifted(-dx, -dy).cells() == p.cells()));
        assert!(found);
        assert!(sample_patches(&m, 17, 1, 9).is_err());
    }

    #[test]
    fn rotation_four_times_is_identity() {
        let m = generate_gaussian_levelset(4, 16, 0.05, 0.2, 0.5).unwrap();
        let r = m.rotated90().rotated90().rotated90().rotated90();
        assert_eq!(r.cells(), m.cells());
        assert_eq!(m.rotated90().get(0, 1), m.get(1, 0));
    }
}
