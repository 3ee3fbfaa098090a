//! Square 2-D FFTs on row-major `side × side` buffers (index `y * side + x`).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// A pair of forward/inverse plans for one grid side.
pub struct Fft2 {
    side: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            side,
            fwd: planner.plan_fft_forward(side),
            inv: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.fwd);
    }

    /// Inverse transform including the 1/G normalization, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inv);
        let s = 1.0 / (self.side * self.side) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.side;
        assert_eq!(buf.len(), n * n, "buffer is not side²");
        plan.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = buf[y * n + x];
            }
            plan.process(&mut col);
            for y in 0..n {
                buf[y * n + x] = col[y];
            }
        }
    }
}

pub fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&a| Complex64::new(a, 0.0)).collect()
}

/// Signed minimum-image offset of index `i` on a ring of length `side`.
/// Indices up to `side / 2` map to non-negative offsets.
#[inline]
pub fn min_image(i: usize, side: usize) -> i64 {
    if i <= side / 2 {
        i as i64
    } else {
        i as i64 - side as i64
    }
}

/// Wrap a signed offset back onto `0..side`.
#[inline]
pub fn wrap(d: i64, side: usize) -> usize {
    d.rem_euclid(side as i64) as usize
}
