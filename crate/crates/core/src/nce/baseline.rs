use serde::{Deserialize, Serialize};

use super::objective::Dataset;
use crate::correlations::total_correlation_2;
use crate::error::{param, Result};
use crate::kernels::MediumKind;
use crate::linalg::{cholesky_solve, Mat2};
use crate::sce::EffectiveTensor;

/// Linear map from flattened χ(r) to the four entries of Re σₑ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub side: usize,
    pub kind: MediumKind,
    pub mean_x: Vec<f64>,
    pub mean_y: [f64; 4],
    /// Row-major (cell, entry).
    pub weights: Vec<f64>,
}

/// Centered ridge regression solved in dual form. `lambda` is relative to
/// the mean squared norm of the centered feature vectors.
pub fn baseline_ridge(ds: &Dataset, lambda: f64) -> Result<RidgeModel> {
    if ds.records.len() < 2 {
        return param("ridge regression needs at least two records");
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return param("ridge strength must be positive");
    }
    let side = ds.records[0].corrs.side;
    if ds.records.iter().any(|r| r.corrs.side != side) {
        return param("records have mixed grid sides");
    }
    let g = side * side;
    let n = ds.records.len();
    let xs: Vec<Vec<f64>> = ds.records.iter().map(|r| total_correlation_2(&r.corrs)).collect();
    let ys: Vec<[f64; 4]> = ds
        .records
        .iter()
        .map(|r| {
            let e = r.target.m.re().entries();
            [e[0].re, e[1].re, e[2].re, e[3].re]
        })
        .collect();
    let mut mean_x = vec![0.0; g];
    for x in &xs {
        for (m, v) in mean_x.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    let mut mean_y = [0.0; 4];
    for y in &ys {
        for k in 0..4 {
            mean_y[k] += y[k] / n as f64;
        }
    }
    let xc: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().zip(&mean_x).map(|(a, b)| a - b).collect()).collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum();
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let mean_norm = (0..n).map(|i| gram[i * n + i]).sum::<f64>() / n as f64;
    let reg = lambda * mean_norm.max(f64::MIN_POSITIVE);
    for i in 0..n {
        gram[i * n + i] += reg;
    }
    let mut dual = vec![0.0; n * 4];
    for i in 0..n {
        for k in 0..4 {
            dual[i * 4 + k] = ys[i][k] - mean_y[k];
        }
    }
    cholesky_solve(&mut gram, n, &mut dual)?;
    let mut weights = vec![0.0; g * 4];
    for i in 0..n {
        for (c, x) in xc[i].iter().enumerate() {
            for k in 0..4 {
                weights[c * 4 + k] += x * dual[i * 4 + k];
            }
        }
    }
    Ok(RidgeModel { side, kind: ds.spec.kind, mean_x, mean_y, weights })
}

impl RidgeModel {
    pub fn predict(&self, chi: &[f64]) -> Result<EffectiveTensor> {
        if chi.len() != self.side * self.side {
            return param("χ array does not match the model grid");
        }
        let mut y = self.mean_y;
        for (c, (x, m)) in chi.iter().zip(&self.mean_x).enumerate() {
            let d = x - m;
            for k in 0..4 {
                y[k] += d * self.weights[c * 4 + k];
            }
        }
        Ok(EffectiveTensor { m: Mat2::real(y[0], y[1], y[2], y[3]), kind: self.kind })
    }

    /// ∂(uᵀσₑu)/∂χ(r) per cell, in the grid layout.
    pub fn input_gradient(&self, u: [f64; 2]) -> Vec<f64> {
        let w = [u[0] * u[0], u[0] * u[1], u[1] * u[0], u[1] * u[1]];
        self.weights.chunks(4).map(|c| (0..4).map(|k| w[k] * c[k]).sum()).collect()
    }
}
