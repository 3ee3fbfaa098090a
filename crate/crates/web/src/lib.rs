//! Browser demo: generate a field, compare the strong-contrast prediction
//! with the full solve, and draw the analytic S₂ sensitivity map.
//!
//! [`Demo`] holds the current field. The same methods run natively, which is
//! how the tests drive them.

use nce_core::correlations::{average_correlations, CorrelationSet};
use nce_core::gridfield::{generate_gaussian_levelset, volume_fraction, Microstructure};
use nce_core::kernels::{AnalyticKernel, MediumSpec};
use nce_core::sce::{predict, SeriesConfig};
use nce_core::sensitivity::{sensitivity_s2, KernelSource, Part};
use nce_core::solvers::effective_conductivity;
use wasm_bindgen::prelude::*;

const SIGMA0: f64 = 5.0;
const SIGMA1: f64 = 20.0;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    field: Microstructure,
    corrs: CorrelationSet,
}

#[wasm_bindgen]
impl Demo {
    /// Gaussian level-set field; lengths are fractions of the domain edge.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, side: usize, corr_len_x: f64, corr_len_y: f64, phi: f64) -> Result<Demo, JsError> {
        let field = generate_gaussian_levelset(seed, side, corr_len_x, corr_len_y, phi).map_err(js)?;
        let corrs = average_correlations(std::slice::from_ref(&field), 2, 0.1).map_err(js)?;
        Ok(Demo { field, corrs })
    }

    pub fn side(&self) -> usize {
        self.field.side()
    }

    pub fn volume_fraction(&self) -> f64 {
        volume_fraction(&self.field)
    }

    /// Grey RGBA pixels of the field, phase 1 dark, top row = largest y.
    pub fn field_rgba(&self) -> Vec<u8> {
        let n = self.field.side();
        let cells = self.field.cells();
        let mut out = Vec::with_capacity(4 * n * n);
        for row in 0..n {
            for x in 0..n {
                let g = if cells[(n - 1 - row) * n + x] == 1 { 40 } else { 230 };
                out.extend_from_slice(&[g, g, g, 255]);
            }
        }
        out
    }

    /// `[sce_xx, sce_yy, solver_xx, solver_yy]` for σ₀ = 5, σ₁ = 20.
    pub fn compare(&self, cavity_radius_cells: usize) -> Result<Vec<f64>, JsError> {
        let spec = MediumSpec::conduction(SIGMA0, SIGMA1);
        let cfg = SeriesConfig { cavity_radius_cells, ..SeriesConfig::order(2) };
        let sce = predict(&self.corrs, &spec, &AnalyticKernel(spec), &cfg).map_err(js)?;
        let solved = effective_conductivity(&self.field, SIGMA0, SIGMA1, 1e-8).map_err(js)?;
        Ok(vec![sce.m.get(0, 0).re, sce.m.get(1, 1).re, solved.m.get(0, 0).re, solved.m.get(1, 1).re])
    }

    /// Analytic sensitivity of uᵀΣₑu to S₂ along angle `theta`, as RGBA
    /// pixels centred on r = 0: red positive, blue negative, scaled by the
    /// largest magnitude.
    pub fn sensitivity_rgba(&self, theta: f64) -> Result<Vec<u8>, JsError> {
        let spec = MediumSpec::conduction(SIGMA0, SIGMA1);
        let map = sensitivity_s2(
            &AnalyticKernel(spec),
            KernelSource::Analytic,
            &spec,
            &self.corrs,
            theta,
            Part::Re,
            &SeriesConfig::order(2),
        )
        .map_err(js)?;
        let n = map.side;
        let peak = map.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut out = Vec::with_capacity(4 * n * n);
        for row in 0..n {
            let y = (n + n / 2 - row) % n;
            for col in 0..n {
                let v = map.values[y * n + (col + n / 2) % n];
                // Square-root stretch keeps the r⁻² tail visible.
                let t = if peak > 0.0 { (v / peak).signum() * (v.abs() / peak).sqrt() } else { 0.0 };
                let fade = (255.0 * (1.0 - t.abs())) as u8;
                out.extend_from_slice(&if t >= 0.0 { [255, fade, fade, 255] } else { [fade, fade, 255, 255] });
            }
        }
        Ok(out)
    }
}
