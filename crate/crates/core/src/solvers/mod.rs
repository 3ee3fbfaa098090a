//! Full-field ground truth on the periodic grid: finite-volume conduction and
//! a frequency-domain Helmholtz solve for the dynamic permittivity.

mod conduction;
pub mod krylov;
mod wave;

pub use conduction::{conduction_solve, effective_conductivity};
pub use wave::{effective_permittivity, wave_solve};

use num_complex::Complex64;

/// Iteration cap per unit of grid side.
pub const ITERATIONS_PER_SIDE: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-9;

/// One converged field solve.
#[derive(Clone, Debug)]
pub struct FieldSolution {
    pub side: usize,
    /// Conduction: potential fluctuation φ_per per cell (real). Wave: the
    /// periodic envelope u of H_z = e^{ik·x}u on cell corners.
    pub field: Vec<Complex64>,
    /// Mean flux ⟨J⟩ or ⟨D⟩.
    pub flux_mean: [Complex64; 2],
    /// Mean driving field ⟨E⟩.
    pub field_mean: [Complex64; 2],
    pub residual_norm: f64,
    pub iterations: usize,
}
