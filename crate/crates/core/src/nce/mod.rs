//! Neural contrast expansion: a learnable Bessel–Fourier kernel that stands
//! in for the analytic PDE kernel inside the strong-contrast series, its
//! physics-regularized loss, analytic gradients and training loop, plus a
//! ridge-regression baseline on flattened χ.

mod baseline;
mod model;
mod objective;
mod project;
mod train;

pub use baseline::{baseline_ridge, RidgeModel};
pub use model::{KernelKind, KernelModel, ModelEval, ModelGrid};
pub use objective::{gradient, loss, Dataset, LossBreakdown, ModelGradient, Record};
pub use project::project_analytic;
pub use train::{nce_predict, train, train_from, EpochRecord, KernelInit, TrainConfig, TrainingHistory};
