//! Strong-contrast expansion (SCE) for bi-phase periodic random media, with a
//! learnable Bessel–Fourier kernel that replaces the analytic PDE kernel.
//!
//! The pipeline is: [`gridfield`] generates binary microstructures,
//! [`correlations`] estimates their 2- and 3-point statistics, [`sce`] turns
//! those statistics into an effective tensor through a kernel from
//! [`kernels`] or [`nce`], and [`solvers`] provides full-field ground truth.
//! [`sensitivity`] differentiates the order-2 predictor with respect to S₂.

pub mod correlations;
pub mod error;
pub mod fft;
pub mod gridfield;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod nce;
pub mod sce;
pub mod sensitivity;
pub mod solvers;
pub mod special;

pub use error::{NceError, Result};
pub use linalg::Mat2;
