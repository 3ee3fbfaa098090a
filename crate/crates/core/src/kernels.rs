//! Medium description, contrast parameter and the closed-form PDE kernels:
//! the Hessian of the 2-D Laplace Green's function (conduction) and the 2-D
//! dyadic Helmholtz Green's function (waves).

use crate::error::{param, NceError, Result};
use crate::linalg::Mat2;
use crate::special::hankel1_upto;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediumKind {
    Conduction,
    Wave,
}

/// Phase properties of a two-phase medium. `prop0`/`prop1` are σ₀/σ₁ for
/// conduction and ε₀/ε₁ for waves; `k0` is the reference-phase wave number in
/// radians per unit domain edge (0 for conduction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub kind: MediumKind,
    #[serde(default = "two")]
    pub d: usize,
    pub prop0: f64,
    pub prop1: f64,
    #[serde(default)]
    pub k0: f64,
}

fn two() -> usize {
    2
}

impl MediumSpec {
    pub fn conduction(sigma0: f64, sigma1: f64) -> Self {
        MediumSpec { kind: MediumKind::Conduction, d: 2, prop0: sigma0, prop1: sigma1, k0: 0.0 }
    }

    pub fn wave(eps0: f64, eps1: f64, k0: f64) -> Self {
        MediumSpec { kind: MediumKind::Wave, d: 2, prop0: eps0, prop1: eps1, k0 }
    }

    /// Total solid angle Ω_d.
    pub fn omega_d(&self) -> f64 {
        match self.d {
            2 => 2.0 * PI,
            3 => 4.0 * PI,
            _ => f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != 2 {
            return param(format!("only d = 2 is supported, got {}", self.d));
        }
        if !(self.prop0 > 0.0) || !self.prop1.is_finite() {
            return param("reference-phase property must be positive and both finite");
        }
        match self.kind {
            MediumKind::Conduction if self.k0 != 0.0 => param("conduction requires k0 = 0"),
            MediumKind::Wave if !(self.k0 > 0.0) => param("wave media require k0 > 0"),
            _ => Ok(()),
        }
    }
}

/// β = (p₁ − p₀) / (p₁ + (d−1) p₀).
pub fn contrast_beta(spec: &MediumSpec) -> Result<f64> {
    let den = spec.prop1 + (spec.d as f64 - 1.0) * spec.prop0;
    if den == 0.0 {
        return Err(NceError::SingularContrast);
    }
    Ok((spec.prop1 - spec.prop0) / den)
}

fn unit_and_radius(r: [f64; 2]) -> Result<([f64; 2], f64)> {
    let rr = r[0].hypot(r[1]);
    if rr == 0.0 {
        return Err(NceError::Cavity);
    }
    Ok(([r[0] / rr, r[1] / rr], rr))
}

/// H(r) = (d·nnᵀ − I) / (Ω_d σ₀ r^d), the Hessian of the Laplace Green's function.
pub fn conduction_kernel(r: [f64; 2], sigma0: f64) -> Result<Mat2> {
    let (n, rr) = unit_and_radius(r)?;
    let s = 1.0 / (2.0 * PI * sigma0 * rr * rr);
    Ok(Mat2::real(
        (2.0 * n[0] * n[0] - 1.0) * s,
        2.0 * n[0] * n[1] * s,
        2.0 * n[1] * n[0] * s,
        (2.0 * n[1] * n[1] - 1.0) * s,
    ))
}

/// G(r) = −ln(r) / (2π σ₀).
pub fn laplace_green(r: f64, sigma0: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(NceError::Cavity);
    }
    Ok(-r.ln() / (2.0 * PI * sigma0))
}

/// H⁽⁰⁾_ij(r) = (i/4ε₀)[(k₀²𝓗₀ − (k₀/r)𝓗₁)δ_ij + k₀²𝓗₂ n_i n_j], 𝓗_ν = 𝓗⁽¹⁾_ν(k₀r).
pub fn helmholtz_green(r: [f64; 2], eps0: f64, k0: f64) -> Result<Mat2> {
    let (n, rr) = unit_and_radius(r)?;
    let h = hankel1_upto(2, k0 * rr)?;
    let pre = Complex64::new(0.0, 1.0 / (4.0 * eps0));
    let iso = pre * (h[0] * (k0 * k0) - h[1] * (k0 / rr));
    let aniso = pre * h[2] * (k0 * k0);
    Ok(Mat2::scalar(iso) + Mat2::outer(n, n) * aniso)
}

/// T = Ω_d p₀ H for either medium kind.
pub fn t_kernel(r: [f64; 2], spec: &MediumSpec) -> Result<Mat2> {
    let h = match spec.kind {
        MediumKind::Conduction => conduction_kernel(r, spec.prop0)?,
        MediumKind::Wave => helmholtz_green(r, spec.prop0, spec.k0)?,
    };
    Ok(h * (spec.omega_d() * spec.prop0))
}

/// Anything that can supply the series kernel T(r) at a nonzero displacement.
pub trait KernelEval: Sync {
    fn t(&self, r: [f64; 2]) -> Result<Mat2>;
}

/// The closed-form kernel of a medium.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticKernel(pub MediumSpec);

impl KernelEval for AnalyticKernel {
    fn t(&self, r: [f64; 2]) -> Result<Mat2> {
        t_kernel(r, &self.0)
    }
}

/// A kernel that is identically zero.
#[derive(Clone, Copy, Debug)]
pub struct ZeroKernel;

impl KernelEval for ZeroKernel {
    fn t(&self, r: [f64; 2]) -> Result<Mat2> {
        unit_and_radius(r)?;
        Ok(Mat2::ZERO)
    }
}
