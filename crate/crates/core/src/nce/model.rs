use crate::error::{param, NceError, Result};
use crate::kernels::{KernelEval, MediumKind, MediumSpec};
use crate::linalg::Mat2;
use crate::sce::{in_cavity, KernelTable};
use crate::special::bessel_j_upto;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which physical kernel the model stands in for. A Hessian kernel enters the
/// series through the real part of the expansion (conduction kernels are
/// real); a Green kernel enters as the full complex value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Hessian,
    Green,
}

impl KernelKind {
    pub fn for_medium(kind: MediumKind) -> Self {
        match kind {
            MediumKind::Conduction => KernelKind::Hessian,
            MediumKind::Wave => KernelKind::Green,
        }
    }
}

/// Ĥ_ij(r, θ) = r^{−α_env} Σ_{n,m} (C⁽ᴿ⁾ + iC⁽ᴵ⁾)_{ij,n,m} J_n(α_{n,m} r) e^{inθ}.
///
/// Coefficients are stored flat with index `((i·2 + j)·(N+1) + n)·M + m`;
/// `alpha` with index `n·M + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    pub kind: KernelKind,
    pub n_orders: usize,
    pub m_radial: usize,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_env: f64,
    pub spec: MediumSpec,
}

impl KernelModel {
    /// All-zero coefficients, α log-spaced over [π, side·π/4], α_env = `alpha_env`.
    pub fn zeros(spec: MediumSpec, n_max: usize, m_radial: usize, side: usize, alpha_env: f64) -> Self {
        let n_orders = n_max + 1;
        let ncoef = 4 * n_orders * m_radial;
        let lo = PI;
        let hi = (side as f64 * PI / 4.0).max(lo);
        let grid: Vec<f64> = (0..m_radial)
            .map(|m| {
                if m_radial == 1 {
                    lo
                } else {
                    lo * (hi / lo).powf(m as f64 / (m_radial - 1) as f64)
                }
            })
            .collect();
        KernelModel {
            kind: KernelKind::for_medium(spec.kind),
            n_orders,
            m_radial,
            c_re: vec![0.0; ncoef],
            c_im: vec![0.0; ncoef],
            alpha: (0..n_orders).flat_map(|_| grid.iter().copied()).collect(),
            alpha_env,
            spec,
        }
    }

    /// Random start: c ~ N(0, 0.01²)/(m·(n+1)) with 1-based m.
    pub fn init(spec: MediumSpec, n_max: usize, m_radial: usize, side: usize, alpha_env: f64, seed: u64) -> Self {
        let mut km = Self::zeros(spec, n_max, m_radial, side, alpha_env);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1e-2).expect("valid normal");
        for ij in 0..4 {
            for n in 0..km.n_orders {
                for m in 0..m_radial {
                    let k = km.coef_index(ij, n, m);
                    let s = 1.0 / ((m + 1) * (n + 1)) as f64;
                    km.c_re[k] = normal.sample(&mut rng) * s;
                    km.c_im[k] = normal.sample(&mut rng) * s;
                }
            }
        }
        km
    }

    /// Default envelope exponent: r^{−(d+2)} for Hessian kernels, so the
    /// n = 2 modes (J₂ ~ r² at the origin) produce the r^{−d} near field;
    /// 0.5 (Hankel far-field decay) for Green kernels.
    pub fn default_alpha_env(kind: KernelKind, d: usize) -> f64 {
        match kind {
            KernelKind::Hessian => d as f64 + 2.0,
            KernelKind::Green => 0.5,
        }
    }

    #[inline]
    pub fn coef_index(&self, ij: usize, n: usize, m: usize) -> usize {
        (ij * self.n_orders + n) * self.m_radial + m
    }

    pub fn n_max(&self) -> usize {
        self.n_orders - 1
    }

    pub fn validate(&self) -> Result<()> {
        let nc = 4 * self.n_orders * self.m_radial;
        if self.n_orders == 0 || self.m_radial == 0 {
            return param("kernel model needs at least one order and one radial mode");
        }
        if self.c_re.len() != nc || self.c_im.len() != nc || self.alpha.len() != self.n_orders * self.m_radial {
            return param("kernel model arrays have inconsistent shapes");
        }
        if self.alpha.iter().any(|&a| !(a > 0.0)) {
            return param("radial wavenumbers must be positive");
        }
        if !(self.alpha_env >= 0.0) {
            return param("envelope exponent must be non-negative");
        }
        if KernelKind::for_medium(self.spec.kind) != self.kind {
            return param("kernel kind does not match the medium kind");
        }
        Ok(())
    }

    /// Learnable parameters flattened as [c_re, c_im, alpha, alpha_env].
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.c_re);
        p.extend_from_slice(&self.c_im);
        p.extend_from_slice(&self.alpha);
        p.push(self.alpha_env);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nc = self.c_re.len();
        let na = self.alpha.len();
        self.c_re.copy_from_slice(&p[..nc]);
        self.c_im.copy_from_slice(&p[nc..2 * nc]);
        self.alpha.copy_from_slice(&p[2 * nc..2 * nc + na]);
        self.alpha_env = p[2 * nc + na];
    }

    pub fn n_params(&self) -> usize {
        2 * self.c_re.len() + self.alpha.len() + 1
    }

    pub fn n_coefficients(&self) -> usize {
        2 * self.c_re.len()
    }

    /// The literal expansion Ĥ(r) (complex for either kind).
    pub fn eval_kernel(&self, r: [f64; 2]) -> Result<Mat2> {
        let rr = r[0].hypot(r[1]);
        if rr == 0.0 {
            return Err(NceError::Cavity);
        }
        let theta = r[1].atan2(r[0]);
        let env = rr.powf(-self.alpha_env);
        let mut e = [Complex64::new(0.0, 0.0); 4];
        for n in 0..self.n_orders {
            let ph = Complex64::from_polar(1.0, n as f64 * theta);
            for m in 0..self.m_radial {
                let b = bessel_j_upto(n, self.alpha[n * self.m_radial + m] * rr)[n] * env;
                for (ij, v) in e.iter_mut().enumerate() {
                    let k = self.coef_index(ij, n, m);
                    *v += Complex64::new(self.c_re[k], self.c_im[k]) * ph * b;
                }
            }
        }
        Ok(Mat2::from_entries(e))
    }

    /// The kernel as it enters the series: Re Ĥ for Hessian kernels, Ĥ otherwise.
    pub fn eval_series_kernel(&self, r: [f64; 2]) -> Result<Mat2> {
        let h = self.eval_kernel(r)?;
        Ok(match self.kind {
            KernelKind::Hessian => h.re(),
            KernelKind::Green => h,
        })
    }

    /// Scale between Ĥ and the series kernel: T = Ω_d p₀ Ĥ.
    pub fn t_scale(&self) -> f64 {
        self.spec.omega_d() * self.spec.prop0
    }
}

impl KernelEval for KernelModel {
    fn t(&self, r: [f64; 2]) -> Result<Mat2> {
        Ok(self.eval_series_kernel(r)? * self.t_scale())
    }
}

/// Geometry of all integer displacements in [−extent, extent]² for one grid
/// side, with displacements grouped by radius so that Bessel values are
/// computed once per distinct |r|.
#[derive(Clone, Debug)]
pub struct ModelGrid {
    pub side: usize,
    pub extent: i64,
    pub n_orders: usize,
    /// Per table cell: (displacement, radius group or usize::MAX at the origin).
    pub cells: Vec<([i64; 2], usize)>,
    pub group_r: Vec<f64>,
    /// e^{inθ} per (cell, n).
    phases: Vec<Complex64>,
}

impl ModelGrid {
    pub fn new(side: usize, extent: i64, n_orders: usize) -> Self {
        let h = 1.0 / side as f64;
        let w = 2 * extent + 1;
        let mut group_of_r2 = vec![usize::MAX; (2 * extent * extent + 1) as usize];
        let mut group_r = Vec::new();
        let mut cells = Vec::with_capacity((w * w) as usize);
        let mut phases = Vec::with_capacity((w * w) as usize * n_orders);
        for dy in -extent..=extent {
            for dx in -extent..=extent {
                let r2 = (dx * dx + dy * dy) as usize;
                let theta = (dy as f64).atan2(dx as f64);
                for n in 0..n_orders {
                    phases.push(Complex64::from_polar(1.0, n as f64 * theta));
                }
                if r2 == 0 {
                    cells.push(([dx, dy], usize::MAX));
                    continue;
                }
                if group_of_r2[r2] == usize::MAX {
                    group_of_r2[r2] = group_r.len();
                    group_r.push((r2 as f64).sqrt() * h);
                }
                cells.push(([dx, dy], group_of_r2[r2]));
            }
        }
        ModelGrid { side, extent, n_orders, cells, group_r, phases }
    }

    #[inline]
    pub fn index(&self, d: [i64; 2]) -> usize {
        let w = 2 * self.extent + 1;
        ((d[1] + self.extent) * w + d[0] + self.extent) as usize
    }

    #[inline]
    pub fn in_bounds(&self, d: [i64; 2]) -> bool {
        d[0].abs() <= self.extent && d[1].abs() <= self.extent
    }

    #[inline]
    pub(crate) fn phase(&self, cell: usize, n: usize) -> Complex64 {
        self.phases[cell * self.n_orders + n]
    }
}

/// Kernel values on a [`ModelGrid`] plus the radial factors needed for the
/// chain rule.
#[derive(Clone, Debug)]
pub struct ModelEval {
    /// Literal Ĥ per table cell (zero at the origin).
    pub lit: Vec<Mat2>,
    /// r^{−α_env} J_n(α_{n,m} r) per (group, n, m).
    pub radial: Vec<f64>,
    /// r^{−α_env} · r · J_n'(α_{n,m} r) per (group, n, m).
    pub dradial: Vec<f64>,
}

impl ModelEval {
    pub fn new(km: &KernelModel, grid: &ModelGrid) -> Self {
        let nm = km.n_orders * km.m_radial;
        let ng = grid.group_r.len();
        let mut radial = vec![0.0; ng * nm];
        let mut dradial = vec![0.0; ng * nm];
        for (g, &r) in grid.group_r.iter().enumerate() {
            let env = r.powf(-km.alpha_env);
            for n in 0..km.n_orders {
                for m in 0..km.m_radial {
                    let a = km.alpha[n * km.m_radial + m];
                    let j = bessel_j_upto(n + 1, a * r);
                    let jm1 = if n == 0 { -j[1] } else { j[n - 1] };
                    let k = g * nm + n * km.m_radial + m;
                    radial[k] = env * j[n];
                    dradial[k] = env * r * 0.5 * (jm1 - j[n + 1]);
                }
            }
        }
        let mut lit = vec![Mat2::ZERO; grid.cells.len()];
        for (c, &(_, g)) in grid.cells.iter().enumerate() {
            if g == usize::MAX {
                continue;
            }
            let mut e = [Complex64::new(0.0, 0.0); 4];
            for n in 0..km.n_orders {
                let ph = grid.phase(c, n);
                for (ij, v) in e.iter_mut().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for m in 0..km.m_radial {
                        let k = km.coef_index(ij, n, m);
                        s += Complex64::new(km.c_re[k], km.c_im[k]) * radial[g * nm + n * km.m_radial + m];
                    }
                    *v += s * ph;
                }
            }
            lit[c] = Mat2::from_entries(e);
        }
        ModelEval { lit, radial, dradial }
    }

    /// Series-facing Ĥ per cell (real part for Hessian kernels).
    pub fn series_values(&self, km: &KernelModel) -> Vec<Mat2> {
        match km.kind {
            KernelKind::Hessian => self.lit.iter().map(|m| m.re()).collect(),
            KernelKind::Green => self.lit.clone(),
        }
    }

    /// T table for the series sums, zero inside the cavity.
    pub fn kernel_table(&self, km: &KernelModel, grid: &ModelGrid, cavity: usize) -> KernelTable {
        let s = km.t_scale();
        let vals = self
            .series_values(km)
            .into_iter()
            .zip(&grid.cells)
            .map(|(v, (d, _))| if in_cavity(*d, cavity) { Mat2::ZERO } else { v * s })
            .collect();
        KernelTable::from_values(grid.side, grid.extent, cavity, vals)
    }

    /// Pull a gradient with respect to the series-facing Ĥ per cell back to the
    /// learnable parameters (layout of [`KernelModel::params`]). Gradients of
    /// complex quantities use the convention ∂L/∂Re + i ∂L/∂Im.
    pub fn backprop(&self, km: &KernelModel, grid: &ModelGrid, g_series: &[Mat2]) -> Vec<f64> {
        let nm = km.n_orders * km.m_radial;
        let nc = km.c_re.len();
        let mut grad = vec![0.0; km.n_params()];
        let (gc, rest) = grad.split_at_mut(2 * nc);
        let (gcr, gci) = gc.split_at_mut(nc);
        let (galpha, genv) = rest.split_at_mut(nm);
        let mut g_env = 0.0;
        for (c, &(_, g)) in grid.cells.iter().enumerate() {
            if g == usize::MAX {
                continue;
            }
            let gs = g_series[c];
            if gs == Mat2::ZERO {
                continue;
            }
            let gl = match km.kind {
                KernelKind::Hessian => gs.re(),
                KernelKind::Green => gs,
            };
            let r = grid.group_r[g];
            // ∂Ĥ/∂α_env = −ln r · Ĥ
            g_env += -r.ln() * gl.inner(&self.lit[c]).re;
            let ge = gl.entries();
            for n in 0..km.n_orders {
                let ph = grid.phase(c, n);
                // conj(G_ij)·e^{inθ} per entry
                let w: [Complex64; 4] = [ge[0].conj() * ph, ge[1].conj() * ph, ge[2].conj() * ph, ge[3].conj() * ph];
                for m in 0..km.m_radial {
                    let b = self.radial[g * nm + n * km.m_radial + m];
                    let db = self.dradial[g * nm + n * km.m_radial + m];
                    let mut ga = 0.0;
                    for (ij, wij) in w.iter().enumerate() {
                        let k = km.coef_index(ij, n, m);
                        gcr[k] += wij.re * b;
                        gci[k] += -wij.im * b;
                        ga += (wij * Complex64::new(km.c_re[k], km.c_im[k])).re * db;
                    }
                    galpha[n * km.m_radial + m] += ga;
                }
            }
        }
        genv[0] = g_env;
        grad
    }
}
