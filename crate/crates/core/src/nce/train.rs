use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{KernelKind, KernelModel, ModelEval, ModelGrid};
use super::objective::{Dataset, Prepared};
use super::project::project_analytic;
use crate::correlations::CorrelationSet;
use crate::error::{param, NceError, Result};
use crate::kernels::{AnalyticKernel, KernelEval};
use crate::sce::{in_cavity, predict, EffectiveTensor, SeriesConfig};

/// Starting point of training: the analytic kernel projected onto the
/// Bessel–Fourier basis (training then learns corrections to it), or a
/// seeded random draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelInit {
    Analytic,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Series order used inside the loss (2 or 3).
    pub order: usize,
    pub cavity_radius_cells: usize,
    /// Physics and curl residuals skip displacements shorter than this
    /// (cells), the neighbourhood N(0) where finite differences of the
    /// singular kernel are meaningless.
    pub physics_exclusion_cells: usize,
    pub window_radius: Option<f64>,
    pub n_max: usize,
    pub m_radial: usize,
    /// Envelope exponent at initialization; kind default when absent.
    pub alpha_env_init: Option<f64>,
    pub init: KernelInit,
    pub step_size: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm of the smooth part drops below this.
    pub grad_tol: f64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1e-4,
            lambda2: 1e-4,
            lambda3: 1e-4,
            order: 2,
            cavity_radius_cells: 1,
            physics_exclusion_cells: 4,
            window_radius: None,
            n_max: 4,
            m_radial: 8,
            alpha_env_init: None,
            init: KernelInit::Analytic,
            step_size: 1e-4,
            max_epochs: 1000,
            grad_tol: 1e-10,
            patience: 200,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return param(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return param("step size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return param("validation fraction must lie in [0, 1)");
        }
        if self.m_radial == 0 {
            return param("need at least one radial mode");
        }
        Ok(())
    }

    pub fn series_config(&self) -> SeriesConfig {
        SeriesConfig {
            order: self.order,
            cavity_radius_cells: self.cavity_radius_cells,
            window_radius: self.window_radius,
            rho: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub data: f64,
    pub l1: f64,
    pub phys: f64,
    pub curl: f64,
    pub val: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (best validation data term).
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,data,l1,phys,curl,val\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}\n", e.epoch, e.data, e.l1, e.phys, e.curl, e.val));
        }
        s
    }
}

fn split(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((frac * n as f64).round() as usize).min(n.saturating_sub(1));
    if n_val == 0 {
        return (idx.clone(), idx);
    }
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Train a kernel model from the start selected by `cfg.init`.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(KernelModel, TrainingHistory)> {
    cfg.validate()?;
    let side = ds.records.first().map(|r| r.corrs.side).ok_or_else(|| NceError::Param("dataset is empty".into()))?;
    let kind = KernelKind::for_medium(ds.spec.kind);
    let env = cfg.alpha_env_init.unwrap_or_else(|| KernelModel::default_alpha_env(kind, ds.spec.d));
    let init = match cfg.init {
        KernelInit::Analytic => {
            project_analytic(&ds.spec, cfg.n_max, cfg.m_radial, side, Some(env), cfg.cavity_radius_cells)?
        }
        KernelInit::Random => KernelModel::init(ds.spec, cfg.n_max, cfg.m_radial, side, env, cfg.seed),
    };
    train_from(init, ds, cfg)
}

/// Per-coefficient step multipliers: RMS of the analytic kernel divided by
/// the RMS of the coefficient's radial basis function over the disk of
/// radius side/2 outside the cavity, both at the starting point. Adam moves
/// every parameter by about one step per epoch, so without this a basis
/// function that peaks at the cavity edge (r^{−α_env} is ~10⁷ there) would be
/// kicked far harder than one that lives in the far field.
fn coefficient_steps(km: &KernelModel, grid: &ModelGrid, cavity: usize) -> Result<Vec<f64>> {
    let ev = ModelEval::new(km, grid);
    let nm = km.n_orders * km.m_radial;
    let half = (grid.side / 2) as i64;
    let mut basis = vec![0.0; nm];
    let mut reference = 0.0;
    let mut count = 0usize;
    let h = 1.0 / grid.side as f64;
    let analytic = AnalyticKernel(km.spec);
    let t_scale = km.t_scale();
    for &(d, g) in &grid.cells {
        if g == usize::MAX || in_cavity(d, cavity) || d[0] * d[0] + d[1] * d[1] > half * half {
            continue;
        }
        for (k, b) in basis.iter_mut().enumerate() {
            *b += ev.radial[g * nm + k].powi(2);
        }
        reference += (analytic.t([d[0] as f64 * h, d[1] as f64 * h])? * (1.0 / t_scale)).frobenius().powi(2);
        count += 1;
    }
    if count == 0 {
        return param("no kernel cells outside the cavity");
    }
    let reference = (reference / count as f64).sqrt();
    let per_nm: Vec<f64> = basis.iter().map(|b| reference / (b / count as f64).sqrt().max(f64::MIN_POSITIVE)).collect();
    Ok((0..km.c_re.len()).map(|k| per_nm[k % nm]).collect())
}

/// Proximal Adam on the objective starting from `init`: Adam steps on the
/// smooth part, then soft-thresholding of the coefficients by the
/// per-parameter step times λ₁. Coefficient steps are scaled by
/// [`coefficient_steps`], so `step_size` is a relative kernel change per epoch.
pub fn train_from(init: KernelModel, ds: &Dataset, cfg: &TrainConfig) -> Result<(KernelModel, TrainingHistory)> {
    cfg.validate()?;
    if ds.records.len() < 2 {
        return param("training needs at least two records");
    }
    let prep = Prepared::new(&init, ds, cfg)?;
    let (train_idx, val_idx) = split(ds.records.len(), cfg.validation_fraction, cfg.seed);
    let mut history = TrainingHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((init, history));
    }
    let mut km = init;
    let n_coef = km.c_re.len();
    let n_alpha = km.alpha.len();
    let mut p = km.params();
    let np = p.len();
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-12);
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let coef_steps = coefficient_steps(&km, &prep.grid, prep.cavity)?;
    let steps: Vec<f64> = (0..np)
        .map(|k| if k < 2 * n_coef { cfg.step_size * coef_steps[k % n_coef] } else { cfg.step_size })
        .collect();
    let mut best = (f64::INFINITY, km.clone(), None);
    let mut since_best = 0;
    let mut initial = None;
    for epoch in 0..cfg.max_epochs {
        let (lb, g) = prep.evaluate(&km, cfg, &train_idx, true, false)?;
        let g = g.expect("gradient requested");
        let val = prep.evaluate(&km, cfg, &val_idx, false, false)?.0.data;
        let initial_total = *initial.get_or_insert(lb.total.max(f64::MIN_POSITIVE));
        if !lb.total.is_finite() || lb.total > 1e6 * initial_total {
            return Err(NceError::Diverged(format!("loss {:e} at epoch {epoch}; try a smaller step size", lb.total)));
        }
        history.epochs.push(EpochRecord { epoch, data: lb.data, l1: lb.l1, phys: lb.phys, curl: lb.curl, val });
        if val < best.0 {
            best = (val, km.clone(), Some(epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < cfg.grad_tol {
            break;
        }
        let t = (epoch + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for k in 0..np {
            m1[k] = b1 * m1[k] + (1.0 - b1) * g[k];
            m2[k] = b2 * m2[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= steps[k] * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
        }
        for (c, s) in p[..2 * n_coef].iter_mut().zip(&steps) {
            *c = c.signum() * (c.abs() - s * cfg.lambda1).max(0.0);
        }
        for a in &mut p[2 * n_coef..2 * n_coef + n_alpha] {
            *a = a.max(1e-6);
        }
        km.set_params(&p);
    }
    history.best_epoch = best.2;
    let out = if best.2.is_some() { best.1 } else { km };
    Ok((out, history))
}

/// Effective tensor predicted by the strong-contrast series with the learned kernel.
pub fn nce_predict(km: &KernelModel, cs: &CorrelationSet, cfg: &SeriesConfig) -> Result<EffectiveTensor> {
    predict(cs, &km.spec, km, cfg)
}
