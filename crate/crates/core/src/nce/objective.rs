use super::model::{KernelKind, KernelModel, ModelEval, ModelGrid};
use super::train::TrainConfig;
use crate::correlations::{total_correlation_2, CorrelationSet};
use crate::error::{param, NceError, Result};
use crate::kernels::{contrast_beta, MediumSpec};
use crate::linalg::Mat2;
use crate::sce::{a2_cells, a3_configurations, a3_prefactor, d_map, in_cavity, required_extent, EffectiveTensor};

#[derive(Clone, Debug)]
pub struct Record {
    pub corrs: CorrelationSet,
    pub target: EffectiveTensor,
}

/// Structure–property pairs sharing one medium.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: MediumSpec,
    pub records: Vec<Record>,
}

/// Loss components; `total = data + λ₁·l1 + λ₂·phys + λ₃·curl`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub l1: f64,
    pub phys: f64,
    pub curl: f64,
}

/// Gradient with the same shapes as the learnable parts of [`KernelModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradient {
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_env: f64,
}

impl ModelGradient {
    pub(crate) fn from_flat(km: &KernelModel, g: &[f64]) -> Self {
        let nc = km.c_re.len();
        let na = km.alpha.len();
        ModelGradient {
            c_re: g[..nc].to_vec(),
            c_im: g[nc..2 * nc].to_vec(),
            alpha: g[2 * nc..2 * nc + na].to_vec(),
            alpha_env: g[2 * nc + na],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.c_re.clone();
        v.extend_from_slice(&self.c_im);
        v.extend_from_slice(&self.alpha);
        v.push(self.alpha_env);
        v
    }
}

pub(crate) struct PreparedRecord {
    pub beta: f64,
    pub phi: f64,
    pub d_target: Mat2,
    /// (table cell, (d/Ω)ΔV·χ) for the A₂ sum.
    pub a2: Vec<(usize, f64)>,
    /// (cell of r₁, cell of r₂ − r₁, prefactor·Δ₃) for the A₃ sum.
    pub a3: Vec<(usize, usize, f64)>,
}

/// One residual component: Σ coef · Ĥ_entry(cell + offset).
type Stencil = Vec<([i64; 2], usize, f64)>;

pub(crate) struct Prepared {
    pub grid: ModelGrid,
    pub cavity: usize,
    pub records: Vec<PreparedRecord>,
    phys: Vec<Stencil>,
    curl: Vec<Stencil>,
    phys_cells: Vec<usize>,
    curl_cells: Vec<usize>,
}

fn stencil_cells(grid: &ModelGrid, exclusion: usize, stencils: &[Stencil]) -> Vec<usize> {
    let mut out = Vec::new();
    for (c, &(d, _)) in grid.cells.iter().enumerate() {
        if in_cavity(d, exclusion) {
            continue;
        }
        let ok = stencils.iter().flatten().all(|(o, _, _)| {
            let p = [d[0] + o[0], d[1] + o[1]];
            grid.in_bounds(p) && p != [0, 0]
        });
        if ok {
            out.push(c);
        }
    }
    out
}

/// Physics residual 𝓛[Ĥ] as stencils over the kernel entries (index i·2 + j).
fn physics_stencils(km: &KernelModel, h: f64) -> Vec<Stencil> {
    let spec = &km.spec;
    match km.kind {
        // −σ₀ tr Ĥ
        KernelKind::Hessian => vec![vec![([0, 0], 0, -spec.prop0), ([0, 0], 3, -spec.prop0)]],
        // (ε₀/k₀²)(∇∇· − ∇² − k₀²) per column:
        //   row 1: ∂xy Ĥ_2j − ∂yy Ĥ_1j − k₀² Ĥ_1j
        //   row 2: ∂xy Ĥ_1j − ∂xx Ĥ_2j − k₀² Ĥ_2j
        KernelKind::Green => {
            let s = spec.prop0 / (spec.k0 * spec.k0);
            let h2 = h * h;
            let mut out = Vec::new();
            for j in 0..2 {
                let e1 = j;
                let e2 = 2 + j;
                let mixed = |e: usize| -> Stencil {
                    let c = s / (4.0 * h2);
                    vec![([1, 1], e, c), ([1, -1], e, -c), ([-1, 1], e, -c), ([-1, -1], e, c)]
                };
                let second = |e: usize, axis: usize| -> Stencil {
                    let c = s / h2;
                    let (p, m) = if axis == 0 { ([1, 0], [-1, 0]) } else { ([0, 1], [0, -1]) };
                    vec![(p, e, c), ([0, 0], e, -2.0 * c), (m, e, c)]
                };
                let mut row1 = mixed(e2);
                row1.extend(second(e1, 1).into_iter().map(|(o, e, c)| (o, e, -c)));
                row1.push(([0, 0], e1, -spec.prop0));
                let mut row2 = mixed(e1);
                row2.extend(second(e2, 0).into_iter().map(|(o, e, c)| (o, e, -c)));
                row2.push(([0, 0], e2, -spec.prop0));
                out.push(row1);
                out.push(row2);
            }
            out
        }
    }
}

/// Mixed-partial consistency ∂x Ĥ_i2 − ∂y Ĥ_i1 per row i, centred differences.
fn curl_stencils(h: f64) -> Vec<Stencil> {
    let c = 1.0 / (2.0 * h);
    (0..2)
        .map(|i| {
            vec![
                ([1, 0], 2 * i + 1, c),
                ([-1, 0], 2 * i + 1, -c),
                ([0, 1], 2 * i, -c),
                ([0, -1], 2 * i, c),
            ]
        })
        .collect()
}

impl Prepared {
    pub fn new(km: &KernelModel, ds: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        km.validate()?;
        ds.spec.validate()?;
        if ds.records.is_empty() {
            return param("dataset is empty");
        }
        if km.spec != ds.spec {
            return param("kernel model and dataset use different media");
        }
        if cfg.order != 2 && cfg.order != 3 {
            return param(format!("series order must be 2 or 3, got {}", cfg.order));
        }
        if cfg.cavity_radius_cells == 0 {
            return param("cavity radius must be at least one cell");
        }
        let side = ds.records[0].corrs.side;
        if ds.records.iter().any(|r| r.corrs.side != side) {
            return param("records have mixed grid sides");
        }
        let beta = contrast_beta(&ds.spec)?;
        if beta == 0.0 {
            return param("records with β = 0 carry no kernel information");
        }
        let mut wc = 0;
        if cfg.order == 3 {
            for r in &ds.records {
                let t = r.corrs.s3.as_ref().ok_or_else(|| NceError::Param("order 3 needs S₃ in every record".into()))?;
                let w = match cfg.window_radius {
                    Some(w) => (w * side as f64 + 1e-9).floor() as i64,
                    None => t.radius_cells(),
                };
                wc = wc.max(w);
            }
        }
        let grid = ModelGrid::new(side, required_extent(side, wc), km.n_orders);
        let dv = 1.0 / (side * side) as f64;
        let f2 = ds.spec.d as f64 / ds.spec.omega_d() * dv;
        let cells = a2_cells(side, cfg.cavity_radius_cells);
        let mut records = Vec::with_capacity(ds.records.len());
        for (idx, r) in ds.records.iter().enumerate() {
            let cs = &r.corrs;
            let phi = cs.phi;
            let d_target = d_map(&r.target, beta, phi, &ds.spec)
                .map_err(|e| NceError::Param(format!("record {idx}: {e}")))?;
            let chi = total_correlation_2(cs);
            let a2 = cells.iter().map(|&(i, d, w)| (grid.index(d), f2 * w * chi[i])).collect();
            let a3 = if cfg.order == 3 {
                let pre = a3_prefactor(cs, &ds.spec, None)?;
                a3_configurations(cs, cfg.cavity_radius_cells, cfg.window_radius)?
                    .into_iter()
                    .filter(|c| c.2 != 0.0)
                    .map(|(r1, r21, w)| (grid.index(r1), grid.index(r21), pre * w))
                    .collect()
            } else {
                Vec::new()
            };
            records.push(PreparedRecord { beta, phi, d_target, a2, a3 });
        }
        let h = 1.0 / side as f64;
        let phys = physics_stencils(km, h);
        let curl = match km.kind {
            KernelKind::Hessian => curl_stencils(h),
            KernelKind::Green => Vec::new(),
        };
        let excl = cfg.cavity_radius_cells.max(cfg.physics_exclusion_cells);
        let phys_cells = stencil_cells(&grid, excl, &phys);
        let curl_cells = if curl.is_empty() { Vec::new() } else { stencil_cells(&grid, excl, &curl) };
        Ok(Prepared { grid, cavity: cfg.cavity_radius_cells, records, phys, curl, phys_cells, curl_cells })
    }

    /// D̂ for one record from a T table indexed like the model grid.
    pub fn d_hat(&self, rec: &PreparedRecord, t: &[Mat2]) -> (Mat2, Mat2, Option<Mat2>) {
        let mut a2 = Mat2::ZERO;
        for &(c, w) in &rec.a2 {
            a2 += t[c] * w;
        }
        let a3 = if rec.a3.is_empty() {
            None
        } else {
            let mut acc = Mat2::ZERO;
            for &(c1, c2, w) in &rec.a3 {
                acc += t[c1] * t[c2] * w;
            }
            Some(acc)
        };
        let b = rec.beta;
        let mut r = Mat2::scalar((b * rec.phi).into()) - a2 * (b * b);
        if let Some(a3) = a3 {
            r -= a3 * (b * b * b);
        }
        (r, a2, a3)
    }

    /// Mean data term over `subset` and, optionally, its gradient w.r.t. T.
    pub fn data_term(&self, subset: &[usize], t: &[Mat2], mut grad: Option<&mut [Mat2]>) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        let inv_m = 1.0 / subset.len() as f64;
        let mut loss = 0.0;
        for &i in subset {
            let rec = &self.records[i];
            let (dh, _, _) = self.d_hat(rec, t);
            let e = dh - rec.d_target;
            let l = e.frobenius().powi(2);
            if !l.is_finite() {
                return Err(NceError::Numerical(format!("non-finite loss at record {i}")));
            }
            loss += l * inv_m;
            if let Some(g) = grad.as_deref_mut() {
                let gd = e * (2.0 * inv_m);
                let b = rec.beta;
                let g2 = gd * (-b * b);
                for &(c, w) in &rec.a2 {
                    g[c] += g2 * w;
                }
                if !rec.a3.is_empty() {
                    let g3 = gd * (-b * b * b);
                    for &(c1, c2, w) in &rec.a3 {
                        g[c1] += g3 * t[c2].adjoint() * w;
                        g[c2] += t[c1].adjoint() * g3 * w;
                    }
                }
            }
        }
        Ok(loss)
    }

    fn stencil_term(&self, stencils: &[Stencil], cells: &[usize], h: &[Mat2], mut grad: Option<&mut [Mat2]>, weight: f64) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let inv = 1.0 / cells.len() as f64;
        let mut total = 0.0;
        for &c in cells {
            let d = self.grid.cells[c].0;
            for st in stencils {
                let mut res = num_complex::Complex64::new(0.0, 0.0);
                for &(o, e, coef) in st {
                    let p = self.grid.index([d[0] + o[0], d[1] + o[1]]);
                    res += h[p].m[e / 2][e % 2] * coef;
                }
                total += res.norm_sqr() * inv;
                if let Some(g) = grad.as_deref_mut() {
                    for &(o, e, coef) in st {
                        let p = self.grid.index([d[0] + o[0], d[1] + o[1]]);
                        g[p].m[e / 2][e % 2] += res * (2.0 * coef * inv * weight);
                    }
                }
            }
        }
        total
    }

    /// Full objective. The gradient (layout of [`KernelModel::params`])
    /// includes the L1 subgradient only when `l1_subgradient` is set.
    pub fn evaluate(
        &self,
        km: &KernelModel,
        cfg: &TrainConfig,
        subset: &[usize],
        want_grad: bool,
        l1_subgradient: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let ev = ModelEval::new(km, &self.grid);
        let series = ev.series_values(km);
        let table = ev.kernel_table(km, &self.grid, self.cavity);
        let ncell = self.grid.cells.len();
        let mut g_t = if want_grad { Some(vec![Mat2::ZERO; ncell]) } else { None };
        let data = self.data_term(subset, table.values(), g_t.as_deref_mut())?;
        let mut g_h = if want_grad { Some(vec![Mat2::ZERO; ncell]) } else { None };
        if let (Some(gh), Some(gt)) = (g_h.as_deref_mut(), g_t.as_deref()) {
            let s = km.t_scale();
            for (a, b) in gh.iter_mut().zip(gt) {
                *a = *b * s;
            }
        }
        let phys = self.stencil_term(&self.phys, &self.phys_cells, &series, g_h.as_deref_mut(), cfg.lambda2);
        let curl = self.stencil_term(&self.curl, &self.curl_cells, &series, g_h.as_deref_mut(), cfg.lambda3);
        let l1: f64 = km.c_re.iter().chain(&km.c_im).map(|c| c.abs()).sum();
        let total = data + cfg.lambda1 * l1 + cfg.lambda2 * phys + cfg.lambda3 * curl;
        if !total.is_finite() {
            return Err(NceError::Numerical("non-finite regularizer value".into()));
        }
        let breakdown = LossBreakdown { total, data, l1, phys, curl };
        let grad = g_h.map(|gh| {
            let mut g = ev.backprop(km, &self.grid, &gh);
            if l1_subgradient {
                let nc = km.c_re.len();
                for (k, c) in km.c_re.iter().chain(&km.c_im).enumerate() {
                    if *c != 0.0 {
                        g[k] += cfg.lambda1 * c.signum();
                    }
                }
                debug_assert!(2 * nc <= g.len());
            }
            g
        });
        Ok((breakdown, grad))
    }
}

/// Loss over every record of the dataset.
pub fn loss(km: &KernelModel, ds: &Dataset, cfg: &TrainConfig) -> Result<LossBreakdown> {
    let prep = Prepared::new(km, ds, cfg)?;
    let all: Vec<usize> = (0..ds.records.len()).collect();
    Ok(prep.evaluate(km, cfg, &all, false, false)?.0)
}

/// Analytic gradient of [`loss`], with sign(C) (0 at C = 0) for the L1 term.
pub fn gradient(km: &KernelModel, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelGradient> {
    let prep = Prepared::new(km, ds, cfg)?;
    let all: Vec<usize> = (0..ds.records.len()).collect();
    let (_, g) = prep.evaluate(km, cfg, &all, true, true)?;
    Ok(ModelGradient::from_flat(km, &g.expect("gradient requested")))
}
