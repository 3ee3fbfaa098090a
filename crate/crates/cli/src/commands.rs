//! Subcommand bodies. Each returns a one-line summary for stderr.

use nce_core::correlations::{average_correlations, CorrelationSet};
use nce_core::gridfield::{generate_gaussian_levelset, generate_spectral_shaped, sample_patches, volume_fraction};
use nce_core::io::{encode_correlations, encode_field, encode_kernel, read_correlations, read_field, read_kernel};
use nce_core::kernels::{AnalyticKernel, KernelEval, MediumKind, MediumSpec};
use nce_core::nce::{self, train, Dataset, KernelModel, Record};
use nce_core::sce::{predict, EffectiveTensor, SeriesConfig};
use nce_core::sensitivity::{
    compare_maps, connected_fraction, log_slope, parse_map_csv, render_pgm, sensitivity_s2, to_fourier, KernelSource,
    MapSpace, SensitivityMap,
};
use nce_core::solvers::{effective_conductivity, effective_permittivity};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use crate::config::{Generator, RunConfig};
use crate::output::{manifest_entries, write_rel, ManifestRow, OutDir};
use crate::pool::map_ordered;
use crate::tables::{parse_tensor_csv, tensor_csv, TensorRow};
use crate::CliError;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: std::path::PathBuf,
    pub threads: usize,
}

type Res<T> = Result<T, CliError>;

/// Path text for the manifest "source" column.
fn source_text(p: &Path) -> Res<String> {
    let s = p.display().to_string();
    if s.contains(',') || s.contains('\n') {
        return Err(CliError::Param(format!("input path {s:?} may not contain commas or newlines")));
    }
    Ok(s)
}

fn stem(p: &Path) -> Res<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Param(format!("cannot derive an output name from {}", p.display())))
}

fn collect<T>(results: Vec<Res<T>>) -> Res<Vec<T>> {
    results.into_iter().collect()
}

pub fn generate(ctx: &Ctx) -> Res<String> {
    let g = &ctx.cfg.generate;
    if g.seeds_per_setting == 0 {
        return Err(CliError::Param("seeds_per_setting must be at least 1".into()));
    }
    // The spectral generator ignores correlation lengths: one pseudo-setting.
    let n_settings = match g.generator {
        Generator::Gaussian => g.settings.len(),
        Generator::Spectral => 1,
    };
    if n_settings == 0 {
        return Err(CliError::Param("generate.settings is empty".into()));
    }
    let jobs: Vec<(usize, u64)> =
        (0..n_settings).flat_map(|s| (0..g.seeds_per_setting).map(move |r| (s, r))).collect();
    let out = &ctx.out;
    let rows = map_ordered(&jobs, ctx.threads, |&(s, r)| -> Res<ManifestRow> {
        let seed = ctx.cfg.seed.wrapping_add(s as u64 * g.seeds_per_setting).wrapping_add(r);
        let (m, source) = match g.generator {
            Generator::Gaussian => {
                let st = g.settings[s];
                (generate_gaussian_levelset(seed, g.side, st.corr_len_x, st.corr_len_y, g.phi)?, "gaussian")
            }
            Generator::Spectral => {
                (generate_spectral_shaped(seed, g.side, g.phi, g.k_exclusion, g.iterations)?, "spectral")
            }
        };
        let file = format!("fields/s{s:02}_r{r:03}.fld");
        write_rel(out, &file, &encode_field(&m))?;
        Ok(ManifestRow {
            setting: Some(s),
            seed: Some(seed),
            phi: Some(volume_fraction(&m)),
            source: source.into(),
            ..ManifestRow::new(file, "field")
        })
    });
    let rows = collect(rows)?;
    let n = rows.len();
    let mut dir = OutDir::create(out)?;
    rows.into_iter().for_each(|r| dir.record(r));
    dir.finish()?;
    Ok(format!("generated {n} fields in {}", out.display()))
}

pub fn stats(ctx: &Ctx, fields: &Path) -> Res<String> {
    let entries = manifest_entries(fields, "field")?;
    let (st, pc) = (&ctx.cfg.stats, &ctx.cfg.patches);
    let out = &ctx.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::Param(format!("cannot create {}: {e}", out.display())))?;
    let rows = map_ordered(&entries, ctx.threads, |(row, path)| -> Res<ManifestRow> {
        let m = read_field(path)?;
        let patches = if pc.patch_side == 0 {
            vec![m]
        } else {
            // Patch anchors are drawn from a stream distinct from the field's own.
            let seed = row.seed.unwrap_or(0) ^ 0x9e37_79b9_7f4a_7c15;
            sample_patches(&m, pc.patch_side, pc.count, seed)?
        };
        let cs = average_correlations(&patches, st.order, st.window_radius)?;
        let file = format!("corrs/{}.cor", stem(path)?);
        write_rel(out, &file, &encode_correlations(&cs))?;
        Ok(ManifestRow {
            setting: row.setting,
            seed: row.seed,
            phi: Some(cs.phi),
            source: source_text(path)?,
            ..ManifestRow::new(file, "corr")
        })
    });
    let rows = collect(rows)?;
    let n = rows.len();
    let mut dir = OutDir::create(out)?;
    rows.into_iter().for_each(|r| dir.record(r));
    dir.finish()?;
    Ok(format!("wrote {n} correlation sets"))
}

fn solve_one(m: &nce_core::gridfield::Microstructure, spec: &MediumSpec, tol: f64) -> nce_core::Result<EffectiveTensor> {
    spec.validate()?;
    match spec.kind {
        MediumKind::Conduction => effective_conductivity(m, spec.prop0, spec.prop1, tol),
        MediumKind::Wave => effective_permittivity(m, spec.prop0, spec.prop1, spec.k0, tol),
    }
}

/// Write a tensor table and its manifest row. Failed rows stay in the table
/// and turn the run into a numerical error once everything is written.
fn emit_table(ctx: &Ctx, file: &str, kind: &str, rows: &[TensorRow], verb: &str) -> Res<String> {
    let mut dir = OutDir::create(&ctx.out)?;
    dir.write(ManifestRow::new(file, kind), tensor_csv(rows).as_bytes())?;
    dir.finish()?;
    let n = rows.len();
    match rows.iter().filter(|r| r.result.is_err()).count() {
        0 => Ok(format!("{verb} {n} of {n} ({file})")),
        failed => Err(CliError::Numerical(format!("{failed} of {n} rows failed; see {file}"))),
    }
}

pub fn solve(ctx: &Ctx, fields: &Path) -> Res<String> {
    let entries = manifest_entries(fields, "field")?;
    ctx.cfg.medium.validate()?;
    let rows = map_ordered(&entries, ctx.threads, |(row, path)| -> Res<TensorRow> {
        // Unreadable inputs abort the run; solver failures are recorded per row.
        let m = read_field(path)?;
        let result = solve_one(&m, &ctx.cfg.medium, ctx.cfg.tol).map(|t| t.m).map_err(|e| e.to_string());
        Ok(TensorRow { setting: row.setting, seed: row.seed, source: source_text(path)?, result })
    });
    let rows = collect(rows)?;
    emit_table(ctx, "targets.csv", "targets", &rows, "solved")
}

fn predictions(
    ctx: &Ctx,
    corrs: &Path,
    file: &str,
    f: impl Fn(&CorrelationSet) -> nce_core::Result<EffectiveTensor> + Sync,
) -> Res<String> {
    let entries = manifest_entries(corrs, "corr")?;
    let rows = map_ordered(&entries, ctx.threads, |(row, path)| -> Res<TensorRow> {
        let cs = read_correlations(path)?;
        let result = f(&cs).map(|t| t.m).map_err(|e| e.to_string());
        Ok(TensorRow { setting: row.setting, seed: row.seed, source: source_text(path)?, result })
    });
    let rows = collect(rows)?;
    emit_table(ctx, file, "predictions", &rows, "predicted")
}

fn series_config(ctx: &Ctx) -> SeriesConfig {
    let s = &ctx.cfg.series;
    SeriesConfig { order: s.order, cavity_radius_cells: s.cavity_radius_cells, window_radius: s.window_radius, rho: None }
}

pub fn sce(ctx: &Ctx, corrs: &Path) -> Res<String> {
    let spec = ctx.cfg.medium;
    spec.validate()?;
    let cfg = series_config(ctx);
    let kernel = AnalyticKernel(spec);
    predictions(ctx, corrs, "sce_predictions.csv", |cs| predict(cs, &spec, &kernel, &cfg))
}

pub fn nce_train(ctx: &Ctx, corrs: &Path, targets: &Path) -> Res<String> {
    let spec = ctx.cfg.medium;
    spec.validate()?;
    ctx.cfg.train.validate()?;
    let text = std::fs::read_to_string(targets)
        .map_err(|e| CliError::Param(format!("cannot read {}: {e}", targets.display())))?;
    let mut by_key: HashMap<(Option<usize>, Option<u64>), EffectiveTensor> = HashMap::new();
    for row in parse_tensor_csv(&text)? {
        if let Ok(m) = row.result {
            if by_key.insert((row.setting, row.seed), EffectiveTensor { m, kind: spec.kind }).is_some() {
                return Err(CliError::Param(format!(
                    "duplicate target for setting {:?}, seed {:?}",
                    row.setting, row.seed
                )));
            }
        }
    }
    let mut records = Vec::new();
    for (row, path) in manifest_entries(corrs, "corr")? {
        if let Some(target) = by_key.get(&(row.setting, row.seed)) {
            records.push(Record { corrs: read_correlations(&path)?, target: *target });
        }
    }
    if records.len() < 2 {
        return Err(CliError::Param(format!("only {} correlation sets have a solved target", records.len())));
    }
    let n = records.len();
    let ds = Dataset { spec, records };
    let (km, history) = train(&ds, &ctx.cfg.train)?;
    let mut dir = OutDir::create(&ctx.out)?;
    dir.write(ManifestRow::new("kernel.nck", "kernel"), &encode_kernel(&km, Some(&ctx.cfg.train)))?;
    dir.write(ManifestRow::new("history.csv", "history"), history.to_csv().as_bytes())?;
    dir.finish()?;
    let best = history.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "none".into());
    Ok(format!("trained on {n} records over {} epochs (best epoch {best})", history.epochs.len()))
}

pub fn nce_predict(ctx: &Ctx, kernel: &Path, corrs: &Path) -> Res<String> {
    let km = read_kernel(kernel)?;
    let cfg = ctx.cfg.train.series_config();
    predictions(ctx, corrs, "nce_predictions.csv", |cs| nce::nce_predict(&km, cs, &cfg))
}

pub fn sensitivity(ctx: &Ctx, corrs: &Path, kernel: Option<&Path>) -> Res<String> {
    let sc = &ctx.cfg.sensitivity;
    if sc.compare.is_empty() {
        return Err(CliError::Param("compare lists no kernel sources".into()));
    }
    let cs = read_correlations(corrs)?;
    let learned: Option<KernelModel> = kernel.map(read_kernel).transpose()?;
    // A checkpoint carries the medium it was trained for; it takes precedence.
    let spec = learned.as_ref().map(|k| k.spec).unwrap_or(ctx.cfg.medium);
    let cfg = SeriesConfig { order: 2, ..series_config(ctx) };
    let mut maps: Vec<(String, SensitivityMap)> = Vec::new();
    for name in &sc.compare {
        let (k, source): (&dyn KernelEval, KernelSource) = match name.as_str() {
            "analytic" => (&AnalyticKernel(spec), KernelSource::Analytic),
            "learned" => match &learned {
                Some(km) => (km, KernelSource::Learned),
                None => return Err(CliError::Param("the learned map needs --kernel".into())),
            },
            other => return Err(CliError::Param(format!("unknown kernel source {other:?}"))),
        };
        if maps.iter().any(|(n, _)| n == name) {
            return Err(CliError::Param(format!("kernel source {name:?} listed twice")));
        }
        let mut map = sensitivity_s2(k, source, &spec, &cs, sc.theta, sc.part, &cfg)?;
        if sc.space == MapSpace::Fourier {
            map = to_fourier(&map)?;
        }
        maps.push((name.clone(), map));
    }
    let mut dir = OutDir::create(&ctx.out)?;
    for (name, map) in &maps {
        dir.write(ManifestRow { source: source_text(corrs)?, ..ManifestRow::new(format!("map_{name}.csv"), "map") }, map.to_csv().as_bytes())?;
    }
    let mut summary = format!("wrote {} map(s)", maps.len());
    if maps.len() > 1 {
        let (ref_name, reference) = &maps[0];
        let mut text = String::from("candidate,reference,sign_agreement,normalized_l2\n");
        for (name, map) in &maps[1..] {
            let (sign, l2) = compare_maps(map, reference)?;
            text.push_str(&format!("{name},{ref_name},{sign:e},{l2:e}\n"));
            summary.push_str(&format!("; {name} vs {ref_name}: sign agreement {sign:.3}, normalized L2 {l2:.3}"));
        }
        dir.write(ManifestRow::new("compare.csv", "compare"), text.as_bytes())?;
    }
    dir.finish()?;
    Ok(summary)
}

pub fn gamma(ctx: &Ctx) -> Res<String> {
    let g = &ctx.cfg.gamma;
    if g.n_min < 2 || g.n_max < g.n_min {
        return Err(CliError::Param(format!("need 2 <= n_min <= n_max, got {}..{}", g.n_min, g.n_max)));
    }
    let ns: Vec<usize> = (g.n_min..=g.n_max).collect();
    let est = map_ordered(&ns, ctx.threads, |&n| connected_fraction(g.side, g.r0, n, g.samples, ctx.cfg.seed.wrapping_add(n as u64)));
    let est = est.into_iter().collect::<nce_core::Result<Vec<_>>>()?;
    let mut text = String::from("n_points,samples,connected,fraction,ci_low,ci_high\n");
    for e in &est {
        text.push_str(&format!("{},{},{},{:e},{:e},{:e}\n", e.n_points, e.samples, e.connected, e.fraction, e.ci_low, e.ci_high));
    }
    let mut dir = OutDir::create(&ctx.out)?;
    dir.write(ManifestRow::new("gamma.csv", "gamma"), text.as_bytes())?;
    // Record the estimates even when too few configurations connect for a fit.
    let slope = match log_slope(&est) {
        Ok(s) => s,
        Err(e) => {
            dir.finish()?;
            return Err(e.into());
        }
    };
    let reference = (PI * g.r0 * g.r0).ln();
    let deviation = (slope - reference).abs() / reference.abs();
    let slope_text = format!("slope,reference,relative_deviation\n{slope:e},{reference:e},{deviation:e}\n");
    dir.write(ManifestRow::new("gamma_slope.csv", "gamma_slope"), slope_text.as_bytes())?;
    dir.finish()?;
    Ok(format!("log-slope {slope:.4} vs ln(pi r0^2) = {reference:.4} (relative deviation {deviation:.3})"))
}

pub fn export_map(ctx: &Ctx, map: &Path) -> Res<String> {
    let text = std::fs::read_to_string(map).map_err(|e| CliError::Param(format!("cannot read {}: {e}", map.display())))?;
    let (space, side, values) = parse_map_csv(&text)?;
    let (pgm, norm) = render_pgm(side, &values);
    let name = stem(map)?;
    let sidecar = serde_json::json!({
        "source": map.display().to_string(),
        "space": space,
        "side": side,
        "normalization": norm,
    });
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut dir = OutDir::create(&ctx.out)?;
    let src = source_text(map)?;
    dir.write(ManifestRow { source: src.clone(), ..ManifestRow::new(format!("{name}.pgm"), "pgm") }, &pgm)?;
    dir.write(ManifestRow { source: src, ..ManifestRow::new(format!("{name}.json"), "normalization") }, json.as_bytes())?;
    dir.finish()?;
    Ok(format!("exported {side}x{side} map to {name}.pgm"))
}
