//! `nce`: reproducible experiment runs over the nce-core library.
//!
//! Exit codes: 0 success, 2 parameter error, 3 numerical error.

mod commands;
mod config;
mod output;
mod pool;
mod tables;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nce_core::NceError;
use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Param(String),
    Numerical(String),
}

impl From<NceError> for CliError {
    fn from(e: NceError) -> Self {
        if e.is_parameter_error() || matches!(e, NceError::SingularContrast) {
            CliError::Param(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Param(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Param(m) => write!(f, "parameter error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nce", version, about = "Strong-contrast expansion and neural contrast expansion experiments")]
struct Cli {
    /// Run configuration (JSON, schema version "v": 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's "out".
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config's "seed".
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 guarantees bitwise-reproducible outputs.
    #[arg(long, global = true, env = "NCE_THREADS")]
    threads: Option<usize>,
    /// Solver tolerance; overrides the config's "tol".
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Conduction,
    Wave,
}

/// Medium overrides shared by the commands that need phase properties.
#[derive(Args, Debug, Default)]
struct MediumArgs {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    prop0: Option<f64>,
    #[arg(long)]
    prop1: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate microstructures for every (setting, seed) and a manifest.
    Generate {
        #[arg(long)]
        side: Option<usize>,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        seeds_per_setting: Option<u64>,
    },
    /// Patch-averaged correlation sets for every field in a manifest.
    Stats {
        /// Directory holding the field manifest.
        #[arg(long)]
        fields: Option<PathBuf>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        window_radius: Option<f64>,
        #[arg(long)]
        patch_side: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Full-field effective tensors (targets.csv).
    Solve {
        #[arg(long)]
        fields: Option<PathBuf>,
        #[command(flatten)]
        medium: MediumArgs,
    },
    /// Strong-contrast predictions with the analytic kernel.
    Sce {
        #[arg(long)]
        corrs: Option<PathBuf>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        cavity_radius_cells: Option<usize>,
        #[command(flatten)]
        medium: MediumArgs,
    },
    /// Train a kernel model on correlation sets and targets.
    NceTrain {
        #[arg(long)]
        corrs: Option<PathBuf>,
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[command(flatten)]
        medium: MediumArgs,
    },
    /// Predictions from a trained kernel checkpoint.
    NcePredict {
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        corrs: Option<PathBuf>,
    },
    /// Order-2 sensitivity maps of uᵀΣₑu with respect to S₂.
    Sensitivity {
        /// One correlation container.
        #[arg(long)]
        corrs: Option<PathBuf>,
        /// Kernel checkpoint, needed for the learned map.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_parser = ["re", "im"])]
        part: Option<String>,
        #[arg(long, value_parser = ["real", "fourier"])]
        space: Option<String>,
        /// Comma-separated sources, e.g. analytic,learned.
        #[arg(long, value_delimiter = ',')]
        compare: Option<Vec<String>>,
        #[command(flatten)]
        medium: MediumArgs,
    },
    /// Connected fraction γ(N) of random point sets and its log-slope.
    Gamma {
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        side: Option<usize>,
    },
    /// Render a map CSV as an 8-bit PGM with a normalization sidecar.
    ExportMap {
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

fn apply_medium(cfg: &mut RunConfig, m: &MediumArgs) {
    if let Some(k) = m.kind {
        cfg.medium.kind = match k {
            KindArg::Conduction => nce_core::kernels::MediumKind::Conduction,
            KindArg::Wave => nce_core::kernels::MediumKind::Wave,
        };
    }
    if let Some(v) = m.prop0 {
        cfg.medium.prop0 = v;
    }
    if let Some(v) = m.prop1 {
        cfg.medium.prop1 = v;
    }
    if let Some(v) = m.k0 {
        cfg.medium.k0 = v;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.tol, cli.tol);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let threads = match cfg.threads {
        Some(0) => return Err(CliError::Param("threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if !(cfg.tol > 0.0) {
        return Err(CliError::Param("tol must be positive".into()));
    }
    let out = cfg.out.clone().ok_or_else(|| CliError::Param("no output directory: pass --out or set \"out\"".into()))?;
    let need = |p: Option<PathBuf>, what: &str| {
        p.ok_or_else(|| CliError::Param(format!("missing input: pass --{what} or set inputs.{what}")))
    };
    let ctx = |cfg: RunConfig| commands::Ctx { cfg, out: out.clone(), threads };
    match cli.command {
        Command::Generate { side, phi, seeds_per_setting } => {
            set(&mut cfg.generate.side, side);
            set(&mut cfg.generate.phi, phi);
            set(&mut cfg.generate.seeds_per_setting, seeds_per_setting);
            commands::generate(&ctx(cfg))
        }
        Command::Stats { fields, order, window_radius, patch_side, count } => {
            let fields = need(fields.or(cfg.inputs.fields.clone()), "fields")?;
            set(&mut cfg.stats.order, order);
            set(&mut cfg.stats.window_radius, window_radius);
            set(&mut cfg.patches.patch_side, patch_side);
            set(&mut cfg.patches.count, count);
            commands::stats(&ctx(cfg), &fields)
        }
        Command::Solve { fields, medium } => {
            let fields = need(fields.or(cfg.inputs.fields.clone()), "fields")?;
            apply_medium(&mut cfg, &medium);
            commands::solve(&ctx(cfg), &fields)
        }
        Command::Sce { corrs, order, cavity_radius_cells, medium } => {
            let corrs = need(corrs.or(cfg.inputs.corrs.clone()), "corrs")?;
            set(&mut cfg.series.order, order);
            set(&mut cfg.series.cavity_radius_cells, cavity_radius_cells);
            apply_medium(&mut cfg, &medium);
            commands::sce(&ctx(cfg), &corrs)
        }
        Command::NceTrain { corrs, targets, max_epochs, step_size, medium } => {
            let corrs = need(corrs.or(cfg.inputs.corrs.clone()), "corrs")?;
            let targets = need(targets.or(cfg.inputs.targets.clone()), "targets")?;
            set(&mut cfg.train.max_epochs, max_epochs);
            set(&mut cfg.train.step_size, step_size);
            if cli.seed.is_some() {
                cfg.train.seed = cfg.seed;
            }
            apply_medium(&mut cfg, &medium);
            commands::nce_train(&ctx(cfg), &corrs, &targets)
        }
        Command::NcePredict { kernel, corrs } => {
            let kernel = need(kernel.or(cfg.inputs.kernel.clone()), "kernel")?;
            let corrs = need(corrs.or(cfg.inputs.corrs.clone()), "corrs")?;
            commands::nce_predict(&ctx(cfg), &kernel, &corrs)
        }
        Command::Sensitivity { corrs, kernel, theta, part, space, compare, medium } => {
            let corrs = need(corrs.or(cfg.inputs.corrs.clone()), "corrs")?;
            let kernel = kernel.or(cfg.inputs.kernel.clone());
            set(&mut cfg.sensitivity.theta, theta);
            if let Some(p) = part {
                cfg.sensitivity.part = if p == "im" { nce_core::sensitivity::Part::Im } else { nce_core::sensitivity::Part::Re };
            }
            if let Some(s) = space {
                cfg.sensitivity.space = if s == "fourier" {
                    nce_core::sensitivity::MapSpace::Fourier
                } else {
                    nce_core::sensitivity::MapSpace::Real
                };
            }
            set(&mut cfg.sensitivity.compare, compare);
            apply_medium(&mut cfg, &medium);
            commands::sensitivity(&ctx(cfg), &corrs, kernel.as_deref())
        }
        Command::Gamma { r0, n_min, n_max, samples, side } => {
            set(&mut cfg.gamma.r0, r0);
            set(&mut cfg.gamma.n_min, n_min);
            set(&mut cfg.gamma.n_max, n_max);
            set(&mut cfg.gamma.samples, samples);
            set(&mut cfg.gamma.side, side);
            commands::gamma(&ctx(cfg))
        }
        Command::ExportMap { map } => {
            let map = need(map.or(cfg.inputs.map.clone()), "map")?;
            commands::export_map(&ctx(cfg), &map)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nce: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
