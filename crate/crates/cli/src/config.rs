//! Schema-versioned run configuration. Every section has defaults matching the
//! desk-scale profile; unknown keys are rejected at every level.

use nce_core::kernels::MediumSpec;
use nce_core::nce::TrainConfig;
use nce_core::sensitivity::{MapSpace, Part};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub v: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Relative residual tolerance of the full-field solvers.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_medium")]
    pub medium: MediumSpec,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub patches: PatchConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub gamma: GammaSection,
    #[serde(default)]
    pub inputs: Inputs,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_medium() -> MediumSpec {
    MediumSpec::conduction(5.0, 20.0)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            v: SCHEMA_VERSION,
            out: None,
            seed: 0,
            threads: None,
            tol: default_tol(),
            medium: default_medium(),
            generate: GenerateConfig::default(),
            patches: PatchConfig::default(),
            stats: StatsConfig::default(),
            series: SeriesSection::default(),
            train: TrainConfig::default(),
            sensitivity: SensitivitySection::default(),
            gamma: GammaSection::default(),
            inputs: Inputs::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub corr_len_x: f64,
    pub corr_len_y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Gaussian,
    Spectral,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub side: usize,
    pub phi: f64,
    pub seeds_per_setting: u64,
    pub generator: Generator,
    pub settings: Vec<Setting>,
    /// Spectral-shaped generator only.
    pub k_exclusion: f64,
    pub iterations: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        // x fixed small, y from 5% to 60% of the domain edge in ten steps.
        let settings = (0..10)
            .map(|i| Setting { corr_len_x: 0.001, corr_len_y: 0.05 + 0.55 * i as f64 / 9.0 })
            .collect();
        GenerateConfig {
            side: 256,
            phi: 0.5,
            seeds_per_setting: 20,
            generator: Generator::Gaussian,
            settings,
            k_exclusion: 20.0,
            iterations: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    /// Patch edge in cells; 0 uses the whole field as a single patch.
    pub patch_side: usize,
    pub count: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig { patch_side: 64, count: 64 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub order: usize,
    pub window_radius: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { order: 2, window_radius: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    pub order: usize,
    pub cavity_radius_cells: usize,
    pub window_radius: Option<f64>,
}

impl Default for SeriesSection {
    fn default() -> Self {
        SeriesSection { order: 2, cavity_radius_cells: 1, window_radius: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    pub theta: f64,
    pub part: Part,
    pub space: MapSpace,
    /// Kernel sources to map: "analytic" and/or "learned".
    pub compare: Vec<String>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection { theta: 0.0, part: Part::Re, space: MapSpace::Real, compare: vec!["analytic".into()] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSection {
    pub r0: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub samples: u64,
    /// Grid side for lattice sampling; 0 samples the continuum.
    pub side: usize,
}

impl Default for GammaSection {
    fn default() -> Self {
        GammaSection { r0: 0.1, n_min: 2, n_max: 6, samples: 20_000_000, side: 0 }
    }
}

/// Input locations, resolved against the directory of the config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub fields: Option<PathBuf>,
    pub corrs: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub map: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a config document; `base` is the directory relative paths refer to.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Param(format!("config is not valid JSON: {e}")))?;
        match value.get("v").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(CliError::Param(format!("unsupported config schema version {v}"))),
            None => return Err(CliError::Param("config lacks the schema version key \"v\"".into())),
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Param(format!("config schema violation: {e}")))?;
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        rebase(&mut cfg.out);
        rebase(&mut cfg.inputs.fields);
        rebase(&mut cfg.inputs.corrs);
        rebase(&mut cfg.inputs.targets);
        rebase(&mut cfg.inputs.kernel);
        rebase(&mut cfg.inputs.map);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Param(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }
}
