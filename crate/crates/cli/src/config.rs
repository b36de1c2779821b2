//! The JSON run configuration shared by every command.

use knockoffs::copula::GeneratorSpec;
use knockoffs::ModelSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

/// Seed used when neither the config nor `--seed` gives one.
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Diagnose,
    CheckCopula,
    FilterSim,
    TvDecay,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Sample => "sample",
            Command::Diagnose => "diagnose",
            Command::CheckCopula => "check-copula",
            Command::FilterSim => "filter-sim",
            Command::TvDecay => "tv-decay",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Rows for `sample`/`diagnose`, draws for `tv-decay`, replicates for
    /// `filter-sim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// `diagnose` only: read `(X, X̃)` from this CSV instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_copula: Option<CheckCopulaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv: Option<TvConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default = "default_max_rows")]
    pub max_rows: usize,
    /// 1-based swap sets for the energy test; default every singleton.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap_sets: Option<Vec<Vec<usize>>>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { alpha: default_alpha(), n_permutations: default_permutations(), max_rows: default_max_rows(), swap_sets: None }
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_permutations() -> usize {
    200
}
fn default_max_rows() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedPair {
    pub outer: GeneratorSpec,
    pub inner: GeneratorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckCopulaConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Monotonicity order; default `2p` for a generator shared by `C` and
    /// every `D_i`, otherwise `p` for `C` and 2 for each `D_i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub nested: Vec<NestedPair>,
    /// Also evaluate the (advisory) density condition when `p ≤ 3`.
    #[serde(default = "default_true")]
    pub smoothness: bool,
}

impl Default for CheckCopulaConfig {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            tolerance: default_tolerance(),
            order: None,
            t_grid: None,
            nested: Vec::new(),
            smoothness: true,
        }
    }
}

fn default_resolution() -> usize {
    8
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_true() -> bool {
    true
}

/// Either an explicit `beta` or `nonnulls` evenly spread coefficients of
/// size `amplitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_obs: usize,
    pub q: f64,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default = "default_true")]
    pub plus: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonnulls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<u64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_boot")]
    pub n_boot: usize,
    /// Optional gate on the TV at the finest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_final_tv: Option<f64>,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { levels: default_levels(), bins: default_bins(), bbox: None, n_boot: default_boot(), max_final_tv: None }
    }
}

fn default_levels() -> Vec<u64> {
    vec![2, 4, 8, 16, 32, 64]
}
fn default_bins() -> usize {
    20
}
fn default_boot() -> usize {
    200
}

/// Parses a config, reporting the offending field path and position.
pub fn parse(text: &str, origin: &Path) -> Result<RunConfig, String> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path == "." { String::new() } else { format!(" at `{path}`") };
        format!("{}{at}: {inner}", origin.display())
    })?;
    de.end().map_err(|e| format!("{}: {e}", origin.display()))?;
    Ok(cfg)
}
