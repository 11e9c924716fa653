//! Declarative scenario configuration.
//!
//! A run is described by one JSON document; command-line `--set key=value`
//! overrides patch the document *before* deserialization, so every field —
//! model parameters, grid, scenario options — is overridable by dotted path
//! (`params.beta=40`, `grid.n_cells.0=512`, `continue.mode=2`).
//!
//! Top-level shape (unknown keys are rejected at every level):
//!
//! ```json
//! {
//!   "scenario": "bifurcate",          // optional; must match the subcommand
//!   "seed": 42,                        // optional; recorded in the manifest
//!   "params": { ... },                 // model parameters (exact field names)
//!   "grid": { "extents": [[0.0, 3.141592653589793]], "n_cells": [256] },
//!   "evolve":    { "t_end": 5.0, "sample_every": 0.05, "initial": {...} },
//!   "bifurcate": { "n_modes": 4, "method": "analytic" },
//!   "continue":  { "mode": 1, "beta_max": 500.0 },
//!   "segregate": { "mode": 1, "threshold": 0.05 },
//!   "packs":     { },
//!   "optimize":  { "n_max": 2, "beta_grid": [40.0, 150.0, 400.0] }
//! }
//! ```
//!
//! Sections for scenarios other than the one being run may be present (one
//! config can drive a whole study); only the active section is read.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use packsim::model::ModelParams;
use packsim::{Error, Result};

/// Fully parsed configuration: typed fields plus the merged raw document
/// (the latter is embedded verbatim in the run manifest).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Typed view.
    pub config: ScenarioConfig,
    /// The JSON document after `--set` overrides, as written to the manifest.
    pub document: Value,
}

/// Typed scenario configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional self-description; when present it must match the subcommand.
    #[serde(default)]
    pub scenario: Option<String>,
    /// Seed for randomized initial data; defaults to 0 and is always
    /// recorded in the manifest.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Model parameters (exact wire names, unknown keys rejected).
    pub params: ModelParams,
    /// Discretization.
    pub grid: GridSpec,
    /// Time-integration options.
    #[serde(default)]
    pub evolve: Option<EvolveOpts>,
    /// Bifurcation-threshold options.
    #[serde(default)]
    pub bifurcate: Option<BifurcateOpts>,
    /// Branch-continuation options.
    #[serde(default, rename = "continue")]
    pub continuation: Option<ContinueOpts>,
    /// Segregation-sweep options.
    #[serde(default)]
    pub segregate: Option<SegregateOpts>,
    /// Pack-bound options.
    #[serde(default)]
    pub packs: Option<PacksOpts>,
    /// Pack-count optimizer options.
    #[serde(default)]
    pub optimize: Option<OptimizeOpts>,
}

/// Rectangle and resolution.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Per-axis `(a, b)` bounds, one or two axes.
    pub extents: Vec<(f64, f64)>,
    /// Per-axis cell counts.
    pub n_cells: Vec<usize>,
}

impl GridSpec {
    /// Builds the grid, surfacing construction errors as usage errors.
    pub fn build(&self) -> Result<packsim::grid::Grid> {
        packsim::grid::build_grid(&self.extents, &self.n_cells)
    }
}

/// Initial data for the `evolve` scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Spatially constant state `(w_1, …, w_N, u)`.
    Constant {
        /// Component values, predators first, prey last.
        point: Vec<f64>,
    },
    /// Constant state with multiplicative noise `(1 + amplitude·ξ)`,
    /// ξ uniform in [−1, 1), stream fixed by the config seed.
    Perturbed {
        /// Component values, predators first, prey last.
        point: Vec<f64>,
        /// Relative noise amplitude.
        amplitude: f64,
    },
    /// Load a previously written state CSV (columns `x[,y],w_1,…,w_N,u`).
    StateCsv {
        /// Path, relative to the current directory.
        file: String,
    },
}

/// Options for `packsim evolve`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOpts {
    /// Final time.
    pub t_end: f64,
    /// Sampling interval for trajectory rows.
    pub sample_every: f64,
    /// Initial data.
    pub initial: InitialSpec,
    /// Initial step (default `0.25·h²/max(d, D)`).
    #[serde(default)]
    pub dt_init: Option<f64>,
    /// Step growth cap (default `sample_every`).
    #[serde(default)]
    pub dt_max: Option<f64>,
    /// Inflation ε of the monitored absorbing bounds.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Keep a state snapshot every this many samples.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    /// σ′ = factor·σ for the homogenization decay target.
    #[serde(default = "default_sigma_prime_factor")]
    pub sigma_prime_factor: f64,
}

fn default_epsilon() -> f64 {
    1e-2
}

fn default_sigma_prime_factor() -> f64 {
    0.5
}

/// Options for `packsim bifurcate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcateOpts {
    /// Number of nonzero modes to report thresholds for.
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// `analytic` (closed-form eigenvalues) or `discrete` (stencil
    /// eigenvalues of the assembled Laplacian).
    #[serde(default = "default_method")]
    pub method: String,
}

fn default_n_modes() -> usize {
    4
}

fn default_method() -> String {
    "analytic".to_owned()
}

impl Default for BifurcateOpts {
    fn default() -> Self {
        BifurcateOpts { n_modes: default_n_modes(), method: default_method() }
    }
}

/// Options for `packsim continue`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueOpts {
    /// Mode ordinal n ≥ 1 whose critical β seeds the branch.
    #[serde(default = "default_mode")]
    pub mode: usize,
    /// Branch direction at the seed: `1` or `-1` flips the sign of the
    /// seeded eigenfunction.
    #[serde(default = "default_direction")]
    pub direction: f64,
    /// Seed amplitude ε for branch switching.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// β cap for the continuation.
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    /// Initial arclength step (default 1e−2).
    #[serde(default)]
    pub ds_init: Option<f64>,
    /// Accepted-point budget (default 5000).
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Keep a state snapshot every this many accepted points.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

fn default_mode() -> usize {
    1
}

fn default_direction() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    1e-2
}

fn default_beta_max() -> f64 {
    500.0
}

impl Default for ContinueOpts {
    fn default() -> Self {
        ContinueOpts {
            mode: default_mode(),
            direction: default_direction(),
            eps: default_eps(),
            beta_max: default_beta_max(),
            ds_init: None,
            max_steps: None,
            snapshot_every: None,
        }
    }
}

/// Options for `packsim segregate`: a continuation run plus the sweep
/// diagnostics evaluated along it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegregateOpts {
    /// Continuation controls for the branch the sweep runs along.
    #[serde(flatten)]
    pub branch: ContinueOpts,
    /// Relative band height for free-boundary extraction.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.05
}

impl Default for SegregateOpts {
    fn default() -> Self {
        SegregateOpts { branch: ContinueOpts::default(), threshold: default_threshold() }
    }
}

/// Options for `packsim packs` (the counting bound).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacksOpts {
    /// Eigenvalue budget to resolve γ̄; grows geometrically from 16 when
    /// omitted.
    #[serde(default)]
    pub spectrum_modes: Option<usize>,
}

/// Options for `packsim optimize`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOpts {
    /// Largest pack count to sweep.
    pub n_max: usize,
    /// Competition strengths to sweep.
    pub beta_grid: Vec<f64>,
}

/// Reads the config file, applies `--set` overrides, and deserializes.
///
/// Every failure in this phase is a *usage* error (exit code 2).
pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::param(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut document: Value = serde_json::from_str(&text)?;
    for spec in overrides {
        apply_override(&mut document, spec)?;
    }
    let config: ScenarioConfig = serde_json::from_value(document.clone())?;
    config.params.validate()?;
    Ok(LoadedConfig { config, document })
}

/// Applies one `key=value` override. The key is a dotted path; path segments
/// that parse as integers index arrays, everything else indexes objects.
/// The value is parsed as JSON when possible and as a bare string otherwise.
pub fn apply_override(document: &mut Value, spec: &str) -> Result<()> {
    let Some((key, raw_value)) = spec.split_once('=') else {
        return Err(Error::param(format!("override {spec:?} is not of the form key=value")));
    };
    if key.is_empty() {
        return Err(Error::param(format!("override {spec:?} has an empty key")));
    }
    let value: Value =
        serde_json::from_str(raw_value).unwrap_or(Value::String(raw_value.to_owned()));

    let mut node = document;
    let segments: Vec<&str> = key.split('.').collect();
    for (depth, segment) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        match segment.parse::<usize>() {
            Ok(index) => {
                let Value::Array(items) = node else {
                    return Err(Error::param(format!(
                        "override {key:?}: segment {segment:?} indexes a non-array"
                    )));
                };
                if index >= items.len() {
                    return Err(Error::param(format!(
                        "override {key:?}: index {index} out of bounds (len {})",
                        items.len()
                    )));
                }
                if last {
                    items[index] = value;
                    return Ok(());
                }
                node = &mut items[index];
            }
            Err(_) => {
                let Value::Object(map) = node else {
                    return Err(Error::param(format!(
                        "override {key:?}: segment {segment:?} indexes a non-object"
                    )));
                };
                if last {
                    map.insert((*segment).to_owned(), value);
                    return Ok(());
                }
                node = map
                    .entry((*segment).to_owned())
                    .or_insert_with(|| Value::Object(serde_json::Map::new()));
            }
        }
    }
    unreachable!("segments is non-empty and the last segment returns");
}
