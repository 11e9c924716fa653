//! Scenario orchestration: each runner wires validated inputs through the
//! library and writes its artifacts into the output directory, returning the
//! list of files written (relative names, for the manifest).

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use packsim::continuation::{
    bifurcation_points, branch_switch, continue_branch, Branch, ContinuationConfig,
};
use packsim::equilibria::catalog;
use packsim::evolve::{
    fitted_decay_rate, perturbed_state, run, sigma_criterion, RunConfig, SystemState,
};
use packsim::grid::{neumann_spectrum, Grid, Spectrum, SpectrumMethod};
use packsim::io;
use packsim::model::{ModelParams, StatePoint};
use packsim::packs::{optimize_packs, pack_bound};
use packsim::segregation::{
    beta_sweep, comparability, energy_slack, free_boundary, gradient_trend, lipschitz_profile,
};
use packsim::{Error, Result};

use crate::config::{
    BifurcateOpts, ContinueOpts, EvolveOpts, InitialSpec, ScenarioConfig, SegregateOpts,
};

/// Artifacts written by a scenario, as manifest-relative file names.
pub struct Written {
    files: Vec<String>,
}

impl Written {
    fn new() -> Written {
        Written { files: Vec::new() }
    }

    fn json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        io::write_json(&dir.join(name), value)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn push(&mut self, name: String) {
        self.files.push(name);
    }

    /// Sorted file names for the manifest.
    pub fn into_files(mut self) -> Vec<String> {
        self.files.sort();
        self.files
    }
}

/// Dispatches to the named scenario runner.
pub fn run_scenario(scenario: &str, config: &ScenarioConfig, out: &Path) -> Result<Vec<String>> {
    if let Some(declared) = &config.scenario {
        if declared != scenario {
            return Err(Error::param(format!(
                "config declares scenario {declared:?} but the {scenario:?} subcommand was invoked"
            )));
        }
    }
    let grid = config.grid.build()?;
    let params = &config.params;
    let seed = config.seed.unwrap_or(0);
    let written = match scenario {
        "evolve" => run_evolve(params, &grid, seed, required(&config.evolve, "evolve")?, out)?,
        "equilibria" => run_equilibria(params, &grid, out)?,
        "bifurcate" => {
            run_bifurcate(params, &grid, &config.bifurcate.clone().unwrap_or_default(), out)?
        }
        "continue" => {
            run_continue(params, &grid, &config.continuation.clone().unwrap_or_default(), out)?
        }
        "segregate" => {
            run_segregate(params, &grid, &config.segregate.clone().unwrap_or_default(), out)?
        }
        "packs" => run_packs(params, &grid, config.packs.clone().unwrap_or_default().spectrum_modes, out)?,
        "optimize" => run_optimize(params, &grid, required(&config.optimize, "optimize")?, out)?,
        other => return Err(Error::param(format!("unknown scenario {other:?}"))),
    };
    Ok(written.into_files())
}

fn required<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::param(format!("scenario {name:?} needs a {name:?} config section")))
}

fn initial_state(
    params: &ModelParams,
    grid: &Grid,
    seed: u64,
    spec: &InitialSpec,
) -> Result<SystemState> {
    let require_ncomp = |point: &[f64]| -> Result<StatePoint> {
        if point.len() != params.ncomp() {
            return Err(Error::param(format!(
                "initial point has {} components; the model has {} (w_1…w_N, u)",
                point.len(),
                params.ncomp()
            )));
        }
        Ok(StatePoint::from_slice(point))
    };
    match spec {
        InitialSpec::Constant { point } => {
            Ok(SystemState::constant(grid, &require_ncomp(point)?))
        }
        InitialSpec::Perturbed { point, amplitude } => {
            Ok(perturbed_state(grid, &require_ncomp(point)?, *amplitude, seed))
        }
        InitialSpec::StateCsv { file } => {
            let fields = io::read_state_csv(Path::new(file), grid)?;
            if fields.len() != params.ncomp() {
                return Err(Error::param(format!(
                    "state file {file} has {} components; the model has {}",
                    fields.len(),
                    params.ncomp()
                )));
            }
            SystemState::from_fields(0.0, grid, fields)
        }
    }
}

fn run_evolve(
    params: &ModelParams,
    grid: &Grid,
    seed: u64,
    opts: &EvolveOpts,
    out: &Path,
) -> Result<Written> {
    let initial = initial_state(params, grid, seed, &opts.initial)?;
    let run_config = RunConfig {
        t_end: opts.t_end,
        sample_every: opts.sample_every,
        dt_init: opts.dt_init,
        dt_max: opts.dt_max,
        epsilon: opts.epsilon,
        snapshot_every: opts.snapshot_every,
    };
    let trajectory = run(params, &initial, &run_config)?;

    let mut written = Written::new();
    io::write_trajectory_csv(&out.join("trajectory.csv"), &trajectory.samples)?;
    written.push("trajectory.csv".to_owned());
    io::write_state_csv(&out.join("final_state.csv"), &trajectory.final_state)?;
    written.push("final_state.csv".to_owned());
    for (sample_idx, state) in &trajectory.snapshots {
        let name = format!("snapshot_{sample_idx:05}.csv");
        io::write_state_csv(&out.join(&name), state)?;
        written.push(name);
    }

    // Homogenization diagnostics are advisory: σ needs the absorbing box
    // (μ > 0 and viable margins) and the decay fit needs resolved gradients,
    // so both are reported as null when unavailable.
    let sigma = sigma_criterion(params, grid.extents()).ok();
    let sigma_prime = sigma.as_ref().map(|s| opts.sigma_prime_factor * s.sigma);
    let decay = fitted_decay_rate(&trajectory).ok();
    let report = json!({
        "t_end": trajectory.final_state.t,
        "steps_taken": trajectory.steps_taken,
        "steps_rejected": trajectory.steps_rejected,
        "monitored_bounds": trajectory.monitored_bounds,
        "transient_end": trajectory.transient_end,
        "violations": trajectory.violations,
        "sigma": sigma,
        "sigma_prime": sigma_prime,
        "fitted_decay": decay,
    });
    written.json(out, "evolve_report.json", &report)?;
    Ok(written)
}

fn run_equilibria(params: &ModelParams, grid: &Grid, out: &Path) -> Result<Written> {
    let entries = catalog(params, grid.extents())?;
    let mut written = Written::new();
    written.json(out, "catalog.json", &entries)?;
    Ok(written)
}

/// Builds a spectrum with at least `n_modes` nonzero eigenvalue groups.
fn spectrum_for_modes(grid: &Grid, n_modes: usize, method: SpectrumMethod) -> Result<Spectrum> {
    let node_cap: usize = grid.n_cells().iter().product();
    let mut m = (n_modes + 1).max(4);
    loop {
        if method == SpectrumMethod::Discrete {
            m = m.min(node_cap);
        }
        let spectrum = neumann_spectrum(grid, m, method)?;
        if spectrum.grouped().len() > n_modes {
            return Ok(spectrum);
        }
        if method == SpectrumMethod::Discrete && m == node_cap {
            return Err(Error::Spectrum {
                message: format!(
                    "grid resolves only {} distinct modes; {n_modes} requested",
                    spectrum.grouped().len().saturating_sub(1)
                ),
            });
        }
        m *= 2;
    }
}

fn parse_method(name: &str) -> Result<SpectrumMethod> {
    match name {
        "analytic" => Ok(SpectrumMethod::Analytic),
        "discrete" => Ok(SpectrumMethod::Discrete),
        other => Err(Error::param(format!(
            "method must be \"analytic\" or \"discrete\", got {other:?}"
        ))),
    }
}

fn run_bifurcate(
    params: &ModelParams,
    grid: &Grid,
    opts: &BifurcateOpts,
    out: &Path,
) -> Result<Written> {
    let method = parse_method(&opts.method)?;
    let spectrum = spectrum_for_modes(grid, opts.n_modes, method)?;
    let points = bifurcation_points(params, &spectrum)?;
    let points = &points[..opts.n_modes.min(points.len())];

    let mut written = Written::new();
    written.json(out, "bifurcation.json", &points)?;
    io::write_spectrum_json(&out.join("spectrum.json"), &spectrum)?;
    written.push("spectrum.json".to_owned());
    Ok(written)
}

/// Shared branch construction for `continue` and `segregate`.
fn trace_branch(params: &ModelParams, grid: &Grid, opts: &ContinueOpts) -> Result<Branch> {
    if opts.mode == 0 {
        return Err(Error::param("mode ordinals start at 1"));
    }
    let spectrum = spectrum_for_modes(grid, opts.mode, SpectrumMethod::Analytic)?;
    let points = bifurcation_points(params, &spectrum)?;
    let origin = points
        .get(opts.mode - 1)
        .ok_or_else(|| Error::param(format!("no bifurcation point for mode {}", opts.mode)))?;
    let seed = branch_switch(params, grid, origin, opts.eps)?;
    let mut config = ContinuationConfig { beta_max: opts.beta_max, ..ContinuationConfig::default() };
    if let Some(ds) = opts.ds_init {
        config.ds_init = ds;
    }
    if let Some(steps) = opts.max_steps {
        config.max_steps = steps;
    }
    continue_branch(params, origin, &seed, opts.direction, &config)
}

fn run_continue(
    params: &ModelParams,
    grid: &Grid,
    opts: &ContinueOpts,
    out: &Path,
) -> Result<Written> {
    let branch = trace_branch(params, grid, opts)?;
    let name = format!("branch{}", opts.mode);
    let (_, files) = io::write_branch_artifacts(out, &name, &branch, opts.snapshot_every)?;
    let mut written = Written::new();
    for f in files {
        written.push(file_name(&f));
    }
    Ok(written)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn run_segregate(
    params: &ModelParams,
    grid: &Grid,
    opts: &SegregateOpts,
    out: &Path,
) -> Result<Written> {
    let branch = trace_branch(params, grid, &opts.branch)?;
    let report = beta_sweep(params, &branch)?;
    let comparability = comparability(&report);
    let trend = gradient_trend(&lipschitz_profile(&branch));

    // Worst energy-inequality slack over the branch (≥ ~−1e−8 on genuine
    // segregated states; a strongly negative value flags a broken point).
    let mut min_slack = f64::INFINITY;
    let mut interface_rows = Vec::with_capacity(branch.points.len());
    for p in &branch.points {
        for s in energy_slack(params, p.beta, &p.state)? {
            min_slack = min_slack.min(s);
        }
        let fb = free_boundary(grid, &p.state, opts.threshold)?;
        interface_rows.push((p.beta, fb.interfaces));
    }

    let mut written = Written::new();
    let document = json!({
        "sweep": report,
        "comparability": comparability,
        "gradient_trend": trend,
        "energy_slack_min": min_slack,
    });
    written.json(out, "segregation.json", &document)?;
    io::write_interfaces_csv(&out.join("interfaces.csv"), &interface_rows)?;
    written.push("interfaces.csv".to_owned());
    Ok(written)
}

fn run_packs(
    params: &ModelParams,
    grid: &Grid,
    spectrum_modes: Option<usize>,
    out: &Path,
) -> Result<Written> {
    params.validate()?;
    if params.mu == 0.0 {
        return Err(Error::param(
            "gamma_bar undefined: the pack bound needs μ > 0 (run `packsim validate` for details)",
        ));
    }
    let spectrum = match spectrum_modes {
        Some(m) => neumann_spectrum(grid, m, SpectrumMethod::Analytic)?,
        None => {
            // Grow the eigenvalue budget geometrically until γ̄ is resolved.
            let gamma_bar = gamma_bar(params)?;
            let node_cap: usize = grid.n_cells().iter().product();
            let mut m = 16;
            loop {
                let spectrum = neumann_spectrum(grid, m, SpectrumMethod::Analytic)?;
                let last = *spectrum.eigenvalues().last().expect("m >= 1");
                if last >= gamma_bar {
                    break spectrum;
                }
                if m > node_cap.max(1 << 20) {
                    return Err(Error::Spectrum {
                        message: format!("γ̄ = {gamma_bar:.6e} not reached with {m} modes"),
                    });
                }
                m *= 2;
            }
        }
    };
    let report = pack_bound(params, &spectrum, grid)?;
    let mut written = Written::new();
    written.json(out, "pack_bound.json", &report)?;
    Ok(written)
}

/// γ̄ = max_i (λk_i − μω_i)/(d_i μ) over viable predators.
fn gamma_bar(params: &ModelParams) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for i in 0..params.n_predators {
        let margin = params.lambda * params.kpred[i] - params.mu * params.omega[i];
        if margin > 0.0 {
            best = best.max(margin / (params.d[i] * params.mu));
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::param("no predator has a positive viability margin"))
    }
}

fn run_optimize(
    params: &ModelParams,
    grid: &Grid,
    opts: &crate::config::OptimizeOpts,
    out: &Path,
) -> Result<Written> {
    let report = optimize_packs(params, grid, opts.n_max, &opts.beta_grid)?;
    let mut written = Written::new();
    written.json(out, "optimize.json", &report)?;
    io::write_population_csv(&out.join("population.csv"), &report)?;
    written.push("population.csv".to_owned());
    if let Some(best) = report.best {
        io::write_state_csv(&out.join("best_state.csv"), &report.candidates[best].state)?;
        written.push("best_state.csv".to_owned());
    }
    Ok(written)
}

/// One diagnostic from `packsim validate`.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    /// Machine-readable code.
    pub code: String,
    /// Human-readable explanation.
    pub message: String,
}

fn diag(code: &str, message: String) -> Diagnostic {
    Diagnostic { code: code.to_owned(), message }
}

/// Config health checks: structural validity, viability margins, μ = 0
/// limitations, and resonance proximity of γ̄ to a Neumann eigenvalue.
/// A clean config yields an empty list.
pub fn validate_config(config: &ScenarioConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let params = &config.params;

    if let Err(e) = params.validate() {
        out.push(diag("param", e.to_string()));
        return out; // Structural failures make the rest unreliable.
    }
    let grid = match config.grid.build() {
        Ok(g) => g,
        Err(e) => {
            out.push(diag("grid", e.to_string()));
            return out;
        }
    };

    let hypotheses = params.check_hypotheses();
    for (i, &margin) in hypotheses.margins.iter().enumerate() {
        if margin <= 0.0 {
            out.push(diag(
                "nonviable_predator",
                format!(
                    "predator {} has margin λk − μω = {margin:.6e} ≤ 0: it cannot persist \
                     (extinction clause)",
                    i + 1
                ),
            ));
        }
    }

    if params.mu == 0.0 {
        out.push(diag(
            "mu_zero",
            "μ = 0: gamma_bar undefined (pack bound unavailable), no absorbing box \
             (bound monitors and constant catalog unavailable); the mass identities apply instead"
                .to_owned(),
        ));
        return out;
    }

    // Resonance: γ̄ within 1e−8 (relative) of a Neumann eigenvalue makes the
    // pack count ill-conditioned against coefficient perturbations.
    if let Ok(gb) = gamma_bar(params) {
        let node_cap: usize = grid.n_cells().iter().product();
        let mut m = 16usize;
        let spectrum = loop {
            match neumann_spectrum(&grid, m, SpectrumMethod::Analytic) {
                Ok(s) if *s.eigenvalues().last().expect("m >= 1") >= gb => break Some(s),
                Ok(_) if m <= node_cap.max(1 << 20) => m *= 2,
                _ => break None,
            }
        };
        if let Some(spectrum) = spectrum {
            for group in spectrum.grouped() {
                let n = group.index;
                let gamma_n = group.eigenvalue;
                if (gamma_n - gb).abs() <= 1e-8 * (1.0 + gb.abs()) {
                    out.push(diag(
                        "resonance",
                        format!(
                            "γ̄ = {gb} coincides with the Neumann eigenvalue γ_{n} = {gamma_n} \
                             to 1e-8: the pack bound is discontinuous here"
                        ),
                    ));
                }
            }
        }
    }
    out
}

/// Appends diagnostics computed against a specific scenario (cross-section
/// consistency, required sections).
pub fn validate_for_scenario(config: &ScenarioConfig, out: &mut Vec<Diagnostic>) {
    let Some(scenario) = config.scenario.as_deref() else {
        return;
    };
    match scenario {
        "evolve" if config.evolve.is_none() => {
            out.push(diag("missing_section", "scenario \"evolve\" needs an \"evolve\" section".to_owned()));
        }
        "optimize" if config.optimize.is_none() => {
            out.push(diag(
                "missing_section",
                "scenario \"optimize\" needs an \"optimize\" section".to_owned(),
            ));
        }
        "packs" if config.params.mu == 0.0 => {
            // Already covered by the mu_zero diagnostic, but name the
            // scenario explicitly as the blocked one.
            out.push(diag(
                "scenario_blocked",
                "scenario \"packs\": gamma_bar undefined at μ = 0".to_owned(),
            ));
        }
        _ => {}
    }
}
