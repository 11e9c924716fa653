//! Temporary measurement probe (deleted before release).

use std::f64::consts::PI;
use std::time::Instant;

use packsim::continuation::{
    bifurcation_points, branch_switch, continue_branch, Branch, ContinuationConfig,
};
use packsim::equilibria::{simple_point, steady_newton, NewtonConfig};
use packsim::evolve::{
    compare_means_to_ode, fitted_decay_rate, ode_trajectory, perturbed_state, run, sigma_criterion,
    RunConfig, SystemState,
};
use packsim::grid::{build_grid, neumann_spectrum, Field, SpectrumMethod};
use packsim::model::{ModelParams, StatePoint};
use packsim::packs::{population, solve_half_system_1d, verify_identities_mu0};
use packsim::segregation::{beta_sweep, comparability, energy_slack, lipschitz_profile};

fn reference_pair(beta: f64) -> ModelParams {
    ModelParams {
        lambda: 1.0,
        mu: 0.05,
        n_predators: 2,
        omega: vec![1.0, 1.0],
        kpred: vec![1.0, 1.0],
        mu_self: vec![0.0, 0.0],
        d: vec![1.0, 1.0],
        dprey: 1.0,
        beta,
        a: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    }
}

fn trace_branch(n: usize, mode: usize, beta_max: f64) -> Branch {
    let params = reference_pair(1.0);
    let grid = build_grid(&[(0.0, PI)], &[n]).unwrap();
    let spectrum = neumann_spectrum(&grid, 8, SpectrumMethod::Analytic).unwrap();
    let bps = bifurcation_points(&params, &spectrum).unwrap();
    let bp = &bps[mode - 1];
    let seed = branch_switch(&params, &grid, bp, 1e-2).unwrap();
    let config = ContinuationConfig { beta_max, ..ContinuationConfig::default() };
    continue_branch(&params, bp, &seed, 1.0, &config).unwrap()
}

fn section_branch() {
    for mode in [1usize, 2] {
        let t0 = Instant::now();
        let branch = trace_branch(256, mode, 500.0);
        let dt = t0.elapsed().as_secs_f64();
        let last = branch.points.last().unwrap();
        let max_res = branch.points.iter().map(|p| p.residual).fold(0.0f64, f64::max);
        let zcs: std::collections::BTreeSet<usize> =
            branch.points.iter().map(|p| p.zero_count).collect();
        println!(
            "branch mode {mode}: {:.1}s, {} pts, last beta {:.4}, term {:?}, max residual {:.3e}, zero counts {:?}",
            dt,
            branch.points.len(),
            last.beta,
            branch.termination,
            max_res,
            zcs
        );
    }
}

fn section_segregation() {
    let t0 = Instant::now();
    let branch = trace_branch(256, 1, 500.0);
    println!("trace: {:.1}s", t0.elapsed().as_secs_f64());
    let params = reference_pair(1.0);
    let report = beta_sweep(&params, &branch).unwrap();
    let beta1 = 20.0 / 9.0;
    let near = |target: f64| -> usize {
        let mut best = 0;
        for (i, &b) in report.betas.iter().enumerate() {
            if (b - target).abs() < (report.betas[best] - target).abs() {
                best = i;
            }
        }
        best
    };
    let i_lo = near(2.0 * beta1);
    let i_hi = near(500.0);
    println!(
        "overlap at beta {:.4} = {:.6e}; at beta {:.4} = {:.6e}; ratio {:.4}",
        report.betas[i_lo],
        report.overlaps[i_lo],
        report.betas[i_hi],
        report.overlaps[i_hi],
        report.overlaps[i_hi] / report.overlaps[i_lo]
    );
    let comp = comparability(&report);
    println!("M = {:.12} at beta {:.3}", comp.m, comp.at_beta);
    let profile = lipschitz_profile(&branch);
    let tail: Vec<&(f64, f64)> = profile.iter().filter(|(b, _)| (50.0..=500.0).contains(b)).collect();
    let gmax = tail.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let gmin = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    println!("gradient over [50,500]: min {:.4}, max {:.4}, ratio {:.4} ({} pts)", gmin, gmax, gmax / gmin, tail.len());
    let mut worst = f64::INFINITY;
    for pt in &branch.points {
        let slacks = energy_slack(&params, pt.beta, &pt.state).unwrap();
        for s in slacks {
            worst = worst.min(s);
        }
    }
    println!("min energy slack: {:.3e}", worst);
    println!("classification: {:?}", report.classification);
}

fn section_half_system() {
    let beta_cap: f64 = std::env::args().nth(2).map_or(500.0, |s| s.parse().unwrap());
    let n_full: usize = std::env::args().nth(3).map_or(256, |s| s.parse().unwrap());
    let n_half = n_full / 2;
    let t0 = Instant::now();
    let branch = trace_branch(n_full, 1, beta_cap);
    let last = branch.points.last().unwrap();
    println!(
        "trace: {:.1}s, {} pts, last beta {:.4}, term {:?}",
        t0.elapsed().as_secs_f64(),
        branch.points.len(),
        last.beta,
        branch.termination
    );
    {
        let bw1 = last.state.fields[0].as_slice();
        let bw2 = last.state.fields[1].as_slice();
        let bu = last.state.fields[2].as_slice();
        println!(
            "branch: w1(0) = {:.6}, w1(pi/2-) = {:.4e}, w1(pi) = {:.3e}, w2(pi/2+) = {:.4e}, u(0) = {:.6}, u(pi/2) = {:.6}",
            bw1[0],
            bw1[n_half - 1],
            bw1[n_full - 1],
            bw2[n_half],
            bu[0],
            0.5 * (bu[n_half - 1] + bu[n_half])
        );
    }

    // Half system on (pi/2, pi): predator Dirichlet wall at the left end
    // (the interface), no-flux at pi (the outer boundary).
    let single = ModelParams {
        lambda: 1.0,
        mu: 0.05,
        n_predators: 1,
        omega: vec![1.0],
        kpred: vec![1.0],
        mu_self: vec![0.0],
        d: vec![1.0],
        dprey: 1.0,
        beta: 0.0,
        a: vec![vec![0.0]],
    };
    let half_grid = build_grid(&[(PI / 2.0, PI)], &[n_half]).unwrap();
    let point = simple_point(&single, 0).unwrap();
    let w_amp = point.w[0];
    let guess_w = Field::from_fn(&half_grid, |x| w_amp * (x[0] - PI / 2.0).sin());
    let guess_u = Field::constant(&half_grid, point.u);
    let guess = SystemState::from_fields(0.0, &half_grid, vec![guess_w, guess_u]).unwrap();
    let half = solve_half_system_1d(&single, PI / 2.0, &guess).unwrap();
    println!(
        "half system: converged {}, residual {:.3e}, iters {}",
        half.converged, half.residual_sup, half.iterations
    );
    let hw = half.state.fields[0].as_slice();
    let hu = half.state.fields[1].as_slice();
    println!("half w: at interface {:.3e}, at wall {:.6}", hw[0], hw[n_half - 1]);
    println!("half u: at interface {:.6}, at wall {:.6}", hu[0], hu[n_half - 1]);

    // Build the full two-predator state: w2 occupies (pi/2, pi) directly,
    // w1 is its mirror image, u is glued evenly about pi/2.
    let full_grid = build_grid(&[(0.0, PI)], &[n_full]).unwrap();
    let mut w1 = vec![0.0; n_full];
    let mut w2 = vec![0.0; n_full];
    let mut u = vec![0.0; n_full];
    for j in 0..n_half {
        w2[n_half + j] = hw[j];
        w1[n_half - 1 - j] = hw[j];
        u[n_half + j] = hu[j];
        u[n_half - 1 - j] = hu[j];
    }
    let built = SystemState::from_fields(
        0.0,
        &full_grid,
        vec![
            Field::from_values(&full_grid, w1).unwrap(),
            Field::from_values(&full_grid, w2).unwrap(),
            Field::from_values(&full_grid, u).unwrap(),
        ],
    )
    .unwrap();

    // Compare both labelings (the branch is defined up to the swap).
    let h = PI / n_full as f64;
    for swap in [false, true] {
        let bw1 = last.state.fields[if swap { 1 } else { 0 }].as_slice();
        let bw2 = last.state.fields[if swap { 0 } else { 1 }].as_slice();
        let bu = last.state.fields[2].as_slice();
        let sup_at = |a: &[f64], b: &[f64]| -> (f64, f64) {
            let mut best = (0.0f64, 0.0f64);
            for (j, (&x, &y)) in a.iter().zip(b).enumerate() {
                if (x - y).abs() > best.0 {
                    best = ((x - y).abs(), (j as f64 + 0.5) * h);
                }
            }
            best
        };
        let d1 = sup_at(bw1, built.fields[0].as_slice());
        let d2 = sup_at(bw2, built.fields[1].as_slice());
        let du = sup_at(bu, built.fields[2].as_slice());
        println!(
            "swap={swap}: sup|w1-built| = {:.4e} at x={:.3}, sup|w2-built| = {:.4e} at x={:.3}, sup|u-built| = {:.4e} at x={:.3}",
            d1.0, d1.1, d2.0, d2.1, du.0, du.1
        );
    }
}

fn section_homogenization() {
    let params = ModelParams {
        lambda: 2.0,
        mu: 1.0,
        n_predators: 1,
        omega: vec![0.5],
        kpred: vec![1.0],
        mu_self: vec![0.2],
        d: vec![1.0],
        dprey: 1.0,
        beta: 0.0,
        a: vec![vec![0.0]],
    };
    let crit = sigma_criterion(&params, &[(0.0, 0.1)]).unwrap();
    println!(
        "sigma = {:.3}, gamma1 = {:.3}, L = {:.3}, positive = {}",
        crit.sigma, crit.gamma1, crit.lipschitz.bound, crit.positive
    );
    let grid = build_grid(&[(0.0, 0.1)], &[128]).unwrap();
    let point = simple_point(&params, 0).unwrap();
    println!("simple point: w = {:.6}, u = {:.6}", point.w[0], point.u);
    let initial = perturbed_state(&grid, &point, 0.05, 42);
    let config = RunConfig { dt_max: Some(1e-4), ..RunConfig::new(0.02, 5e-4) };
    let t0 = Instant::now();
    let traj = run(&params, &initial, &config).unwrap();
    println!("run: {:.1}s, {} steps", t0.elapsed().as_secs_f64(), traj.steps_taken);
    let fit = fitted_decay_rate(&traj).unwrap();
    println!(
        "fitted rate {:.2} vs -0.9*sigma/2 = {:.2} (samples {})",
        fit.rate,
        -0.9 * crit.sigma / 2.0,
        fit.samples_used
    );
    let worst = compare_means_to_ode(&params, &traj, 1e-5).unwrap();
    println!("max means-vs-ode gap over samples: {:.3e}", worst);
    let s0 = &traj.samples[0];
    let sf = traj.samples.last().unwrap();
    let ode =
        ode_trajectory(&params, &StatePoint::from_slice(&s0.means), sf.t - s0.t, 1e-5, sf.t - s0.t)
            .unwrap();
    let (_, ode_end) = ode.last().unwrap();
    let end_vec = ode_end.to_vec();
    let gap = sf
        .means
        .iter()
        .zip(&end_vec)
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("final-time means gap: {:.3e}", gap);
}

fn section_identities() {
    // mu = 0 two-pack root at beta = 5 on (0, pi) via Newton from a tilted
    // seed, refined 512 -> 1024 -> 2048.
    let mut params = reference_pair(5.0);
    params.mu = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for n in [512usize, 1024, 2048] {
        let grid = build_grid(&[(0.0, PI)], &[n]).unwrap();
        let tilt = Field::from_fn(&grid, |x| 0.8 * x[0].cos());
        let mut w1 = vec![0.0; grid.node_count()];
        let mut w2 = vec![0.0; grid.node_count()];
        for i in 0..grid.node_count() {
            w1[i] = 0.5 * (1.0 + tilt.as_slice()[i]);
            w2[i] = 0.5 * (1.0 - tilt.as_slice()[i]);
        }
        let fields = vec![
            Field::from_values(&grid, w1).unwrap(),
            Field::from_values(&grid, w2).unwrap(),
            Field::constant(&grid, 3.5),
        ];
        let seed = SystemState::from_fields(0.0, &grid, fields).unwrap();
        let t0 = Instant::now();
        let config = NewtonConfig { tol: 1e-9, ..NewtonConfig::default() };
        let root = steady_newton(&params, &seed, &config).unwrap();
        let (r1, r2) = verify_identities_mu0(&grid, &params, &root.state).unwrap();
        let pop = population(&grid, &root.state);
        print!(
            "n = {n}: {:.1}s, P = {:.6}, residuals ({:.3e}, {:.3e}), bound 1e-4 P = {:.3e}",
            t0.elapsed().as_secs_f64(),
            pop,
            r1,
            r2,
            1e-4 * pop
        );
        if let Some((p1, p2)) = prev {
            print!(", ratios ({:.2}, {:.2})", p1 / r1.abs(), p2 / r2.abs());
        }
        println!();
        prev = Some((r1.abs(), r2.abs()));
    }
}

fn main() {
    let section = std::env::args().nth(1).unwrap_or_default();
    match section.as_str() {
        "branch" => section_branch(),
        "segregation" => section_segregation(),
        "half" => section_half_system(),
        "homog" => section_homogenization(),
        "identities" => section_identities(),
        other => {
            eprintln!("unknown section {other:?}; use branch|segregation|half|homog|identities");
            std::process::exit(2);
        }
    }
}
