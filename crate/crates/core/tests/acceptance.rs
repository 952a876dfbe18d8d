//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gnefair_core::cli::{run, write_outputs, Command, ExperimentConfig};
use gnefair_core::equilibria::{
    gne_kkt_residual, gne_set_sample, is_gne, normalize_weights, recover_multipliers, solve_vgne,
};
use gnefair_core::evgame::{build_ev_game, scenario, two_agent_game, EvParams, Scenario};
use gnefair_core::fairness::{solve_fgne, FairnessMetric};
use gnefair_core::model::{GameModel, Transformation};
use gnefair_core::vi::{SolverMethod, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fgne(game: &GameModel, metric: &FairnessMetric) -> Result<Vec<f64>, String> {
    solve_fgne(game, metric, 101, 100, &SolverParams::default())
        .map(|r| r.x_star)
        .map_err(|e| format!("{metric}: {e}"))
}

/// A scarce EV game with random parameters.
fn random_ev_params(rng: &mut ChaCha8Rng, m: usize) -> EvParams {
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..m).map(|_| rng.random_range(lo..hi)).collect() };
    let mut p = EvParams {
        q: draw(0.5, 2.0),
        leakage: draw(0.5, 1.0),
        efficiency: draw(0.5, 1.0),
        z_init: draw(0.0, 0.3),
        z_ref: draw(0.8, 1.2),
        rho0: draw(0.01, 0.1),
        rho1: draw(0.0, 0.3),
        u_bar: 1.0,
    };
    let demand: f64 = (0..m)
        .map(|i| (p.z_ref[i] - p.leakage[i] * p.z_init[i]) / p.efficiency[i])
        .sum();
    p.u_bar = rng.random_range(0.3..0.9) * demand;
    p
}

fn c1_symmetric_split() -> Check {
    let game = two_agent_game(1.0).map_err(|e| e.to_string())?;
    let v = solve_vgne(&game, &SolverParams::default()).map_err(|e| e.to_string())?;
    let mut worst = inf_dist(&v.x, &[0.5, 0.5]);
    for metric in [
        FairnessMetric::Maximin,
        FairnessMetric::SocialWelfare,
        FairnessMetric::nbs(),
        FairnessMetric::Jain,
    ] {
        worst = worst.max(inf_dist(&fgne(&game, &metric)?, &[0.5, 0.5]));
    }
    ensure(worst <= 1e-6, format!("max deviation from (0.5, 0.5) = {worst:.2e}"))
}

fn c2_cuc_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = SolverParams::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(2..=5);
        let game = build_ev_game(&random_ev_params(&mut rng, m)).map_err(|e| e.to_string())?;
        let base = solve_vgne(&game, &params).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let t = Transformation::Cuc {
                a: rng.random_range(0.1..10.0),
                b: (0..m).map(|_| rng.random_range(-100.0..100.0)).collect(),
            };
            let g = game.apply_transformation(&t).map_err(|e| e.to_string())?;
            let res = solve_vgne(&g, &params).map_err(|e| e.to_string())?;
            worst = worst.max(inf_dist(&res.x, &base.x));
        }
    }
    ensure(worst <= 1e-7, format!("400 transformed solves, max deviation {worst:.2e}"))
}

fn c3_cnc_sensitivity() -> Check {
    let params = SolverParams::default();
    let base = solve_vgne(&scenario("baseline").unwrap(), &params).map_err(|e| e.to_string())?;
    let scaled = solve_vgne(&scenario("scaling").unwrap(), &params).map_err(|e| e.to_string())?;
    let d = inf_dist(&base.x, &scaled.x);
    ensure(d > 1e-3, format!("deviation {d:.4}"))
}

/// Criteria 4 and 5 share one sweep.
fn c4_c5_gne_set() -> (Check, Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let game = scenario("baseline").unwrap();
    let scaled = game
        .apply_transformation(&Transformation::Cnc {
            a: vec![1.0, 2.0, 3.0],
            b: vec![0.5, -1.0, 2.0],
        })
        .unwrap();
    let grid: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..2.0)).collect();
            normalize_weights(&raw).unwrap()
        })
        .collect();
    let samples = gne_set_sample(&game, &grid, &SolverParams::default());
    let mut failures = 0;
    let mut worst_gap = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut active = 0;
    for s in &samples {
        let Some(res) = s.result() else {
            failures += 1;
            continue;
        };
        match is_gne(&scaled, &res.x, 1e-6) {
            Ok(c) if c.verdict => worst_gap = worst_gap.max(c.max_improvement),
            _ => failures += 1,
        }
        if !res.budget_active {
            continue;
        }
        active += 1;
        let r = &s.r;
        let lam = &res.lambda_per_agent;
        let base = r[0] * lam[0];
        for i in 0..3 {
            worst_identity = worst_identity.max((r[i] * lam[i] - base).abs());
        }
        // the reported split must itself satisfy each agent's KKT system
        worst_kkt = worst_kkt.max(gne_kkt_residual(&game, &res.x, lam, &res.mu).unwrap_or(f64::INFINITY));
        if let Ok(rec) = recover_multipliers(&game, &res.x) {
            for i in (0..3).filter(|i| res.x[*i] > 1e-9) {
                worst_identity = worst_identity.max((rec.lambda_per_agent[i] - lam[i]).abs());
            }
        }
    }
    let c4 = ensure(
        failures == 0,
        format!("{} samples, {failures} failed, max improvement {worst_gap:.2e}", samples.len()),
    );
    let c5 = ensure(
        active > 0 && worst_identity <= 1e-6 && worst_kkt <= 1e-6,
        format!("{active} active-budget samples, max |r_i λ_i − r_1 λ_1| {worst_identity:.2e}, KKT {worst_kkt:.2e}"),
    );
    (c4, c5)
}

fn c6_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eg = SolverParams {
        method: SolverMethod::Extragradient,
        tol: 1e-13,
        ..SolverParams::default()
    };
    let oracle = SolverParams {
        method: SolverMethod::ActiveSet,
        ..SolverParams::default()
    };
    let mut count = 0;
    let mut worst = 0.0f64;
    while count < 50 {
        let m = rng.random_range(1..=5);
        let game = build_ev_game(&random_ev_params(&mut rng, m)).map_err(|e| e.to_string())?;
        if !game.monotonicity_certificate().map_err(|e| e.to_string())?.strongly_monotone {
            continue;
        }
        count += 1;
        let a = solve_vgne(&game, &eg).map_err(|e| e.to_string())?;
        let b = solve_vgne(&game, &oracle).map_err(|e| e.to_string())?;
        worst = worst.max(inf_dist(&a.x, &b.x));
    }
    ensure(worst <= 1e-8, format!("50 games, max deviation {worst:.2e}"))
}

/// Minimizer of Σ J_i for decoupled EV costs: `u_i = max(0, (2qBΔz − ρ0 − λ)/(2qB²))`
/// with λ ≥ 0 found by bisection on the budget.
fn decoupled_optimum(p: &EvParams) -> Vec<f64> {
    let m = p.num_agents();
    let alloc = |lam: f64| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let (q, b) = (p.q[i], p.efficiency[i]);
                let dz = p.z_ref[i] - p.leakage[i] * p.z_init[i];
                ((2.0 * q * b * dz - p.rho0[i] - lam) / (2.0 * q * b * b)).max(0.0)
            })
            .collect()
    };
    if alloc(0.0).iter().sum::<f64>() <= p.u_bar {
        return alloc(0.0);
    }
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() > p.u_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    alloc(0.5 * (lo + hi))
}

fn c7_decoupled() -> Check {
    let p = EvParams {
        q: vec![1.0, 2.0, 0.5],
        z_init: vec![0.0, 0.2, 0.1],
        rho1: vec![0.0; 3],
        rho0: vec![0.05, 0.1, 0.02],
        ..EvParams::baseline(3)
    };
    let game = build_ev_game(&p).map_err(|e| e.to_string())?;
    let v = solve_vgne(&game, &SolverParams::default()).map_err(|e| e.to_string())?;
    let d = inf_dist(&v.x, &decoupled_optimum(&p));
    ensure(v.budget_active && d <= 1e-6, format!("budget active {}, deviation {d:.2e}", v.budget_active))
}

fn c8_maximin_scaling() -> Check {
    let game = two_agent_game(3.0).map_err(|e| e.to_string())?;
    let mm = fgne(&game, &FairnessMetric::Maximin)?;
    let v = solve_vgne(&game, &SolverParams::default()).map_err(|e| e.to_string())?;
    let d = inf_dist(&mm, &v.x);
    ensure(
        mm[0] - mm[1] >= 1e-3 && d > 1e-6,
        format!("MM u = ({:.4}, {:.4}), v-GNE u = ({:.4}, {:.4})", mm[0], mm[1], v.x[0], v.x[1]),
    )
}

fn c9_nbs_invariance() -> Check {
    let base = fgne(&two_agent_game(1.0).map_err(|e| e.to_string())?, &FairnessMetric::nbs())?;
    let scaled = fgne(&two_agent_game(3.0).map_err(|e| e.to_string())?, &FairnessMetric::nbs())?;
    let d = inf_dist(&base, &scaled);
    ensure(d <= 1e-4, format!("deviation {d:.2e}"))
}

fn c10_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let baseline = scenario("baseline").unwrap();
    let transformed = scenario("transformed_cost").unwrap();
    // (game, agent): EV quadratic, pure quadratic gap, log plus quadratic, exponential gap
    let kinds = [(&baseline, 0, "ev"), (&transformed, 0, "quad"), (&transformed, 1, "log"), (&transformed, 2, "exp")];
    let mut worst = 0.0f64;
    for (game, i, _) in kinds {
        for _ in 0..100 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum::<f64>() * rng.random_range(1.0..1.5);
            let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let g = game.partial_gradient(i, &x).map_err(|e| e.to_string())?;
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (game.eval_cost(i, &xp).unwrap() - game.eval_cost(i, &xm).unwrap()) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-6, format!("400 points, max relative error {worst:.2e}"))
}

fn c11_initial_charge() -> Check {
    let v = solve_vgne(&scenario("initial_charge").unwrap(), &SolverParams::default())
        .map_err(|e| e.to_string())?;
    let u = &v.x;
    ensure(u[0] > u[1] && u[1] > u[2], format!("u = ({:.4}, {:.4}, {:.4})", u[0], u[1], u[2]))
}

fn c12_kkt_and_determinism() -> Check {
    let params = SolverParams::default();
    let mut worst = 0.0f64;
    for s in Scenario::ALL {
        let v = solve_vgne(&s.game().unwrap(), &params).map_err(|e| e.to_string())?;
        worst = worst.max(v.kkt_residual);
    }
    for a1 in [1.0, 3.0] {
        let game = two_agent_game(a1).unwrap();
        worst = worst.max(solve_vgne(&game, &params).map_err(|e| e.to_string())?.kkt_residual);
        for metric in [FairnessMetric::Maximin, FairnessMetric::SocialWelfare, FairnessMetric::nbs(), FairnessMetric::Jain] {
            let r = solve_fgne(&game, &metric, 101, 100, &params).map_err(|e| e.to_string())?;
            worst = worst.max(r.equilibrium.kkt_residual);
        }
    }

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut contents = Vec::new();
    for dir in &dirs {
        let mut config = ExperimentConfig::for_scenario(Scenario::Baseline);
        config.solver.seed = 12;
        config.output.directory = dir.path().to_path_buf();
        let mut files = Vec::new();
        for command in [Command::Vgne, Command::Sweep, Command::ReproduceFig4] {
            let out = run(command, &config).map_err(|e| e.to_string())?;
            for path in write_outputs(command, &config, &out).map_err(|e| e.to_string())? {
                if path.extension().is_some_and(|e| e == "csv") {
                    files.push(std::fs::read(&path).unwrap());
                }
            }
        }
        contents.push(files);
    }
    let identical = contents[0] == contents[1] && !contents[0].is_empty();
    ensure(
        worst <= 1e-6 && identical,
        format!("max KKT residual {worst:.2e}, {} CSV files byte-identical: {identical}", contents[0].len()),
    )
}

fn main() -> ExitCode {
    let mut all_passed = true;
    let mut report = |id: &str, limit: Duration, elapsed: Duration, result: Check| {
        let (ok, detail) = match result {
            Ok(d) => (elapsed <= limit, d),
            Err(d) => (false, d),
        };
        all_passed &= ok;
        println!(
            "criterion {id:>2}: {} ({detail}; {:.2}s of {}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    };
    let timed = |f: fn() -> Check| {
        let start = Instant::now();
        let r = f();
        (r, start.elapsed())
    };
    let secs = Duration::from_secs;

    let (r, t) = timed(c1_symmetric_split);
    report("1", secs(10), t, r);
    let (r, t) = timed(c2_cuc_invariance);
    report("2", secs(30), t, r);
    let (r, t) = timed(c3_cnc_sensitivity);
    report("3", secs(5), t, r);
    let start = Instant::now();
    let (c4, c5) = c4_c5_gne_set();
    let t = start.elapsed();
    report("4", secs(60), t, c4);
    report("5", secs(60), t, c5);
    let (r, t) = timed(c6_oracle_equivalence);
    report("6", secs(60), t, r);
    let (r, t) = timed(c7_decoupled);
    report("7", secs(10), t, r);
    let (r, t) = timed(c8_maximin_scaling);
    report("8", secs(30), t, r);
    let (r, t) = timed(c9_nbs_invariance);
    report("9", secs(30), t, r);
    let (r, t) = timed(c10_gradients);
    report("10", secs(10), t, r);
    let (r, t) = timed(c11_initial_charge);
    report("11", secs(5), t, r);
    let (r, t) = timed(c12_kkt_and_determinism);
    report("12", secs(10), t, r);

    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
