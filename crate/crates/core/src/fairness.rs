//! Fairness metrics over agents' costs and fairness-optimal equilibrium
//! selection among normalized equilibria.
//!
//! All metrics are written as functions to minimize. The selection problem
//! `min f(x) s.t. x ∈ GNE set` is parameterized by the normalized-equilibrium
//! weights `r`: a simplex grid over `r` is solved first, then the best grid
//! point is refined by a compass search in `ln r`.

use std::fmt;

use crate::equilibria::{gne_set_sample, normalize_weights, simplex_grid, EquilibriumResult, GneSample};
use crate::error::{GneError, Result};
use crate::model::GameModel;
use crate::vi::SolverParams;

/// Compass search stops once the step in log-weight space falls below this.
pub const MIN_REFINE_STEP: f64 = 1e-7;

/// Reference outcome of the bargaining product.
#[derive(Debug, Clone, PartialEq)]
pub enum Benchmark {
    /// Everybody gets the lower bound of the feasible set (no charging).
    ZeroDecision,
    /// An explicit joint decision, evaluated under the game's costs.
    Decision(Vec<f64>),
    /// Benchmark costs given directly.
    Costs(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FairnessMetric {
    /// `max_i J_i`
    Maximin,
    /// `Σ_i J_i`
    SocialWelfare,
    /// `−Π_i (J_i(benchmark) − J_i)`
    NashBargaining(Benchmark),
    /// `Σ_i J_i^(1−α) / (1−α)` with `α > 0`, `α ≠ 1`
    Atkinson { alpha: f64 },
    /// `−(Σ_i J_i)² / (M·Σ_i J_i²)`, the negated Jain index
    Jain,
}

impl FairnessMetric {
    pub fn nbs() -> Self {
        FairnessMetric::NashBargaining(Benchmark::ZeroDecision)
    }

    /// Short column label: `MM`, `SW`, `NBS`, `AI_<alpha>`, `JI`.
    pub fn label(&self) -> String {
        match self {
            FairnessMetric::Maximin => "MM".into(),
            FairnessMetric::SocialWelfare => "SW".into(),
            FairnessMetric::NashBargaining(_) => "NBS".into(),
            FairnessMetric::Atkinson { alpha } => format!("AI_{alpha}"),
            FairnessMetric::Jain => "JI".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FairnessMetric::Atkinson { alpha } = self {
            if !(*alpha > 0.0) || *alpha == 1.0 || !alpha.is_finite() {
                return Err(GneError::InvalidParams(format!(
                    "Atkinson index needs alpha > 0 and alpha ≠ 1 (got {alpha})"
                )));
            }
        }
        Ok(())
    }

    /// Benchmark costs under `game`, for the bargaining metric.
    pub fn benchmark_costs(&self, game: &GameModel) -> Result<Option<Vec<f64>>> {
        let FairnessMetric::NashBargaining(benchmark) = self else {
            return Ok(None);
        };
        let costs = match benchmark {
            Benchmark::ZeroDecision => game.costs(game.feasible().lower_bounds())?,
            Benchmark::Decision(x) => game.costs(x)?,
            Benchmark::Costs(c) => {
                if c.len() != game.num_agents() {
                    return Err(GneError::DimensionMismatch {
                        expected: game.num_agents(),
                        got: c.len(),
                    });
                }
                c.clone()
            }
        };
        Ok(Some(costs))
    }

    /// Metric value at the joint decision `x` of `game`.
    pub fn evaluate(&self, game: &GameModel, x: &[f64]) -> Result<f64> {
        let bench = self.benchmark_costs(game)?;
        fairness_value(self, &game.costs(x)?, bench.as_deref())
    }
}

impl fmt::Display for FairnessMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Value of `metric` for the cost profile `costs`.
pub fn fairness_value(
    metric: &FairnessMetric,
    costs: &[f64],
    benchmark_costs: Option<&[f64]>,
) -> Result<f64> {
    metric.validate()?;
    match metric {
        FairnessMetric::Maximin => Ok(costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        FairnessMetric::SocialWelfare => Ok(costs.iter().sum()),
        FairnessMetric::NashBargaining(_) => {
            let bench = benchmark_costs.ok_or(GneError::MissingBenchmark)?;
            if bench.len() != costs.len() {
                return Err(GneError::DimensionMismatch {
                    expected: costs.len(),
                    got: bench.len(),
                });
            }
            let mut product = 1.0;
            for (i, (b, c)) in bench.iter().zip(costs).enumerate() {
                let gain = b - c;
                if !(gain > 0.0) {
                    return Err(GneError::Domain(format!(
                        "agent {i} does not improve on the benchmark (gain {gain:e})"
                    )));
                }
                product *= gain;
            }
            Ok(-product)
        }
        FairnessMetric::Atkinson { alpha } => {
            if let Some(c) = costs.iter().find(|c| !(**c > 0.0)) {
                return Err(GneError::Domain(format!(
                    "Atkinson index needs positive costs (got {c})"
                )));
            }
            let e = 1.0 - alpha;
            Ok(costs.iter().map(|c| c.powf(e) / e).sum())
        }
        FairnessMetric::Jain => {
            let sum: f64 = costs.iter().sum();
            let sum_sq: f64 = costs.iter().map(|c| c * c).sum();
            if sum_sq == 0.0 {
                return Err(GneError::Domain("Jain index undefined for all-zero costs".into()));
            }
            Ok(-(sum * sum) / (costs.len() as f64 * sum_sq))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchPhase {
    Grid,
    Refine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub phase: SearchPhase,
    pub r: Vec<f64>,
    /// Metric value, absent when the solve failed or the metric was undefined.
    pub f: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgneResult {
    pub r_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub equilibrium: EquilibriumResult,
    pub search_trace: Vec<TraceEntry>,
}

struct Scored {
    f: f64,
    sample: GneSample,
}

fn score(metric: &FairnessMetric, game: &GameModel, bench: Option<&[f64]>, sample: &GneSample) -> Result<Option<f64>> {
    let Some(res) = sample.result().filter(|_| sample.verified_gne) else {
        return Ok(None);
    };
    match fairness_value(metric, &game.costs(&res.x)?, bench) {
        Ok(f) if f.is_finite() => Ok(Some(f)),
        Ok(_) | Err(GneError::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fairness-optimal GNE among normalized equilibria.
///
/// `grid_density` is the number of grid points per simplex edge; the
/// compass search then runs at most `refine_iters` rounds, halving its step
/// after every round without improvement.
pub fn solve_fgne(
    game: &GameModel,
    metric: &FairnessMetric,
    grid_density: usize,
    refine_iters: usize,
    params: &SolverParams,
) -> Result<FgneResult> {
    metric.validate()?;
    if grid_density < 3 {
        return Err(GneError::InvalidParams(format!(
            "grid density must be at least 3 (got {grid_density})"
        )));
    }
    let m = game.num_agents();
    let bench = metric.benchmark_costs(game)?;
    let bench = bench.as_deref();

    let grid = simplex_grid(m, grid_density);
    let samples = gne_set_sample(game, &grid, params);
    let mut trace = Vec::with_capacity(samples.len() + 4 * m * refine_iters);
    let mut best: Option<Scored> = None;
    let mut converged = 0;
    let mut domain_failures = 0;
    for sample in samples {
        let f = score(metric, game, bench, &sample)?;
        if sample.converged() {
            converged += 1;
            if f.is_none() {
                domain_failures += 1;
            }
        }
        trace.push(TraceEntry {
            phase: SearchPhase::Grid,
            r: sample.r.clone(),
            f,
            converged: sample.converged(),
        });
        if let Some(f) = f {
            if best.as_ref().is_none_or(|b| f < b.f) {
                best = Some(Scored { f, sample });
            }
        }
    }
    let Some(mut best) = best else {
        return Err(GneError::AllPointsFailed {
            converged,
            domain_failures,
        });
    };

    let mut theta: Vec<f64> = best.sample.r.iter().map(|r| r.ln()).collect();
    let mut step = 2.0 * m as f64 / (grid_density - 1 + m) as f64;
    for _ in 0..refine_iters {
        if step < MIN_REFINE_STEP {
            break;
        }
        let mut improved = false;
        for i in 0..m {
            for sign in [1.0, -1.0] {
                let mut candidate = theta.clone();
                candidate[i] += sign * step;
                let raw: Vec<f64> = candidate.iter().map(|t| t.exp()).collect();
                let r = normalize_weights(&raw)?;
                let sample = gne_set_sample(game, &[r], params).pop().expect("one sample");
                let f = score(metric, game, bench, &sample)?;
                trace.push(TraceEntry {
                    phase: SearchPhase::Refine,
                    r: sample.r.clone(),
                    f,
                    converged: sample.converged(),
                });
                if let Some(f) = f {
                    if f < best.f {
                        theta = sample.r.iter().map(|r| r.ln()).collect();
                        best = Scored { f, sample };
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let Scored { f, sample } = best;
    let equilibrium = sample.outcome.expect("incumbent converged");
    Ok(FgneResult {
        r_star: sample.r,
        x_star: equilibrium.x.clone(),
        f_star: f,
        equilibrium,
        search_trace: trace,
    })
}

/// One converged sweep point with its costs and every requested metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    pub costs: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub values: Vec<std::result::Result<f64, GneError>>,
}

/// Side-by-side metric values over the converged points of a sweep.
pub fn fairness_profile(
    samples: &[GneSample],
    metrics: &[FairnessMetric],
    game: &GameModel,
) -> Vec<ProfileRow> {
    let benches: Vec<Result<Option<Vec<f64>>>> =
        metrics.iter().map(|m| m.benchmark_costs(game)).collect();
    samples
        .iter()
        .filter_map(|s| {
            let res = s.result()?;
            let costs = game.costs(&res.x).ok()?;
            let values = metrics
                .iter()
                .zip(&benches)
                .map(|(metric, bench)| match bench {
                    Ok(b) => fairness_value(metric, &costs, b.as_deref()),
                    Err(e) => Err(e.clone()),
                })
                .collect();
            Some(ProfileRow {
                r: s.r.clone(),
                x: res.x.clone(),
                costs,
                lambdas: res.lambda_per_agent.clone(),
                values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{is_gne, pair_grid, solve_vgne};
    use crate::evgame::{build_ev_game, two_agent_game, EvParams};
    use crate::model::Transformation;
    use crate::vi::project_feasible;

    #[test]
    fn metric_values_by_hand() {
        let costs = [1.0, 2.0, 3.0];
        assert_eq!(fairness_value(&FairnessMetric::SocialWelfare, &costs, None).unwrap(), 6.0);
        assert_eq!(fairness_value(&FairnessMetric::Maximin, &costs, None).unwrap(), 3.0);
        assert_eq!(fairness_value(&FairnessMetric::Jain, &[1.0; 3], None).unwrap(), -1.0);
        // (6²)/(3·14)
        assert_close!(fairness_value(&FairnessMetric::Jain, &costs, None).unwrap(), -36.0 / 42.0, 1e-15);
        assert_eq!(
            fairness_value(&FairnessMetric::nbs(), &[1.0, 1.0], Some(&[2.0, 2.0])).unwrap(),
            -1.0
        );
        // α = 2: Σ c⁻¹ / (−1)
        assert_close!(
            fairness_value(&FairnessMetric::Atkinson { alpha: 2.0 }, &costs, None).unwrap(),
            -(1.0 + 0.5 + 1.0 / 3.0),
            1e-15
        );
    }

    #[test]
    fn metric_domain_errors() {
        assert_eq!(
            fairness_value(&FairnessMetric::nbs(), &[1.0], None),
            Err(GneError::MissingBenchmark)
        );
        assert!(matches!(
            fairness_value(&FairnessMetric::nbs(), &[1.0, 3.0], Some(&[2.0, 2.0])),
            Err(GneError::Domain(_))
        ));
        assert!(matches!(
            fairness_value(&FairnessMetric::Atkinson { alpha: 0.5 }, &[1.0, 0.0], None),
            Err(GneError::Domain(_))
        ));
        assert!(matches!(
            fairness_value(&FairnessMetric::Atkinson { alpha: 1.0 }, &[1.0], None),
            Err(GneError::InvalidParams(_))
        ));
    }

    fn fgne(game: &GameModel, metric: &FairnessMetric) -> FgneResult {
        solve_fgne(game, metric, 101, 100, &SolverParams::default()).unwrap()
    }

    #[test]
    fn symmetric_game_selects_equal_split() {
        let game = two_agent_game(1.0).unwrap();
        for metric in [
            FairnessMetric::Maximin,
            FairnessMetric::SocialWelfare,
            FairnessMetric::nbs(),
            FairnessMetric::Jain,
        ] {
            let res = fgne(&game, &metric);
            assert_close!(res.x_star[0], 0.5, 1e-6);
            assert_close!(res.x_star[1], 0.5, 1e-6);
            assert!(is_gne(&game, &res.x_star, 1e-6).unwrap().verdict);
            let min_trace = res
                .search_trace
                .iter()
                .filter_map(|t| t.f)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(res.f_star, min_trace);
        }
    }

    #[test]
    fn maximin_favours_scaled_agent() {
        let game = two_agent_game(3.0).unwrap();
        let res = fgne(&game, &FairnessMetric::Maximin);
        assert!(res.x_star[0] > res.x_star[1] + 1e-3);
        // 3·J_1 = J_2 on the budget line: 2u² − 5.4u + 2.85 = 0
        let root = (5.4 - (5.4f64 * 5.4 - 8.0 * 2.85).sqrt()) / 4.0;
        assert_close!(res.x_star[0], root, 1e-6);
    }

    #[test]
    fn social_welfare_optimum_by_hand() {
        // 3·J_1 + J_2 along u_1 + u_2 = 1 is minimized at u_1 = 5.7/8
        let res = fgne(&two_agent_game(3.0).unwrap(), &FairnessMetric::SocialWelfare);
        assert_close!(res.x_star[0], 5.7 / 8.0, 1e-6);
    }

    #[test]
    fn nbs_selection_survives_scaling() {
        let base = fgne(&two_agent_game(1.0).unwrap(), &FairnessMetric::nbs());
        let scaled = fgne(&two_agent_game(3.0).unwrap(), &FairnessMetric::nbs());
        for (a, b) in base.x_star.iter().zip(&scaled.x_star) {
            assert!((a - b).abs() < 1e-4);
        }
        let mm = fgne(&two_agent_game(3.0).unwrap(), &FairnessMetric::Maximin);
        let sw = fgne(&two_agent_game(3.0).unwrap(), &FairnessMetric::SocialWelfare);
        let mm_base = fgne(&two_agent_game(1.0).unwrap(), &FairnessMetric::Maximin);
        let sw_base = fgne(&two_agent_game(1.0).unwrap(), &FairnessMetric::SocialWelfare);
        assert!((mm.x_star[0] - mm_base.x_star[0]).abs() > 1e-3);
        assert!((sw.x_star[0] - sw_base.x_star[0]).abs() > 1e-3);
    }

    /// Minimizes Σ J_i over the feasible set by projected gradient descent
    /// on the (separable) social cost.
    fn social_optimum(game: &GameModel) -> Vec<f64> {
        let mut x = game.feasible().lower_bounds().to_vec();
        for _ in 0..20_000 {
            let g = game.pseudo_gradient(&x).unwrap();
            let p: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - 0.2 * gi).collect();
            x = project_feasible(&p, game.feasible()).unwrap();
        }
        x
    }

    #[test]
    fn decoupled_social_welfare_is_vgne() {
        let p = EvParams {
            q: vec![1.0, 2.0, 0.5],
            z_init: vec![0.0, 0.2, 0.1],
            rho1: vec![0.0; 3],
            rho0: vec![0.05, 0.1, 0.02],
            ..EvParams::baseline(3)
        };
        let game = build_ev_game(&p).unwrap();
        let vgne = solve_vgne(&game, &SolverParams::default()).unwrap();
        assert!(vgne.budget_active);
        let direct = social_optimum(&game);
        let f = solve_fgne(&game, &FairnessMetric::SocialWelfare, 15, 200, &SolverParams::default())
            .unwrap();
        for i in 0..3 {
            assert_close!(vgne.x[i], direct[i], 1e-6);
            assert_close!(f.x_star[i], vgne.x[i], 1e-6);
        }
    }

    #[test]
    fn fgne_argument_checks() {
        let game = two_agent_game(1.0).unwrap();
        assert!(solve_fgne(&game, &FairnessMetric::Jain, 2, 10, &SolverParams::default()).is_err());
        // benchmark at the budget corner: nobody improves on it
        let hopeless = FairnessMetric::NashBargaining(Benchmark::Costs(vec![-1.0, -1.0]));
        assert!(matches!(
            solve_fgne(&game, &hopeless, 5, 10, &SolverParams::default()),
            Err(GneError::AllPointsFailed { domain_failures: 5, .. })
        ));
    }

    #[test]
    fn fgne_is_deterministic() {
        let game = two_agent_game(3.0).unwrap();
        let a = solve_fgne(&game, &FairnessMetric::Jain, 21, 50, &SolverParams::default()).unwrap();
        let b = solve_fgne(&game, &FairnessMetric::Jain, 21, 50, &SolverParams::default()).unwrap();
        assert_eq!(a, b);
    }

    fn sweep(game: &GameModel) -> Vec<GneSample> {
        gne_set_sample(game, &pair_grid(0.1, 1.9, 101), &SolverParams::default())
    }

    fn argmin(values: &[f64]) -> usize {
        values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn profile_rows_and_columns() {
        let game = two_agent_game(1.0).unwrap();
        let single = gne_set_sample(&game, &[vec![1.0, 1.0]], &SolverParams::default());
        let rows = fairness_profile(&single, &[FairnessMetric::SocialWelfare], &game);
        assert_eq!(rows.len(), 1);
        let vgne = solve_vgne(&game, &SolverParams::default()).unwrap();
        let sw: f64 = game.costs(&vgne.x).unwrap().iter().sum();
        assert_close!(*rows[0].values[0].as_ref().unwrap(), sw, 1e-12);

        let rows = fairness_profile(&sweep(&game), &[FairnessMetric::SocialWelfare], &game);
        let sw: Vec<f64> = rows.iter().map(|r| *r.values[0].as_ref().unwrap()).collect();
        let best = &rows[argmin(&sw)];
        assert_close!(best.x[0], 0.5, 1e-12);
    }

    #[test]
    fn nbs_column_scales_by_product_of_factors() {
        let base = two_agent_game(1.0).unwrap();
        let scaled = base
            .apply_transformation(&Transformation::Cnc {
                a: vec![3.0, 0.5],
                b: vec![2.0, -1.0],
            })
            .unwrap();
        let metric = FairnessMetric::nbs();
        let rows = fairness_profile(&sweep(&scaled), std::slice::from_ref(&metric), &scaled);
        assert_eq!(rows.len(), 101);
        for row in rows {
            let original = metric.evaluate(&base, &row.x).unwrap();
            assert_close!(*row.values[0].as_ref().unwrap(), 1.5 * original, 1e-12);
        }
    }

    fn ranks(values: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
        let mut rank = vec![0; values.len()];
        for (pos, i) in idx.into_iter().enumerate() {
            rank[i] = pos;
        }
        rank
    }

    #[test]
    fn atkinson_near_zero_orders_like_social_welfare() {
        let game = two_agent_game(3.0).unwrap();
        let metrics = [FairnessMetric::SocialWelfare, FairnessMetric::Atkinson { alpha: 1e-3 }];
        let rows = fairness_profile(&sweep(&game), &metrics, &game);
        let sw: Vec<f64> = rows.iter().map(|r| *r.values[0].as_ref().unwrap()).collect();
        let ai: Vec<f64> = rows.iter().map(|r| *r.values[1].as_ref().unwrap()).collect();
        assert_eq!(ranks(&sw), ranks(&ai));
    }

    #[test]
    #[ignore = "Σ J^(1−α)/(1−α) on costs is dominated by the smallest cost as α grows, so its minimizer does not approach the maximin choice"]
    fn atkinson_large_alpha_matches_maximin() {
        let game = two_agent_game(3.0).unwrap();
        let mm = fgne(&game, &FairnessMetric::Maximin);
        let ai = fgne(&game, &FairnessMetric::Atkinson { alpha: 50.0 });
        assert_close!(mm.x_star[0], ai.x_star[0], 1e-4);
    }
}
