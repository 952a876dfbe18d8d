//! GNE verification by best responses, variational and normalized equilibria,
//! and recovery of per-agent budget multipliers.
//!
//! With a single separable budget `wᵀx ≤ Ū`, agent `i`'s KKT system reads
//! `F_i(x) + λ_i·w_i − μ_i = 0` with `λ_i ≥ 0` on the budget and `μ_i ≥ 0` on
//! its lower bound. A normalized equilibrium with weights `r` solves the
//! inequality for `diag(r)·F`, which makes `r_i·λ_i` equal across agents; the
//! variational equilibrium is the case `r = 1`.

use rayon::prelude::*;

use crate::error::{GneError, Result};
use crate::model::{validate_weights, GameModel};
use crate::vi::{self, SolverMethod, SolverParams, ViSolution};

/// Tolerance on the budget slack and lower-bound distance used to decide
/// which constraints are active at a computed point.
pub const ACTIVITY_TOL: f64 = 1e-9;

/// Maximum KKT residual accepted by [`recover_multipliers`].
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Feasibility slack accepted by [`is_gne`].
const FEASIBILITY_TOL: f64 = 1e-9;

/// Interval width at which the golden-section best response stops.
const GOLDEN_TOL: f64 = 1e-12;

/// Threshold on `λ_i` for strict complementarity of an active budget.
pub const STRICT_COMPLEMENTARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub x: Vec<f64>,
    /// Budget multiplier of each agent's own KKT system.
    pub lambda_per_agent: Vec<f64>,
    /// Lower-bound multipliers.
    pub mu: Vec<f64>,
    /// Shared multiplier, reported for variational equilibria.
    pub uniform_lambda: Option<f64>,
    /// Multiplier of the weighted system, `r_i·λ_i` for every agent.
    pub weighted_lambda: f64,
    /// Normalized weights (`Σ r_i = M`), absent for a plain v-GNE solve.
    pub r_weights: Option<Vec<f64>>,
    pub kkt_residual: f64,
    pub is_vgne: bool,
    pub budget_active: bool,
    pub iterations: usize,
    pub natural_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GneCheck {
    pub verdict: bool,
    pub max_improvement: f64,
    /// `J_i(x) − J_i(best response, x_{−i})` for each agent, clipped at zero.
    pub per_agent_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub lambda_per_agent: Vec<f64>,
    pub mu: Vec<f64>,
}

/// One point of a normalized-equilibrium sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GneSample {
    /// Weights normalized to `Σ r_i = M`.
    pub r: Vec<f64>,
    pub outcome: std::result::Result<EquilibriumResult, GneError>,
    /// Best-response verification at tolerance 1e-6.
    pub verified_gne: bool,
    /// Every `λ_i > 1e-8` when the budget is active.
    pub strict_complementarity: bool,
}

impl GneSample {
    pub fn converged(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn result(&self) -> Option<&EquilibriumResult> {
        self.outcome.as_ref().ok()
    }
}

/// Scales `r` to sum to the number of agents.
pub fn normalize_weights(r: &[f64]) -> Result<Vec<f64>> {
    validate_weights(r, r.len())?;
    let total: f64 = r.iter().sum();
    let m = r.len() as f64;
    Ok(r.iter().map(|ri| ri * m / total).collect())
}

/// Interior grid on `{r > 0, Σ r_i = m}`: every composition `k` of
/// `density − 1` into `m` parts maps to `r_i = m·(k_i + 1)/(density − 1 + m)`.
/// Two agents give `density` points, three give `density·(density+1)/2`.
pub fn simplex_grid(m: usize, density: usize) -> Vec<Vec<f64>> {
    fn compose(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=total {
            prefix.push(k);
            compose(parts - 1, total - k, prefix, out);
            prefix.pop();
        }
    }
    if m == 0 || density == 0 {
        return Vec::new();
    }
    let mut compositions = Vec::new();
    compose(m, density - 1, &mut Vec::with_capacity(m), &mut compositions);
    let denom = (density - 1 + m) as f64;
    compositions
        .into_iter()
        .map(|k| k.iter().map(|ki| m as f64 * (*ki as f64 + 1.0) / denom).collect())
        .collect()
}

/// Two-agent weights `(r_1, 2 − r_1)` with `r_1` evenly spaced on `[lo, hi]`.
pub fn pair_grid(lo: f64, hi: f64, points: usize) -> Vec<Vec<f64>> {
    match points {
        0 => Vec::new(),
        1 => vec![vec![lo, 2.0 - lo]],
        _ => (0..points)
            .map(|k| {
                let r1 = lo + (hi - lo) * k as f64 / (points - 1) as f64;
                vec![r1, 2.0 - r1]
            })
            .collect(),
    }
}

fn others_load(game: &GameModel, i: usize, x: &[f64]) -> f64 {
    let w = game.feasible().weights();
    x.iter()
        .zip(w)
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, (xj, wj))| xj * wj)
        .sum()
}

/// Agent `i`'s optimal decision against the other entries of `x`.
///
/// Quadratic costs use the clamped vertex; the logarithmic and exponential
/// costs use golden-section search on `[lb_i, cap_i]`.
pub fn best_response(game: &GameModel, i: usize, x: &[f64]) -> Result<f64> {
    let set = game.feasible();
    if x.len() != set.dim() {
        return Err(GneError::DimensionMismatch {
            expected: set.dim(),
            got: x.len(),
        });
    }
    let lb = set.lower_bounds()[i];
    let w = set.weights()[i];
    let residual = set.budget() - others_load(game, i, x);
    let mut cap = residual / w;
    if cap < lb {
        if cap < lb - FEASIBILITY_TOL {
            return Err(GneError::InfeasibleResidual { agent: i, residual });
        }
        cap = lb;
    }
    if cap == lb {
        return Ok(lb);
    }

    let others_total: f64 = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
    if let Some(vertex) = game.agents()[i].cost.quadratic_vertex(others_total) {
        return Ok(vertex.clamp(lb, cap));
    }

    let cost = |own: f64| game.cost_with_own(i, x, own);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lb, cap);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = cost(c)?;
    let mut fd = cost(d)?;
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d)?;
        }
        if c >= d {
            break;
        }
    }
    let mut best = 0.5 * (a + b);
    let mut best_cost = cost(best)?;
    for end in [lb, cap] {
        // the log cost is undefined at a zero lower bound
        if let Ok(v) = cost(end) {
            if v < best_cost {
                best = end;
                best_cost = v;
            }
        }
    }
    Ok(best)
}

/// Best-response test of the GNE conditions at `x`.
pub fn is_gne(game: &GameModel, x: &[f64], tol: f64) -> Result<GneCheck> {
    let violation = game.feasible().violation(x);
    if violation > FEASIBILITY_TOL {
        return Err(GneError::Infeasible { violation });
    }
    let per_agent_gaps = (0..game.num_agents())
        .map(|i| {
            let br = best_response(game, i, x)?;
            let current = game.eval_cost(i, x)?;
            let improved = game.cost_with_own(i, x, br)?;
            Ok((current - improved).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_improvement = per_agent_gaps.iter().copied().fold(0.0, f64::max);
    Ok(GneCheck {
        verdict: max_improvement <= tol,
        max_improvement,
        per_agent_gaps,
    })
}

fn budget_is_active(game: &GameModel, x: &[f64]) -> bool {
    let set = game.feasible();
    set.budget() - set.weighted_sum(x) <= ACTIVITY_TOL * (1.0 + set.budget().abs())
}

fn at_lower_bound(game: &GameModel, i: usize, x: &[f64]) -> bool {
    x[i] - game.feasible().lower_bounds()[i] <= ACTIVITY_TOL
}

/// KKT residual of the per-agent system with individual budget multipliers.
pub fn gne_kkt_residual(game: &GameModel, x: &[f64], lambda: &[f64], mu: &[f64]) -> Result<f64> {
    let set = game.feasible();
    let grad = game.pseudo_gradient(x)?;
    let slack = set.weighted_sum(x) - set.budget();
    let mut worst = set.violation(x);
    for i in 0..game.num_agents() {
        let w = set.weights()[i];
        let lb = set.lower_bounds()[i];
        worst = worst
            .max((grad[i] + lambda[i] * w - mu[i]).abs())
            .max((lambda[i] * slack).abs())
            .max((mu[i] * (x[i] - lb)).abs())
            .max(-lambda[i])
            .max(-mu[i]);
    }
    Ok(worst)
}

/// Per-agent multipliers making `x` stationary for each agent's problem.
pub fn recover_multipliers(game: &GameModel, x: &[f64]) -> Result<Multipliers> {
    let violation = game.feasible().violation(x);
    if violation > FEASIBILITY_TOL {
        return Err(GneError::Infeasible { violation });
    }
    let grad = game.pseudo_gradient(x)?;
    let w = game.feasible().weights();
    let active = budget_is_active(game, x);
    let m = game.num_agents();
    let mut lambda = vec![0.0; m];
    let mut mu = vec![0.0; m];
    for i in 0..m {
        match (at_lower_bound(game, i, x), active) {
            (false, true) => lambda[i] = -grad[i] / w[i],
            (false, false) => {}
            (true, true) => {
                lambda[i] = (-grad[i] / w[i]).max(0.0);
                mu[i] = grad[i] + lambda[i] * w[i];
            }
            (true, false) => mu[i] = grad[i].max(0.0),
        }
    }
    let residual = gne_kkt_residual(game, x, &lambda, &mu)?;
    if residual > STATIONARITY_TOL {
        return Err(GneError::NotStationary(residual));
    }
    Ok(Multipliers {
        lambda_per_agent: lambda,
        mu,
    })
}

fn solve_weighted(game: &GameModel, r: &[f64], params: &SolverParams) -> Result<ViSolution> {
    let set = game.feasible();
    let affine = || {
        game.affine_form()
            .filter(|f| f.dim() <= vi::MAX_ACTIVE_SET_DIM)
            .map(|f| f.weighted(r))
    };
    let iterative = || solve_vi_weighted(game, r, params);
    match params.method {
        SolverMethod::Auto => match affine() {
            Some(form) => {
                let form = form?;
                vi::solve_affine_vi_active_set(&form.matrix, &form.constant, set)
            }
            None => iterative(),
        },
        SolverMethod::ActiveSet => {
            let form = game.affine_form().ok_or(GneError::NotAffine)?.weighted(r)?;
            vi::solve_affine_vi_active_set(&form.matrix, &form.constant, set)
        }
        SolverMethod::Extragradient => iterative(),
    }
}

fn solve_vi_weighted(game: &GameModel, r: &[f64], params: &SolverParams) -> Result<ViSolution> {
    let op = |x: &[f64]| game.weighted_pseudo_gradient(x, r);
    vi::solve_vi(op, game.feasible(), params)
}

/// Builds the equilibrium report at a solution of the `r`-weighted inequality.
fn assemble(game: &GameModel, r: &[f64], sol: ViSolution, vgne: bool) -> Result<EquilibriumResult> {
    let x = sol.x;
    let set = game.feasible();
    let w = set.weights();
    let m = game.num_agents();
    let grad = game.pseudo_gradient(&x)?;
    let active = budget_is_active(game, &x);

    // Multiplier of the weighted system: exact from the active-set solve,
    // otherwise averaged over agents strictly above their lower bound.
    let weighted_lambda = match (&sol.multipliers, active) {
        (Some(kkt), _) => kkt.lambda,
        (None, false) => 0.0,
        (None, true) => {
            let free: Vec<f64> = (0..m)
                .filter(|&i| !at_lower_bound(game, i, &x))
                .map(|i| -r[i] * grad[i] / w[i])
                .collect();
            if free.is_empty() {
                (0..m)
                    .map(|i| -r[i] * grad[i] / w[i])
                    .fold(0.0, f64::max)
            } else {
                (free.iter().sum::<f64>() / free.len() as f64).max(0.0)
            }
        }
    };
    let lambda_per_agent: Vec<f64> = r.iter().map(|ri| weighted_lambda / ri).collect();
    let mu: Vec<f64> = (0..m)
        .map(|i| {
            if at_lower_bound(game, i, &x) {
                (grad[i] + lambda_per_agent[i] * w[i]).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let kkt_residual = gne_kkt_residual(game, &x, &lambda_per_agent, &mu)?;
    Ok(EquilibriumResult {
        x,
        uniform_lambda: vgne.then_some(weighted_lambda),
        lambda_per_agent,
        mu,
        weighted_lambda,
        r_weights: None,
        kkt_residual,
        is_vgne: vgne,
        budget_active: active,
        iterations: sol.iterations,
        natural_residual: sol.natural_residual,
    })
}

/// Variational GNE: solution of the inequality with the plain pseudo-gradient.
pub fn solve_vgne(game: &GameModel, params: &SolverParams) -> Result<EquilibriumResult> {
    let ones = vec![1.0; game.num_agents()];
    let sol = solve_weighted(game, &ones, params)?;
    assemble(game, &ones, sol, true)
}

/// Normalized equilibrium associated with the weights `r` (normalized to
/// `Σ r_i = M` first, so `r` and `c·r` give identical results).
pub fn solve_normalized(
    game: &GameModel,
    r: &[f64],
    params: &SolverParams,
) -> Result<EquilibriumResult> {
    validate_weights(r, game.num_agents())?;
    let r = normalize_weights(r)?;
    let sol = solve_weighted(game, &r, params)?;
    let vgne = r.iter().all(|ri| *ri == r[0]);
    let mut result = assemble(game, &r, sol, vgne)?;
    result.r_weights = Some(r);
    Ok(result)
}

/// Solves one normalized equilibrium per weight vector and verifies each.
/// Failed points stay in the output, in grid order.
pub fn gne_set_sample(game: &GameModel, grid: &[Vec<f64>], params: &SolverParams) -> Vec<GneSample> {
    grid.par_iter()
        .map(|r| sample_point(game, r, params))
        .collect()
}

fn sample_point(game: &GameModel, r: &[f64], params: &SolverParams) -> GneSample {
    let normalized = normalize_weights(r).unwrap_or_else(|_| r.to_vec());
    let outcome = solve_normalized(game, r, params);
    let (verified_gne, strict_complementarity) = match &outcome {
        Ok(res) => {
            let verified = is_gne(game, &res.x, 1e-6).map(|c| c.verdict).unwrap_or(false);
            let strict = !res.budget_active
                || res
                    .lambda_per_agent
                    .iter()
                    .all(|l| *l > STRICT_COMPLEMENTARITY_TOL);
            (verified, strict)
        }
        Err(_) => (false, false),
    };
    GneSample {
        r: normalized,
        outcome,
        verified_gne,
        strict_complementarity,
    }
}
