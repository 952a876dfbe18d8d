//! Monotone variational inequalities over `{u ≥ lb, wᵀu ≤ Ū}`.
//!
//! [`solve_vi`] is a projected extragradient method with backtracking on the
//! step size; it only needs operator evaluations. [`solve_affine_vi_active_set`]
//! solves the KKT system of an affine operator exactly by enumerating active
//! sets and is used both as an inner solver for small affine games and as an
//! independent check on the iterative method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GneError, Result};
use crate::model::FeasibleSet;

/// Upper bound on the dimension accepted by the active-set enumeration.
pub const MAX_ACTIVE_SET_DIM: usize = 20;

/// Feasibility and sign tolerance used when accepting an active-set pattern.
const PATTERN_TOL: f64 = 1e-12;

/// Ratio bound `γ‖F(y) − F(x)‖ ≤ ν‖y − x‖` enforced by the step search.
const STEP_RATIO: f64 = 0.9;

/// Which solver backs the equilibrium computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Active-set enumeration for affine games of dimension ≤ 20, extragradient otherwise.
    #[default]
    Auto,
    Extragradient,
    ActiveSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Natural-residual tolerance.
    pub tol: f64,
    pub initial_step: f64,
    /// Step shrink factor in `(0, 1)`.
    pub step_backtrack: f64,
    /// Seed for the random restart points.
    pub seed: u64,
    /// Extra attempts from random feasible starts after a failed run.
    pub restarts: usize,
    pub method: SolverMethod,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-10,
            initial_step: 1.0,
            step_backtrack: 0.5,
            seed: 0,
            restarts: 0,
            method: SolverMethod::Auto,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || !(self.initial_step > 0.0) {
            return Err(GneError::InvalidParams(format!(
                "solver needs tol > 0, max_iters ≥ 1 and initial_step > 0 (tol {}, max_iters {}, initial_step {})",
                self.tol, self.max_iters, self.initial_step
            )));
        }
        if !(self.step_backtrack > 0.0 && self.step_backtrack < 1.0) {
            return Err(GneError::InvalidParams(format!(
                "step_backtrack {} outside (0, 1)",
                self.step_backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    pub min: f64,
    pub max: f64,
    pub last: f64,
}

/// Multipliers of the shared budget (`lambda`) and of the lower bounds (`mu`).
#[derive(Debug, Clone, PartialEq)]
pub struct KktMultipliers {
    pub lambda: f64,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViSolution {
    pub x: Vec<f64>,
    pub natural_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub steps: Option<StepSummary>,
    /// Exact multipliers, reported by the active-set solver.
    pub multipliers: Option<KktMultipliers>,
}

/// Euclidean projection onto `{u ≥ lb, wᵀu ≤ Ū}`.
///
/// Clamps to the lower bounds and, if the budget is still violated, finds the
/// budget multiplier `τ > 0` with `Σ w_i·max(lb_i, p_i − τ·w_i) = Ū` by walking
/// the sorted breakpoints of that piecewise-linear function.
pub fn project_feasible(p: &[f64], set: &FeasibleSet) -> Result<Vec<f64>> {
    let n = set.dim();
    if p.len() != n {
        return Err(GneError::DimensionMismatch {
            expected: n,
            got: p.len(),
        });
    }
    let lb = set.lower_bounds();
    let w = set.weights();
    let budget = set.budget();

    let clamped: Vec<f64> = p.iter().zip(lb).map(|(pi, li)| pi.max(*li)).collect();
    let load: f64 = w.iter().zip(&clamped).map(|(wi, ci)| wi * ci).sum();
    let magnitude: f64 = w.iter().zip(&clamped).map(|(wi, ci)| (wi * ci).abs()).sum();
    if load <= budget + 8.0 * f64::EPSILON * (budget.abs() + magnitude) {
        return Ok(clamped);
    }

    // Coordinates above their bound leave the free set at τ_i = (p_i − lb_i)/w_i.
    let mut breakpoints: Vec<(f64, usize)> = (0..n)
        .filter(|&i| p[i] > lb[i])
        .map(|i| ((p[i] - lb[i]) / w[i], i))
        .collect();
    breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // φ(τ) = free_wp − τ·free_ww + fixed for τ between consecutive breakpoints.
    let mut free_wp: f64 = breakpoints.iter().map(|&(_, i)| w[i] * p[i]).sum();
    let mut free_ww: f64 = breakpoints.iter().map(|&(_, i)| w[i] * w[i]).sum();
    let mut fixed: f64 = (0..n).filter(|&i| p[i] <= lb[i]).map(|i| w[i] * lb[i]).sum();

    let mut tau = breakpoints.last().map_or(0.0, |b| b.0);
    for &(bp, i) in &breakpoints {
        let phi_at_bp = free_wp - bp * free_ww + fixed;
        if phi_at_bp <= budget {
            tau = (free_wp + fixed - budget) / free_ww;
            break;
        }
        free_wp -= w[i] * p[i];
        free_ww -= w[i] * w[i];
        fixed += w[i] * lb[i];
    }

    Ok((0..n).map(|i| lb[i].max(p[i] - tau * w[i])).collect())
}


fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn step(x: &[f64], direction: &[f64], gamma: f64) -> Vec<f64> {
    x.iter().zip(direction).map(|(xi, di)| xi - gamma * di).collect()
}

/// `‖x − Π(x − F(x))‖`, zero exactly at solutions of the inequality.
pub fn natural_residual(x: &[f64], f_value: &[f64], set: &FeasibleSet) -> Result<f64> {
    let p = project_feasible(&step(x, f_value, 1.0), set)?;
    Ok(diff_norm(x, &p))
}

/// Solves `(y − x)ᵀF(x) ≥ 0 for all feasible y` with a projected extragradient
/// method. `F` must be monotone on the set; this is not checked.
pub fn solve_vi<F>(op: F, set: &FeasibleSet, params: &SolverParams) -> Result<ViSolution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    params.validate()?;
    let start = project_feasible(set.lower_bounds(), set)?;
    let mut outcome = extragradient(&op, set, params, start);
    if params.restarts > 0 && matches!(outcome, Err(GneError::NoConvergence { .. })) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.restarts {
            let raw: Vec<f64> = set
                .lower_bounds()
                .iter()
                .zip(set.weights())
                .map(|(lb, w)| lb + rng.random::<f64>() * set.budget() / w)
                .collect();
            outcome = extragradient(&op, set, params, project_feasible(&raw, set)?);
            if outcome.is_ok() {
                break;
            }
        }
    }
    outcome
}

fn extragradient<F>(
    op: &F,
    set: &FeasibleSet,
    params: &SolverParams,
    start: Vec<f64>,
) -> Result<ViSolution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let max_step = params.initial_step * 1e3;
    let mut x = start;
    let mut gamma = params.initial_step;
    let mut summary: Option<StepSummary> = None;
    let mut residual = f64::INFINITY;

    for iteration in 0..params.max_iters {
        let fx = op(&x)?;
        residual = natural_residual(&x, &fx, set)?;
        if residual <= params.tol {
            return Ok(ViSolution {
                x,
                natural_residual: residual,
                iterations: iteration,
                converged: true,
                steps: summary,
                multipliers: None,
            });
        }

        let (fy, ratio) = loop {
            let y = project_feasible(&step(&x, &fx, gamma), set)?;
            let fy = op(&y)?;
            let dy = diff_norm(&y, &x);
            let df = diff_norm(&fy, &fx);
            if gamma * df <= STEP_RATIO * dy || dy == 0.0 {
                let ratio = if dy > 0.0 { gamma * df / dy } else { 0.0 };
                break (fy, ratio);
            }
            gamma *= params.step_backtrack;
            if gamma < f64::MIN_POSITIVE {
                return Err(GneError::NoConvergence {
                    iterations: iteration,
                    residual,
                });
            }
        };
        x = project_feasible(&step(&x, &fy, gamma), set)?;
        summary = Some(match summary {
            None => StepSummary {
                min: gamma,
                max: gamma,
                last: gamma,
            },
            Some(s) => StepSummary {
                min: s.min.min(gamma),
                max: s.max.max(gamma),
                last: gamma,
            },
        });
        if ratio < 0.5 * STEP_RATIO {
            gamma = (gamma / params.step_backtrack).min(max_step);
        }
    }

    Err(GneError::NoConvergence {
        iterations: params.max_iters,
        residual,
    })
}

/// Exact solution of the affine inequality `F(x) = M·x + m` by active-set
/// enumeration over `{lower bound i active}` × `{budget active}`.
///
/// Patterns are tried in increasing bitmask order (bit `i` = bound `i` active,
/// bit `n` = budget active) and the first one satisfying primal feasibility,
/// dual sign and complementarity is returned.
pub fn solve_affine_vi_active_set(
    matrix: &DMatrix<f64>,
    constant: &DVector<f64>,
    set: &FeasibleSet,
) -> Result<ViSolution> {
    let n = set.dim();
    if n > MAX_ACTIVE_SET_DIM {
        return Err(GneError::DimensionTooLarge(n));
    }
    if matrix.nrows() != n || matrix.ncols() != n || constant.len() != n {
        return Err(GneError::DimensionMismatch {
            expected: n,
            got: constant.len(),
        });
    }
    let lb = set.lower_bounds();
    let w = set.weights();
    let budget = set.budget();

    let scale = 1.0
        + constant.amax()
        + matrix.amax()
        + budget.abs()
        + lb.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let tol = PATTERN_TOL * scale;

    for mask in 0u32..(1u32 << (n + 1)) {
        let budget_active = mask & (1 << n) != 0;
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        // x_A = lb_A; solve for x_F (and λ when the budget is active).
        let k = free.len() + usize::from(budget_active);
        let mut x = lb.to_vec();
        let mut lambda = 0.0;
        if k > 0 {
            let mut lhs = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (row, &i) in free.iter().enumerate() {
                for (col, &j) in free.iter().enumerate() {
                    lhs[(row, col)] = matrix[(i, j)];
                }
                let bound_part: f64 = (0..n)
                    .filter(|j| mask & (1 << j) != 0)
                    .map(|j| matrix[(i, j)] * lb[j])
                    .sum();
                rhs[row] = -constant[i] - bound_part;
                if budget_active {
                    lhs[(row, free.len())] = w[i];
                }
            }
            if budget_active {
                let last = free.len();
                for (col, &j) in free.iter().enumerate() {
                    lhs[(last, col)] = w[j];
                }
                let bound_load: f64 = (0..n)
                    .filter(|j| mask & (1 << j) != 0)
                    .map(|j| w[j] * lb[j])
                    .sum();
                rhs[last] = budget - bound_load;
            }
            let Some(sol) = lhs.lu().solve(&rhs) else {
                continue;
            };
            for (row, &i) in free.iter().enumerate() {
                x[i] = sol[row];
            }
            if budget_active {
                lambda = sol[free.len()];
            }
        }

        if x.iter().any(|v| !v.is_finite()) || !lambda.is_finite() {
            continue;
        }
        if lambda < -tol || free.iter().any(|&i| x[i] < lb[i] - tol) {
            continue;
        }
        let load: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
        if load > budget + tol {
            continue;
        }
        let fx = matrix * DVector::from_column_slice(&x) + constant;
        let mu: Vec<f64> = (0..n)
            .map(|i| {
                if mask & (1 << i) != 0 {
                    fx[i] + lambda * w[i]
                } else {
                    0.0
                }
            })
            .collect();
        if mu.iter().any(|m| *m < -tol) {
            continue;
        }
        // stationarity holds on the free rows by construction; complementarity
        // of the slack budget holds because λ = 0 there.
        let lambda = lambda.max(0.0);
        let mu: Vec<f64> = mu.into_iter().map(|m| m.max(0.0)).collect();
        let natural_residual = natural_residual(&x, fx.as_slice(), set)?;
        return Ok(ViSolution {
            x,
            natural_residual,
            iterations: mask as usize + 1,
            converged: true,
            steps: None,
            multipliers: Some(KktMultipliers { lambda, mu }),
        });
    }
    Err(GneError::NoValidPattern)
}

/// Largest violation of the v-GNE KKT system at `(x, λ, μ)`: stationarity,
/// complementarity on budget and bounds, multiplier signs and feasibility.
pub fn kkt_residual(
    f_value: &[f64],
    x: &[f64],
    lambda: f64,
    mu: &[f64],
    set: &FeasibleSet,
) -> f64 {
    let w = set.weights();
    let lb = set.lower_bounds();
    let stationarity = f_value
        .iter()
        .zip(w)
        .zip(mu)
        .map(|((f, wi), mi)| (f + lambda * wi - mi).abs())
        .fold(0.0, f64::max);
    let budget_comp = (lambda * (set.weighted_sum(x) - set.budget())).abs();
    let bound_comp = mu
        .iter()
        .zip(x)
        .zip(lb)
        .map(|((mi, xi), li)| (mi * (xi - li)).abs())
        .fold(0.0, f64::max);
    let sign = mu.iter().fold((-lambda).max(0.0), |acc, mi| acc.max(-mi));
    [stationarity, budget_comp, bound_comp, sign, set.violation(x)]
        .into_iter()
        .fold(0.0, f64::max)
}
