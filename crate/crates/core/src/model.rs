//! Game instances: per-agent costs, the shared feasible set, the pseudo-gradient
//! and positive affine cost transformations.
//!
//! Every agent controls one scalar decision `u_i` (a charge amount). Its cost is
//! a tracking term on the resulting state `z_i = A_i·z_init_i + B_i·u_i` plus an
//! affine congestion price `u_i·(ρ1_i·Σ_j u_j + ρ0_i)`. Transformations are kept
//! as `(scale, offset)` metadata on each agent, so the reported cost is
//! `scale·J_i + offset` and the pseudo-gradient block is `scale·∂J_i/∂u_i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GneError, Result};

/// Smallest state value at which the logarithmic cost may be evaluated.
pub const LOG_DOMAIN_FLOOR: f64 = 1e-9;

/// Linear battery model `z = leakage·z_init + efficiency·u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeDynamics {
    pub leakage: f64,
    pub efficiency: f64,
    pub z_init: f64,
}

impl ChargeDynamics {
    /// Direct charging with no leakage from an empty battery.
    pub const fn direct() -> Self {
        Self {
            leakage: 1.0,
            efficiency: 1.0,
            z_init: 0.0,
        }
    }

    #[inline]
    pub fn state(&self, u: f64) -> f64 {
        self.leakage * self.z_init + self.efficiency * u
    }
}

/// Affine congestion price `σ(u) = rho1·Σ_j u_j + rho0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Congestion {
    pub rho0: f64,
    pub rho1: f64,
}

/// How an agent values its final state `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tracking {
    /// `q·(z_ref − z)²`
    EvQuadratic { q: f64, z_ref: f64 },
    /// `ln(c / z) + weight·(target − z)²`, defined for `z ≥ LOG_DOMAIN_FLOOR`.
    LogPlusQuadratic { c: f64, weight: f64, target: f64 },
    /// `exp(target − z) − 1`
    ExponentialGap { target: f64 },
    /// `(target − z)²`
    PureQuadraticGap { target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction {
    pub tracking: Tracking,
    pub dynamics: ChargeDynamics,
    pub congestion: Congestion,
}

impl CostFunction {
    pub fn ev_quadratic(
        q: f64,
        dynamics: ChargeDynamics,
        z_ref: f64,
        congestion: Congestion,
    ) -> Self {
        Self {
            tracking: Tracking::EvQuadratic { q, z_ref },
            dynamics,
            congestion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        let c = &self.congestion;
        if !(0.0..=1.0).contains(&d.leakage) {
            return Err(GneError::InvalidParams(format!(
                "leakage {} outside [0, 1]",
                d.leakage
            )));
        }
        if !(d.efficiency > 0.0 && d.efficiency <= 1.0) {
            return Err(GneError::InvalidParams(format!(
                "efficiency {} outside (0, 1]",
                d.efficiency
            )));
        }
        if !(c.rho1 >= 0.0) || !c.rho0.is_finite() || !d.z_init.is_finite() {
            return Err(GneError::InvalidParams(format!(
                "congestion (rho0 {}, rho1 {}) or initial charge {} invalid",
                c.rho0, c.rho1, d.z_init
            )));
        }
        match self.tracking {
            Tracking::EvQuadratic { q, z_ref } => {
                if !(q > 0.0) || !z_ref.is_finite() {
                    return Err(GneError::InvalidParams(format!(
                        "tracking weight q {q} must be positive"
                    )));
                }
            }
            Tracking::LogPlusQuadratic { c, weight, target } => {
                if !(c > 0.0) || !(weight >= 0.0) || !target.is_finite() {
                    return Err(GneError::InvalidParams(format!(
                        "log cost needs c > 0 and weight ≥ 0 (c {c}, weight {weight})"
                    )));
                }
            }
            Tracking::ExponentialGap { target } | Tracking::PureQuadraticGap { target } => {
                if !target.is_finite() {
                    return Err(GneError::InvalidParams("non-finite target".into()));
                }
            }
        }
        Ok(())
    }

    /// Cost given the agent's own decision and the total decision of all agents
    /// (including its own).
    pub fn value(&self, own: f64, total: f64) -> Result<f64> {
        let z = self.dynamics.state(own);
        let tracking = match self.tracking {
            Tracking::EvQuadratic { q, z_ref } => q * (z_ref - z).powi(2),
            Tracking::LogPlusQuadratic { c, weight, target } => {
                check_log_domain(z)?;
                (c / z).ln() + weight * (target - z).powi(2)
            }
            Tracking::ExponentialGap { target } => (target - z).exp() - 1.0,
            Tracking::PureQuadraticGap { target } => (target - z).powi(2),
        };
        Ok(tracking + own * (self.congestion.rho1 * total + self.congestion.rho0))
    }

    /// Partial derivative of [`value`](Self::value) with respect to the own decision.
    pub fn own_derivative(&self, own: f64, total: f64) -> Result<f64> {
        let z = self.dynamics.state(own);
        let dtrack_dz = match self.tracking {
            Tracking::EvQuadratic { q, z_ref } => -2.0 * q * (z_ref - z),
            Tracking::LogPlusQuadratic { weight, target, .. } => {
                check_log_domain(z)?;
                -1.0 / z - 2.0 * weight * (target - z)
            }
            Tracking::ExponentialGap { target } => -(target - z).exp(),
            Tracking::PureQuadraticGap { target } => -2.0 * (target - z),
        };
        let c = &self.congestion;
        Ok(dtrack_dz * self.dynamics.efficiency + c.rho1 * total + c.rho1 * own + c.rho0)
    }

    /// Coefficients `(curvature, reference)` of a tracking term of the form
    /// `curvature·(reference − z)²`, when the cost is quadratic in the own decision.
    fn quadratic_tracking(&self) -> Option<(f64, f64)> {
        match self.tracking {
            Tracking::EvQuadratic { q, z_ref } => Some((q, z_ref)),
            Tracking::PureQuadraticGap { target } => Some((1.0, target)),
            _ => None,
        }
    }

    /// Unconstrained minimizer in the own decision when the cost is quadratic,
    /// given the sum of the other agents' decisions.
    pub fn quadratic_vertex(&self, others_total: f64) -> Option<f64> {
        let (q, reference) = self.quadratic_tracking()?;
        let b = self.dynamics.efficiency;
        let gap = reference - self.dynamics.leakage * self.dynamics.z_init;
        let c = &self.congestion;
        Some((2.0 * q * b * gap - c.rho1 * others_total - c.rho0) / (2.0 * (q * b * b + c.rho1)))
    }
}

fn check_log_domain(z: f64) -> Result<()> {
    if z >= LOG_DOMAIN_FLOOR && z.is_finite() {
        Ok(())
    } else {
        Err(GneError::Domain(format!(
            "logarithmic cost needs state ≥ {LOG_DOMAIN_FLOOR:e}, got {z:e}"
        )))
    }
}

/// One player: a cost plus the positive affine map applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    pub cost: CostFunction,
    pub scale: f64,
    pub offset: f64,
}

impl AgentSpec {
    pub fn new(cost: CostFunction) -> Self {
        Self {
            cost,
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// Agents control a single scalar decision.
    pub const fn dim(&self) -> usize {
        1
    }
}

/// `{u : u ≥ lower_bounds, weightsᵀu ≤ budget}`
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    lower_bounds: Vec<f64>,
    weights: Vec<f64>,
    budget: f64,
}

impl FeasibleSet {
    pub fn new(lower_bounds: Vec<f64>, weights: Vec<f64>, budget: f64) -> Result<Self> {
        if lower_bounds.len() != weights.len() {
            return Err(GneError::DimensionMismatch {
                expected: lower_bounds.len(),
                got: weights.len(),
            });
        }
        if lower_bounds.is_empty() {
            return Err(GneError::InvalidParams("feasible set needs at least one agent".into()));
        }
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(GneError::InvalidParams(format!("budget {budget} must be positive")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(GneError::InvalidParams(format!("budget weight {w} must be positive")));
        }
        if let Some(lb) = lower_bounds.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(GneError::InvalidParams(format!("lower bound {lb} must be nonnegative")));
        }
        let weighted_lb: f64 = weights.iter().zip(&lower_bounds).map(|(w, l)| w * l).sum();
        if weighted_lb > budget {
            return Err(GneError::InfeasibleSet {
                weighted_lb,
                budget,
            });
        }
        Ok(Self {
            lower_bounds,
            weights,
            budget,
        })
    }

    /// Nonnegative orthant intersected with `Σ u_i ≤ budget`.
    pub fn simplex(n: usize, budget: f64) -> Result<Self> {
        Self::new(vec![0.0; n], vec![1.0; n], budget)
    }

    pub fn dim(&self) -> usize {
        self.lower_bounds.len()
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower_bounds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn weighted_sum(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    /// Largest constraint violation of `x` (zero when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let budget = (self.weighted_sum(x) - self.budget).max(0.0);
        self.lower_bounds
            .iter()
            .zip(x)
            .map(|(lb, v)| (lb - v).max(0.0))
            .fold(budget, f64::max)
    }

    pub(crate) fn with_lower_bound(mut self, i: usize, lb: f64) -> Result<Self> {
        self.lower_bounds[i] = lb;
        Self::new(self.lower_bounds, self.weights, self.budget)
    }
}

/// Positive affine cost transformations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Transformation {
    /// Per-agent scale and offset.
    Cnc { a: Vec<f64>, b: Vec<f64> },
    /// Shared scale, per-agent offset.
    Cuc { a: f64, b: Vec<f64> },
    /// Shared scale and offset.
    Cfc { a: f64, b: f64 },
}

impl Transformation {
    pub fn identity() -> Self {
        Transformation::Cfc { a: 1.0, b: 0.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transformation::Cnc { .. } => "CNC",
            Transformation::Cuc { .. } => "CUC",
            Transformation::Cfc { .. } => "CFC",
        }
    }

    /// Per-agent `(scale, offset)` pairs for a game with `m` agents.
    pub fn per_agent(&self, m: usize) -> Result<Vec<(f64, f64)>> {
        let check_len = |len: usize| {
            if len == m {
                Ok(())
            } else {
                Err(GneError::DimensionMismatch {
                    expected: m,
                    got: len,
                })
            }
        };
        let pairs: Vec<(f64, f64)> = match self {
            Transformation::Cnc { a, b } => {
                check_len(a.len())?;
                check_len(b.len())?;
                a.iter().copied().zip(b.iter().copied()).collect()
            }
            Transformation::Cuc { a, b } => {
                check_len(b.len())?;
                b.iter().map(|bi| (*a, *bi)).collect()
            }
            Transformation::Cfc { a, b } => vec![(*a, *b); m],
        };
        for (a, b) in &pairs {
            if !(*a > 0.0) || !a.is_finite() {
                return Err(GneError::InvalidTransformation(format!(
                    "multiplier {a} must be strictly positive"
                )));
            }
            if !b.is_finite() {
                return Err(GneError::InvalidTransformation(format!("offset {b} not finite")));
            }
        }
        Ok(pairs)
    }
}

/// Exact `F(u) = matrix·u + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub matrix: DMatrix<f64>,
    pub constant: DVector<f64>,
}

impl AffineForm {
    pub fn new(matrix: DMatrix<f64>, constant: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != constant.len() {
            return Err(GneError::DimensionMismatch {
                expected: matrix.nrows(),
                got: constant.len(),
            });
        }
        Ok(Self { matrix, constant })
    }

    pub fn dim(&self) -> usize {
        self.constant.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.matrix * x + &self.constant).as_slice().to_vec()
    }

    /// `diag(r)·F`, the operator of the `r`-weighted inequality.
    pub fn weighted(&self, r: &[f64]) -> Result<Self> {
        validate_weights(r, self.dim())?;
        let mut out = self.clone();
        for (i, ri) in r.iter().enumerate() {
            out.matrix.row_mut(i).scale_mut(*ri);
            out.constant[i] *= ri;
        }
        Ok(out)
    }

    pub fn certificate(&self) -> MonotonicityReport {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
        MonotonicityReport {
            min_eigenvalue,
            strongly_monotone: min_eigenvalue > 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    /// Smallest eigenvalue of the symmetric part of the operator matrix.
    pub min_eigenvalue: f64,
    pub strongly_monotone: bool,
}

pub(crate) fn validate_weights(r: &[f64], m: usize) -> Result<()> {
    if r.len() != m {
        return Err(GneError::DimensionMismatch {
            expected: m,
            got: r.len(),
        });
    }
    match r.iter().find(|ri| !(**ri > 0.0) || !ri.is_finite()) {
        Some(bad) => Err(GneError::InvalidWeights(format!(
            "weights must be strictly positive, got {bad}"
        ))),
        None => Ok(()),
    }
}

/// A generalized game with scalar decisions and one shared separable budget.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    agents: Vec<AgentSpec>,
    feasible: FeasibleSet,
}

impl GameModel {
    pub fn new(agents: Vec<AgentSpec>, feasible: FeasibleSet) -> Result<Self> {
        if agents.len() != feasible.dim() {
            return Err(GneError::DimensionMismatch {
                expected: agents.len(),
                got: feasible.dim(),
            });
        }
        for agent in &agents {
            agent.cost.validate()?;
            if !(agent.scale > 0.0) || !agent.scale.is_finite() || !agent.offset.is_finite() {
                return Err(GneError::InvalidTransformation(format!(
                    "agent scale {} must be positive and offset {} finite",
                    agent.scale, agent.offset
                )));
            }
        }
        Ok(Self { agents, feasible })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn feasible(&self) -> &FeasibleSet {
        &self.feasible
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.agents.len() {
            Ok(())
        } else {
            Err(GneError::DimensionMismatch {
                expected: self.agents.len(),
                got: x.len(),
            })
        }
    }

    /// Transformed cost `scale_i·J_i(x) + offset_i` of agent `i`.
    pub fn eval_cost(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let total: f64 = x.iter().sum();
        let agent = &self.agents[i];
        Ok(agent.scale * agent.cost.value(x[i], total)? + agent.offset)
    }

    pub fn costs(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.eval_cost(i, x)).collect()
    }

    /// Cost of agent `i` when it plays `own` against the fixed decisions in `x`.
    pub(crate) fn cost_with_own(&self, i: usize, x: &[f64], own: f64) -> Result<f64> {
        let others: f64 = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
        let agent = &self.agents[i];
        Ok(agent.scale * agent.cost.value(own, others + own)? + agent.offset)
    }

    /// Block `i` of the pseudo-gradient, `scale_i·∂J_i/∂x_i`.
    pub fn partial_gradient(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let total: f64 = x.iter().sum();
        let agent = &self.agents[i];
        Ok(agent.scale * agent.cost.own_derivative(x[i], total)?)
    }

    pub fn pseudo_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let total: f64 = x.iter().sum();
        self.agents
            .iter()
            .zip(x)
            .map(|(agent, xi)| Ok(agent.scale * agent.cost.own_derivative(*xi, total)?))
            .collect()
    }

    /// Pseudo-gradient of the game whose costs are weighted by `r`.
    pub fn weighted_pseudo_gradient(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        validate_weights(r, self.num_agents())?;
        let mut g = self.pseudo_gradient(x)?;
        for (gi, ri) in g.iter_mut().zip(r) {
            *gi *= ri;
        }
        Ok(g)
    }

    /// Exact affine pseudo-gradient, present when every cost is [`Tracking::EvQuadratic`].
    pub fn affine_form(&self) -> Option<AffineForm> {
        let m = self.num_agents();
        let mut matrix = DMatrix::zeros(m, m);
        let mut constant = DVector::zeros(m);
        for (i, agent) in self.agents.iter().enumerate() {
            let Tracking::EvQuadratic { q, z_ref } = agent.cost.tracking else {
                return None;
            };
            let d = &agent.cost.dynamics;
            let c = &agent.cost.congestion;
            let b = d.efficiency;
            let gap = z_ref - d.leakage * d.z_init;
            for j in 0..m {
                matrix[(i, j)] = agent.scale * c.rho1;
            }
            matrix[(i, i)] = agent.scale * 2.0 * (q * b * b + c.rho1);
            constant[i] = agent.scale * (-2.0 * q * b * gap + c.rho0);
        }
        Some(AffineForm { matrix, constant })
    }

    /// New game with `t` composed after the agents' current transformations.
    pub fn apply_transformation(&self, t: &Transformation) -> Result<GameModel> {
        let pairs = t.per_agent(self.num_agents())?;
        let agents = self
            .agents
            .iter()
            .zip(pairs)
            .map(|(agent, (a, b))| AgentSpec {
                cost: agent.cost,
                scale: a * agent.scale,
                offset: a * agent.offset + b,
            })
            .collect();
        GameModel::new(agents, self.feasible.clone())
    }

    pub fn monotonicity_certificate(&self) -> Result<MonotonicityReport> {
        Ok(self.affine_form().ok_or(GneError::NotAffine)?.certificate())
    }

    pub fn weighted_monotonicity_certificate(&self, r: &[f64]) -> Result<MonotonicityReport> {
        let form = self.affine_form().ok_or(GneError::NotAffine)?;
        Ok(form.weighted(r)?.certificate())
    }
}
