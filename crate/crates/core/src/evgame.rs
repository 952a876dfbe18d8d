//! Electric-vehicle charging game and its transformation scenarios.
//!
//! Agent `i` chooses a charge `u_i ≥ 0` with `Σ u_i ≤ Ū` and pays
//! `q_i·(z_ref_i − z_i)² + u_i·(ρ1_i·Σ_j u_j + ρ0_i)` with
//! `z_i = A_i·z_init_i + B_i·u_i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GneError, Result};
use crate::model::{
    AgentSpec, ChargeDynamics, Congestion, CostFunction, FeasibleSet, GameModel, Tracking,
    Transformation, LOG_DOMAIN_FLOOR,
};

/// Default per-agent parameters of the case study.
pub const DEFAULT_Q: f64 = 1.0;
pub const DEFAULT_Z_REF: f64 = 1.0;
pub const DEFAULT_RHO0: f64 = 0.05;
pub const DEFAULT_RHO1: f64 = 0.1;
pub const DEFAULT_BUDGET: f64 = 1.0;

/// Weight of the quadratic part of the logarithmic cost in the
/// transformed-cost scenario.
const LOG_COST_QUADRATIC_WEIGHT: f64 = 0.1;

/// A failed field check, addressed by a path such as `rho1[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvParams {
    pub q: Vec<f64>,
    /// Battery leakage rates.
    #[serde(rename = "A")]
    pub leakage: Vec<f64>,
    /// Charging efficiencies.
    #[serde(rename = "B")]
    pub efficiency: Vec<f64>,
    pub z_init: Vec<f64>,
    pub z_ref: Vec<f64>,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    pub u_bar: f64,
}

impl EvParams {
    /// `m` identical agents with the default parameters and an empty battery.
    pub fn baseline(m: usize) -> Self {
        Self {
            q: vec![DEFAULT_Q; m],
            leakage: vec![1.0; m],
            efficiency: vec![1.0; m],
            z_init: vec![0.0; m],
            z_ref: vec![DEFAULT_Z_REF; m],
            rho0: vec![DEFAULT_RHO0; m],
            rho1: vec![DEFAULT_RHO1; m],
            u_bar: DEFAULT_BUDGET,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.q.len()
    }

    /// Every violated constraint, with paths relative to the parameter block.
    pub fn violations(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let m = self.q.len();
        if m == 0 {
            errors.push(FieldError {
                path: "q".into(),
                message: "at least one agent is required".into(),
            });
        }
        type Check = fn(f64) -> bool;
        let fields: [(&str, &[f64], Check, &str); 7] = [
            ("q", &self.q, |v| v > 0.0, "must be positive"),
            ("A", &self.leakage, |v| (0.0..=1.0).contains(&v), "must lie in [0, 1]"),
            ("B", &self.efficiency, |v| v > 0.0 && v <= 1.0, "must lie in (0, 1]"),
            ("z_init", &self.z_init, |v| v >= 0.0, "must be nonnegative"),
            ("z_ref", &self.z_ref, |v| v > 0.0, "must be positive"),
            ("rho0", &self.rho0, |v| v >= 0.0, "must be nonnegative"),
            ("rho1", &self.rho1, |v| v >= 0.0, "must be nonnegative"),
        ];
        for (name, values, ok, message) in fields {
            if values.len() != m {
                errors.push(FieldError {
                    path: name.into(),
                    message: format!("expected {m} entries, got {}", values.len()),
                });
            }
            for (k, v) in values.iter().enumerate() {
                if !v.is_finite() || !ok(*v) {
                    errors.push(FieldError {
                        path: format!("{name}[{k}]"),
                        message: format!("{message} (got {v})"),
                    });
                }
            }
        }
        if !(self.u_bar > 0.0) || !self.u_bar.is_finite() {
            errors.push(FieldError {
                path: "u_bar".into(),
                message: format!("must be positive (got {})", self.u_bar),
            });
        }
        errors
    }

    /// Whether the budget is too small to bring every agent to its reference level.
    pub fn is_scarce(&self) -> bool {
        let demand: f64 = (0..self.num_agents())
            .map(|i| (self.z_ref[i] - self.leakage[i] * self.z_init[i]) / self.efficiency[i])
            .sum();
        self.u_bar < demand
    }

    fn dynamics(&self, i: usize) -> ChargeDynamics {
        ChargeDynamics {
            leakage: self.leakage[i],
            efficiency: self.efficiency[i],
            z_init: self.z_init[i],
        }
    }

    fn congestion(&self, i: usize) -> Congestion {
        Congestion {
            rho0: self.rho0[i],
            rho1: self.rho1[i],
        }
    }
}

/// Game with quadratic tracking costs, `u ≥ 0` and `Σ u ≤ Ū`.
pub fn build_ev_game(p: &EvParams) -> Result<GameModel> {
    let errors = p.violations();
    if !errors.is_empty() {
        let joined: Vec<String> = errors.iter().map(ToString::to_string).collect();
        return Err(GneError::InvalidParams(joined.join("; ")));
    }
    let m = p.num_agents();
    let agents = (0..m)
        .map(|i| {
            AgentSpec::new(CostFunction::ev_quadratic(
                p.q[i],
                p.dynamics(i),
                p.z_ref[i],
                p.congestion(i),
            ))
        })
        .collect();
    GameModel::new(agents, FeasibleSet::simplex(m, p.u_bar)?)
}

/// Named variants of the three-agent case study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    /// Costs scaled by `a = [1, 2, 3]`.
    Scaling,
    /// Initial charge `[0, 0.25, 0.5]`.
    InitialCharge,
    /// Heterogeneous tracking costs: quadratic, logarithmic, exponential.
    TransformedCost,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Baseline,
        Scenario::Scaling,
        Scenario::InitialCharge,
        Scenario::TransformedCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Scaling => "scaling",
            Scenario::InitialCharge => "initial_charge",
            Scenario::TransformedCost => "transformed_cost",
        }
    }

    pub fn game(self) -> Result<GameModel> {
        let base = EvParams::baseline(3);
        match self {
            Scenario::Baseline => build_ev_game(&base),
            Scenario::Scaling => build_ev_game(&base)?.apply_transformation(&Transformation::Cnc {
                a: vec![1.0, 2.0, 3.0],
                b: vec![0.0; 3],
            }),
            Scenario::InitialCharge => build_ev_game(&EvParams {
                z_init: vec![0.0, 0.25, 0.5],
                ..base
            }),
            Scenario::TransformedCost => transformed_cost_game(&base),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = GneError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| GneError::UnknownScenario(s.to_string()))
    }
}

pub fn scenario(name: &str) -> Result<GameModel> {
    name.parse::<Scenario>()?.game()
}

/// Replaces the tracking terms of a three-agent game with
/// `(Ū − z)²`, `ln(Ū/z) + 0.1·(Ū − z)²` and `exp(Ū − z) − 1`, keeping the
/// congestion price and battery dynamics.
fn transformed_cost_game(p: &EvParams) -> Result<GameModel> {
    let target = p.u_bar;
    let tracking = [
        Tracking::PureQuadraticGap { target },
        Tracking::LogPlusQuadratic {
            c: target,
            weight: LOG_COST_QUADRATIC_WEIGHT,
            target,
        },
        Tracking::ExponentialGap { target },
    ];
    let agents = tracking
        .iter()
        .enumerate()
        .map(|(i, t)| {
            AgentSpec::new(CostFunction {
                tracking: *t,
                dynamics: p.dynamics(i),
                congestion: p.congestion(i),
            })
        })
        .collect();
    // keep the logarithmic agent's state at or above the domain floor
    let log_lb = (LOG_DOMAIN_FLOOR - p.leakage[1] * p.z_init[1]).max(0.0) / p.efficiency[1];
    let set = FeasibleSet::simplex(3, p.u_bar)?.with_lower_bound(1, log_lb)?;
    GameModel::new(agents, set)
}

/// Two identical agents sharing one unit of charge, agent 1's cost scaled by `a1`.
pub fn two_agent_game(a1: f64) -> Result<GameModel> {
    build_ev_game(&EvParams::baseline(2))?.apply_transformation(&Transformation::Cnc {
        a: vec![a1, 1.0],
        b: vec![0.0, 0.0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::solve_vgne;
    use crate::vi::{SolverMethod, SolverParams};

    #[test]
    fn baseline_affine_form() {
        let game = scenario("baseline").unwrap();
        let form = game.affine_form().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 2.2 } else { 0.1 };
                assert_close!(form.matrix[(i, j)], expected, 1e-15);
            }
            assert_close!(form.constant[i], -1.95, 1e-15);
        }
        assert!(EvParams::baseline(3).is_scarce());
    }

    #[test]
    fn zero_gap_zero_price_has_no_constant() {
        let p = EvParams {
            z_init: vec![1.0, 1.0],
            rho0: vec![0.0, 0.0],
            ..EvParams::baseline(2)
        };
        let form = build_ev_game(&p).unwrap().affine_form().unwrap();
        assert_eq!(form.constant.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn initial_charge_constants() {
        let form = Scenario::InitialCharge.game().unwrap().affine_form().unwrap();
        for (i, z0) in [0.0, 0.25, 0.5].iter().enumerate() {
            assert_close!(form.constant[i], -2.0 * (1.0 - z0) + 0.05, 1e-15);
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert_eq!(
            scenario("nonsense").unwrap_err(),
            GneError::UnknownScenario("nonsense".into())
        );
    }

    #[test]
    fn scaling_scenario_uses_cnc_vector() {
        let game = Scenario::Scaling.game().unwrap();
        let scales: Vec<f64> = game.agents().iter().map(|a| a.scale).collect();
        assert_eq!(scales, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn baseline_vgne_equal_split() {
        let res = solve_vgne(&Scenario::Baseline.game().unwrap(), &SolverParams::default()).unwrap();
        for u in &res.x {
            assert_close!(*u, 1.0 / 3.0, 1e-12);
        }
        // λ = 1.95 − (2.2 + 0.2)/3
        assert_close!(res.uniform_lambda.unwrap(), 1.15, 1e-12);
    }

    #[test]
    fn initial_charge_favours_empty_battery() {
        let res =
            solve_vgne(&Scenario::InitialCharge.game().unwrap(), &SolverParams::default()).unwrap();
        // closed form: λ = 0.65 and u_i = (1.85 − 2·z_init_i − λ)/2.1
        assert_close!(res.x[0], 1.2 / 2.1, 1e-12);
        assert_close!(res.x[1], 0.7 / 2.1, 1e-12);
        assert_close!(res.x[2], 0.2 / 2.1, 1e-12);
        assert!(res.x[0] > res.x[1] && res.x[1] > res.x[2]);
    }

    #[test]
    fn scaling_changes_vgne() {
        let params = SolverParams::default();
        let base = solve_vgne(&Scenario::Baseline.game().unwrap(), &params).unwrap();
        let scaled = solve_vgne(&Scenario::Scaling.game().unwrap(), &params).unwrap();
        let dev = base
            .x
            .iter()
            .zip(&scaled.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev > 1e-3);
    }

    #[test]
    fn every_scenario_saturates_budget() {
        let params = SolverParams::default();
        for sc in Scenario::ALL {
            let res = solve_vgne(&sc.game().unwrap(), &params).unwrap();
            let total: f64 = res.x.iter().sum();
            assert!((total - 1.0).abs() <= 1e-8, "{sc}: Σu = {total}");
            assert!(res.x.iter().all(|u| *u >= 0.0));
        }
    }

    #[test]
    fn transformed_cost_gradient_and_solution() {
        let game = Scenario::TransformedCost.game().unwrap();
        assert!(game.affine_form().is_none());
        let x = [0.3, 0.25, 0.2];
        let g = game.pseudo_gradient(&x).unwrap();
        let total: f64 = x.iter().sum();
        // hand derivatives of the three tracking terms plus 2ρ1·u_i + ρ1·Σ_{j≠i} u_j + ρ0
        let congestion = |i: usize| 0.1 * total + 0.1 * x[i] + 0.05;
        assert_close!(g[0], -2.0 * (1.0 - x[0]) + congestion(0), 1e-14);
        assert_close!(g[1], -1.0 / x[1] - 0.2 * (1.0 - x[1]) + congestion(1), 1e-14);
        assert_close!(g[2], -(1.0 - x[2]).exp() + congestion(2), 1e-14);

        let res = solve_vgne(
            &game,
            &SolverParams {
                method: SolverMethod::Auto,
                ..SolverParams::default()
            },
        )
        .unwrap();
        assert!(res.kkt_residual <= 1e-6);
    }

    #[test]
    fn field_paths_in_violations() {
        let p = EvParams {
            rho1: vec![-0.1, 0.1],
            efficiency: vec![1.0],
            ..EvParams::baseline(2)
        };
        let paths: Vec<String> = p.violations().into_iter().map(|e| e.path).collect();
        assert!(paths.contains(&"rho1[0]".to_string()));
        assert!(paths.contains(&"B".to_string()));
        assert!(build_ev_game(&p).is_err());
    }
}
