//! Python bindings: games, equilibrium solvers and fairness selection.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gnefair_core::equilibria::{self, EquilibriumResult};
use gnefair_core::evgame::{self, EvParams};
use gnefair_core::fairness::{self, Benchmark, FairnessMetric};
use gnefair_core::model::{GameModel, Transformation};
use gnefair_core::vi::{SolverMethod, SolverParams};
use gnefair_core::GneError as CoreError;

create_exception!(gnefair, GneError, PyValueError);

fn err(e: CoreError) -> PyErr {
    GneError::new_err(e.to_string())
}

fn solver_params(method: &str, tol: f64, max_iters: usize, seed: u64) -> PyResult<SolverParams> {
    let method = match method {
        "auto" => SolverMethod::Auto,
        "extragradient" => SolverMethod::Extragradient,
        "active_set" => SolverMethod::ActiveSet,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method `{other}` (expected auto, extragradient or active_set)"
            )))
        }
    };
    let params = SolverParams {
        method,
        tol,
        max_iters,
        seed,
        ..SolverParams::default()
    };
    params.validate().map_err(err)?;
    Ok(params)
}

fn metric(name: &str, alpha: Option<f64>, benchmark_costs: Option<Vec<f64>>) -> PyResult<FairnessMetric> {
    let m = match name.to_ascii_uppercase().as_str() {
        "MM" => FairnessMetric::Maximin,
        "SW" => FairnessMetric::SocialWelfare,
        "JI" => FairnessMetric::Jain,
        "NBS" => FairnessMetric::NashBargaining(match benchmark_costs {
            Some(c) => Benchmark::Costs(c),
            None => Benchmark::ZeroDecision,
        }),
        "AI" => FairnessMetric::Atkinson {
            alpha: alpha.ok_or_else(|| PyValueError::new_err("AI needs alpha"))?,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown metric `{other}` (expected MM, SW, NBS, AI or JI)"
            )))
        }
    };
    m.validate().map_err(err)?;
    Ok(m)
}

/// A game with scalar decisions and one shared budget.
#[pyclass(name = "Game", module = "gnefair", frozen)]
struct PyGame {
    inner: GameModel,
}

#[pymethods]
impl PyGame {
    /// One of baseline, scaling, initial_charge, transformed_cost.
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: evgame::scenario(name).map_err(err)?,
        })
    }

    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (q, a, b, z_init, z_ref, rho0, rho1, u_bar))]
    fn ev(
        q: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        z_init: Vec<f64>,
        z_ref: Vec<f64>,
        rho0: Vec<f64>,
        rho1: Vec<f64>,
        u_bar: f64,
    ) -> PyResult<Self> {
        let p = EvParams {
            q,
            leakage: a,
            efficiency: b,
            z_init,
            z_ref,
            rho0,
            rho1,
            u_bar,
        };
        let problems = p.violations();
        if !problems.is_empty() {
            let lines: Vec<String> = problems.iter().map(ToString::to_string).collect();
            return Err(GneError::new_err(lines.join("; ")));
        }
        Ok(Self {
            inner: evgame::build_ev_game(&p).map_err(err)?,
        })
    }

    /// Symmetric two-agent game with agent 1's cost scaled by `a1`.
    #[staticmethod]
    fn two_agent(a1: f64) -> PyResult<Self> {
        Ok(Self {
            inner: evgame::two_agent_game(a1).map_err(err)?,
        })
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    fn costs(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.costs(&x).map_err(err)
    }

    fn pseudo_gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.pseudo_gradient(&x).map_err(err)
    }

    /// `kind` is cnc (per-agent `a`, `b`), cuc (scalar `a`, per-agent `b`) or cfc (scalars).
    fn transform(&self, kind: &str, a: Vec<f64>, b: Vec<f64>) -> PyResult<Self> {
        let scalar = |v: &[f64], name: &str| -> PyResult<f64> {
            match v {
                [x] => Ok(*x),
                _ => Err(PyValueError::new_err(format!("{kind} takes a single `{name}`"))),
            }
        };
        let t = match kind.to_ascii_lowercase().as_str() {
            "cnc" => Transformation::Cnc { a, b },
            "cuc" => Transformation::Cuc { a: scalar(&a, "a")?, b },
            "cfc" => Transformation::Cfc {
                a: scalar(&a, "a")?,
                b: scalar(&b, "b")?,
            },
            other => return Err(PyValueError::new_err(format!("unknown transformation `{other}`"))),
        };
        Ok(Self {
            inner: self.inner.apply_transformation(&t).map_err(err)?,
        })
    }

    /// `(verdict, max_improvement)` of the unilateral-deviation check.
    #[pyo3(signature = (x, tol=1e-6))]
    fn is_gne(&self, x: Vec<f64>, tol: f64) -> PyResult<(bool, f64)> {
        let c = equilibria::is_gne(&self.inner, &x, tol).map_err(err)?;
        Ok((c.verdict, c.max_improvement))
    }

    fn __repr__(&self) -> String {
        format!("Game(num_agents={})", self.inner.num_agents())
    }
}

#[pyclass(name = "Equilibrium", module = "gnefair", frozen, get_all)]
struct PyEquilibrium {
    x: Vec<f64>,
    lambda_per_agent: Vec<f64>,
    mu: Vec<f64>,
    r_weights: Option<Vec<f64>>,
    kkt_residual: f64,
    budget_active: bool,
    is_vgne: bool,
}

impl From<EquilibriumResult> for PyEquilibrium {
    fn from(r: EquilibriumResult) -> Self {
        Self {
            x: r.x,
            lambda_per_agent: r.lambda_per_agent,
            mu: r.mu,
            r_weights: r.r_weights,
            kkt_residual: r.kkt_residual,
            budget_active: r.budget_active,
            is_vgne: r.is_vgne,
        }
    }
}

#[pymethods]
impl PyEquilibrium {
    fn __repr__(&self) -> String {
        format!("Equilibrium(x={:?}, kkt_residual={:e})", self.x, self.kkt_residual)
    }
}

#[pyclass(name = "FgneResult", module = "gnefair", frozen, get_all)]
struct PyFgneResult {
    r_star: Vec<f64>,
    x_star: Vec<f64>,
    f_star: f64,
    kkt_residual: f64,
    /// `(r, f or None, converged)` for every evaluated weight vector.
    trace: Vec<(Vec<f64>, Option<f64>, bool)>,
}

#[pyfunction]
#[pyo3(signature = (game, method="auto", tol=1e-10, max_iters=100_000, seed=0))]
fn solve_vgne(game: &PyGame, method: &str, tol: f64, max_iters: usize, seed: u64) -> PyResult<PyEquilibrium> {
    let params = solver_params(method, tol, max_iters, seed)?;
    Ok(equilibria::solve_vgne(&game.inner, &params).map_err(err)?.into())
}

#[pyfunction]
#[pyo3(signature = (game, r, method="auto", tol=1e-10, max_iters=100_000, seed=0))]
fn solve_normalized(
    game: &PyGame,
    r: Vec<f64>,
    method: &str,
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> PyResult<PyEquilibrium> {
    let params = solver_params(method, tol, max_iters, seed)?;
    Ok(equilibria::solve_normalized(&game.inner, &r, &params).map_err(err)?.into())
}

#[pyfunction]
#[pyo3(signature = (game, metric_name, alpha=None, benchmark_costs=None, grid_density=None, refine_iters=100))]
fn solve_fgne(
    py: Python<'_>,
    game: &PyGame,
    metric_name: &str,
    alpha: Option<f64>,
    benchmark_costs: Option<Vec<f64>>,
    grid_density: Option<usize>,
    refine_iters: usize,
) -> PyResult<PyFgneResult> {
    let m = metric(metric_name, alpha, benchmark_costs)?;
    let density = grid_density.unwrap_or(if game.inner.num_agents() == 2 { 101 } else { 15 });
    let game = game.inner.clone();
    let res = py
        .detach(move || fairness::solve_fgne(&game, &m, density, refine_iters, &SolverParams::default()))
        .map_err(err)?;
    Ok(PyFgneResult {
        r_star: res.r_star,
        x_star: res.x_star,
        f_star: res.f_star,
        kkt_residual: res.equilibrium.kkt_residual,
        trace: res.search_trace.into_iter().map(|t| (t.r, t.f, t.converged)).collect(),
    })
}

#[pyfunction]
#[pyo3(signature = (metric_name, costs, alpha=None, benchmark_costs=None))]
fn fairness_value(
    metric_name: &str,
    costs: Vec<f64>,
    alpha: Option<f64>,
    benchmark_costs: Option<Vec<f64>>,
) -> PyResult<f64> {
    let m = metric(metric_name, alpha, benchmark_costs.clone())?;
    fairness::fairness_value(&m, &costs, benchmark_costs.as_deref()).map_err(err)
}

#[pymodule]
fn gnefair(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GneError", m.py().get_type::<GneError>())?;
    m.add_class::<PyGame>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_class::<PyFgneResult>()?;
    m.add_function(wrap_pyfunction!(solve_vgne, m)?)?;
    m.add_function(wrap_pyfunction!(solve_normalized, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fgne, m)?)?;
    m.add_function(wrap_pyfunction!(fairness_value, m)?)?;
    Ok(())
}
