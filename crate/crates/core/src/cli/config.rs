//! Experiment configuration documents.
//!
//! The document is TOML. Exactly one of `scenario` (a named case-study game)
//! or an inline `[game]` parameter block selects the game; every other block
//! is optional and falls back to its defaults.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{GneError, Result};
use crate::evgame::{build_ev_game, EvParams, FieldError, Scenario};
use crate::fairness::{Benchmark, FairnessMetric};
use crate::model::{GameModel, Transformation};
use crate::vi::SolverParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    MM,
    SW,
    NBS,
    AI,
    JI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub kind: MetricKind,
    /// Inequality aversion, AI only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Disagreement decision for NBS; no charging when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Vec<f64>>,
    /// Explicit disagreement costs for NBS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_costs: Option<Vec<f64>>,
}

impl MetricSpec {
    pub fn of(kind: MetricKind) -> Self {
        Self {
            kind,
            alpha: None,
            benchmark: None,
            benchmark_costs: None,
        }
    }

    pub fn to_metric(&self) -> FairnessMetric {
        match self.kind {
            MetricKind::MM => FairnessMetric::Maximin,
            MetricKind::SW => FairnessMetric::SocialWelfare,
            MetricKind::JI => FairnessMetric::Jain,
            MetricKind::AI => FairnessMetric::Atkinson {
                alpha: self.alpha.unwrap_or(f64::NAN),
            },
            MetricKind::NBS => FairnessMetric::NashBargaining(
                match (&self.benchmark, &self.benchmark_costs) {
                    (Some(x), _) => Benchmark::Decision(x.clone()),
                    (None, Some(c)) => Benchmark::Costs(c.clone()),
                    (None, None) => Benchmark::ZeroDecision,
                },
            ),
        }
    }

    fn violations(&self, path: &str, m: usize, errors: &mut Vec<FieldError>) {
        let mut push = |field: &str, message: String| {
            errors.push(FieldError {
                path: format!("{path}.{field}"),
                message,
            })
        };
        match (self.kind, self.alpha) {
            (MetricKind::AI, None) => push("alpha", "required for AI".into()),
            (MetricKind::AI, Some(a)) if !(a > 0.0) || a == 1.0 || !a.is_finite() => {
                push("alpha", format!("must be positive and different from 1 (got {a})"))
            }
            (MetricKind::AI, _) | (_, None) => {}
            (_, Some(_)) => push("alpha", "only used by AI".into()),
        }
        let nbs = self.kind == MetricKind::NBS;
        for (field, value) in [("benchmark", &self.benchmark), ("benchmark_costs", &self.benchmark_costs)] {
            if let Some(v) = value {
                if !nbs {
                    push(field, "only used by NBS".into());
                } else if v.len() != m {
                    push(field, format!("expected {m} entries, got {}", v.len()));
                }
            }
        }
        if self.benchmark.is_some() && self.benchmark_costs.is_some() {
            errors.push(FieldError {
                path: format!("{path}.benchmark, {path}.benchmark_costs"),
                message: "at most one of the two may be given".into(),
            });
        }
    }
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self::of(MetricKind::MM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Grid points per simplex edge; 101 for two agents and 15 otherwise when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_density: Option<usize>,
    pub refine_iters: usize,
    /// Metric columns of the sweep table.
    pub metrics: Vec<MetricSpec>,
}

impl SweepSpec {
    pub fn density(&self, m: usize) -> usize {
        self.grid_density.unwrap_or(if m == 2 { 101 } else { 15 })
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid_density: None,
            refine_iters: 100,
            metrics: [MetricKind::MM, MetricKind::SW, MetricKind::NBS, MetricKind::JI]
                .into_iter()
                .map(MetricSpec::of)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub emit_plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            emit_plots: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    /// Transformations to compare against the untransformed game; a CUC, a
    /// CNC and a CFC example when empty.
    pub transformations: Vec<Transformation>,
}

impl AuditSpec {
    pub fn resolved(&self, m: usize) -> Vec<Transformation> {
        if !self.transformations.is_empty() {
            return self.transformations.clone();
        }
        vec![
            Transformation::Cuc {
                a: 2.0,
                b: (1..=m).map(|i| 0.1 * i as f64).collect(),
            },
            Transformation::Cnc {
                a: (1..=m).map(|i| i as f64).collect(),
                b: vec![0.0; m],
            },
            Transformation::Cfc { a: 2.5, b: 1.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<EvParams>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub audit: AuditSpec,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", join_lines(.0))]
    Validation(Vec<FieldError>),
}

fn join_lines(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario: Some(scenario.name().into()),
            game: None,
            solver: SolverParams::default(),
            metric: MetricSpec::default(),
            sweep: SweepSpec::default(),
            output: OutputSpec::default(),
            audit: AuditSpec::default(),
        }
    }

    pub fn build_game(&self) -> Result<GameModel> {
        match (&self.scenario, &self.game) {
            (Some(name), _) => name.parse::<Scenario>()?.game(),
            (None, Some(p)) => build_ev_game(p),
            (None, None) => Err(GneError::InvalidParams("no game selected".into())),
        }
    }

    fn num_agents(&self) -> Option<usize> {
        match (&self.scenario, &self.game) {
            (Some(name), None) => name
                .parse::<Scenario>()
                .ok()
                .and_then(|s| s.game().ok())
                .map(|g| g.num_agents()),
            (None, Some(p)) => Some(p.num_agents()),
            _ => None,
        }
    }

    /// Every schema violation, each addressed by its field path.
    pub fn violations(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let mut push = |path: &str, message: String| {
            errors.push(FieldError {
                path: path.into(),
                message,
            })
        };
        match (&self.scenario, &self.game) {
            (Some(_), Some(_)) => push(
                "scenario, game",
                "exactly one of `scenario` and `game` may be given".into(),
            ),
            (None, None) => push("scenario, game", "one of `scenario` and `game` is required".into()),
            (Some(name), None) => {
                if name.parse::<Scenario>().is_err() {
                    let known: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                    push(
                        "scenario",
                        format!("unknown scenario `{name}` (expected one of {})", known.join(", ")),
                    );
                }
            }
            (None, Some(_)) => {}
        }
        if let Some(p) = &self.game {
            errors.extend(p.violations().into_iter().map(|e| FieldError {
                path: format!("game.{}", e.path),
                message: e.message,
            }));
        }

        let s = &self.solver;
        let mut push = |path: &str, message: String| {
            errors.push(FieldError {
                path: path.into(),
                message,
            })
        };
        if !(s.tol > 0.0) {
            push("solver.tol", format!("must be positive (got {})", s.tol));
        }
        if s.max_iters == 0 {
            push("solver.max_iters", "must be at least 1".into());
        }
        if !(s.initial_step > 0.0) {
            push("solver.initial_step", format!("must be positive (got {})", s.initial_step));
        }
        if !(s.step_backtrack > 0.0 && s.step_backtrack < 1.0) {
            push(
                "solver.step_backtrack",
                format!("must lie in (0, 1) (got {})", s.step_backtrack),
            );
        }
        if let Some(d) = self.sweep.grid_density {
            if d < 3 {
                push("sweep.grid_density", format!("must be at least 3 (got {d})"));
            }
        }
        if self.output.directory.as_os_str().is_empty() {
            push("output.directory", "must not be empty".into());
        }

        let Some(m) = self.num_agents() else {
            return errors;
        };
        self.metric.violations("metric", m, &mut errors);
        for (k, spec) in self.sweep.metrics.iter().enumerate() {
            spec.violations(&format!("sweep.metrics[{k}]"), m, &mut errors);
        }
        for (k, t) in self.audit.transformations.iter().enumerate() {
            if let Err(e) = t.per_agent(m) {
                errors.push(FieldError {
                    path: format!("audit.transformations[{k}]"),
                    message: e.to_string(),
                });
            }
        }
        errors
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}

/// Parses and validates a configuration document, reporting all violations.
pub fn parse_config(document: &str) -> std::result::Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig =
        toml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let errors = config.violations();
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Validation(errors))
    }
}
