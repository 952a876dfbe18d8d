//! Command-line experiments: configuration, orchestration and CSV/SVG output.
//!
//! Each command first computes all of its tables in memory and then writes
//! them, followed by `manifest.json`, into the output directory.

pub mod config;
pub mod plots;
pub mod table;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::equilibria::{gne_set_sample, is_gne, simplex_grid, solve_vgne, EquilibriumResult};
use crate::error::GneError;
use crate::evgame::{two_agent_game, FieldError, Scenario};
use crate::fairness::{fairness_profile, solve_fgne, FairnessMetric, SearchPhase};
use crate::model::GameModel;

pub use config::{parse_config, ConfigError, ExperimentConfig, MetricKind, MetricSpec};
use table::{format_flag, format_number, indexed, numbers, Table};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_INVALID_CONFIG: u8 = 3;
pub const EXIT_METRIC_DOMAIN: u8 = 4;

/// Version of the output file layout recorded in the manifest.
pub const OUTPUT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Variational equilibrium of the configured game.
    Vgne,
    /// Fairness-optimal equilibrium for the configured metric.
    Fgne,
    /// Normalized equilibria over a weight grid with metric columns.
    Sweep,
    /// Variational equilibria under a list of cost transformations.
    Audit,
    /// The four three-agent scenarios.
    ReproduceFig3,
    /// Two agents with a_1 ∈ {1, 3} under v-GNE, MM, SW, NBS and JI.
    ReproduceFig4,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Vgne => "vgne",
            Command::Fgne => "fgne",
            Command::Sweep => "sweep",
            Command::Audit => "audit",
            Command::ReproduceFig3 => "reproduce-fig3",
            Command::ReproduceFig4 => "reproduce-fig4",
        }
    }

    fn needs_config(self) -> bool {
        !matches!(self, Command::ReproduceFig3 | Command::ReproduceFig4)
    }
}

#[derive(Debug, Parser)]
#[command(name = "gnefair", version, about = "Generalized Nash equilibria and fairness-based selection")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML experiment configuration; optional for the reproduce commands.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver seed, overriding `solver.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] GneError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_INVALID_CONFIG,
            CliError::Solver(e) => match e {
                GneError::Domain(_) | GneError::MissingBenchmark => EXIT_METRIC_DOMAIN,
                GneError::AllPointsFailed {
                    converged,
                    domain_failures,
                } if *converged > 0 && converged == domain_failures => EXIT_METRIC_DOMAIN,
                GneError::InvalidParams(_)
                | GneError::InvalidTransformation(_)
                | GneError::InvalidWeights(_)
                | GneError::InfeasibleSet { .. }
                | GneError::DimensionMismatch { .. }
                | GneError::DimensionTooLarge(_)
                | GneError::UnknownScenario(_) => EXIT_INVALID_CONFIG,
                _ => EXIT_NO_CONVERGENCE,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolveRecord {
    pub label: String,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub solves: Vec<SolveRecord>,
}

impl RunOutput {
    fn csv(&mut self, name: &str, table: &Table) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents: table.to_csv(),
        });
    }

    fn svg(&mut self, name: &str, svg: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents: svg.into_bytes(),
        });
    }

    fn solve(&mut self, label: impl Into<String>, converged: bool) {
        self.solves.push(SolveRecord {
            label: label.into(),
            converged,
        });
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    format_version: u32,
    command: &'static str,
    config_sha256: String,
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    files: Vec<&'a str>,
    solves: &'a [SolveRecord],
}

/// SHA-256 of the canonical config document, ignoring the output directory.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.output.directory = PathBuf::new();
    Sha256::digest(canonical.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_manifest(
    dir: &Path,
    command: Command,
    config: &ExperimentConfig,
    output: &RunOutput,
    error: Option<&CliError>,
) -> Result<PathBuf, CliError> {
    let manifest = Manifest {
        tool: "gnefair",
        version: env!("CARGO_PKG_VERSION"),
        format_version: OUTPUT_FORMAT_VERSION,
        command: command.name(),
        config_sha256: config_hash(config),
        seed: config.solver.seed,
        status: if error.is_some() { "failed" } else { "ok" },
        error: error.map(|e| e.to_string()),
        files: output.artifacts.iter().map(|a| a.name.as_str()).collect(),
        solves: &output.solves,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes every artifact and then the manifest into `config.output.directory`.
pub fn write_outputs(
    command: Command,
    config: &ExperimentConfig,
    output: &RunOutput,
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &config.output.directory;
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    written.push(write_manifest(dir, command, config, output, None)?);
    Ok(written)
}

fn costs(game: &GameModel, x: &[f64]) -> Result<Vec<f64>, CliError> {
    Ok(game.costs(x)?)
}

fn vgne(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let game = config.build_game()?;
    let res = solve_vgne(&game, &config.solver)?;
    out.solve("vgne", true);
    let c = costs(&game, &res.x)?;
    let mut t = Table::new(["agent", "u", "cost", "lambda", "kkt_residual"]);
    for i in 0..game.num_agents() {
        t.push(vec![
            (i + 1).to_string(),
            format_number(res.x[i]),
            format_number(c[i]),
            format_number(res.lambda_per_agent[i]),
            format_number(res.kkt_residual),
        ]);
    }
    out.csv("equilibrium.csv", &t);
    Ok(())
}

fn fgne(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let game = config.build_game()?;
    let m = game.num_agents();
    let metric = config.metric.to_metric();
    let res = solve_fgne(
        &game,
        &metric,
        config.sweep.density(m),
        config.sweep.refine_iters,
        &config.solver,
    )?;
    for (k, entry) in res.search_trace.iter().enumerate() {
        out.solve(format!("trace[{k}]"), entry.converged);
    }
    let c = costs(&game, &res.x_star)?;
    let header = ["metric", "f_star", "kkt_residual"]
        .map(String::from)
        .into_iter()
        .chain(indexed("r", m))
        .chain(indexed("u", m))
        .chain(indexed("cost", m))
        .chain(indexed("lambda", m));
    let mut t = Table::new(header);
    let row = [metric.label(), format_number(res.f_star), format_number(res.equilibrium.kkt_residual)]
        .into_iter()
        .chain(numbers(&res.r_star))
        .chain(numbers(&res.x_star))
        .chain(numbers(&c))
        .chain(numbers(&res.equilibrium.lambda_per_agent))
        .collect();
    t.push(row);
    out.csv("fgne.csv", &t);

    let header = ["step", "phase"]
        .map(String::from)
        .into_iter()
        .chain(indexed("r", m))
        .chain(["f".to_string(), "converged".to_string()]);
    let mut trace = Table::new(header);
    for (k, e) in res.search_trace.iter().enumerate() {
        let phase = match e.phase {
            SearchPhase::Grid => "grid",
            SearchPhase::Refine => "refine",
        };
        let row = [k.to_string(), phase.to_string()]
            .into_iter()
            .chain(numbers(&e.r))
            .chain([e.f.map(format_number).unwrap_or_default(), format_flag(e.converged)])
            .collect();
        trace.push(row);
    }
    out.csv("trace.csv", &trace);
    Ok(())
}

fn sweep(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let game = config.build_game()?;
    let m = game.num_agents();
    let metrics: Vec<FairnessMetric> = config.sweep.metrics.iter().map(MetricSpec::to_metric).collect();
    let grid = simplex_grid(m, config.sweep.density(m));
    let samples = gne_set_sample(&game, &grid, &config.solver);
    let mut profile = fairness_profile(&samples, &metrics, &game).into_iter();

    let header = indexed("r", m)
        .chain(indexed("u", m))
        .chain(indexed("lambda", m))
        .chain(["converged".to_string(), "strict_complementarity".to_string()])
        .chain(metrics.iter().map(FairnessMetric::label));
    let mut t = Table::new(header);
    let blank = |n: usize| std::iter::repeat_n(String::new(), n);
    let mut any = false;
    for (k, s) in samples.iter().enumerate() {
        out.solve(format!("sample[{k}]"), s.converged());
        let mut row: Vec<String> = numbers(&s.r).collect();
        match s.result() {
            Some(res) => {
                any = true;
                let p = profile.next().expect("one profile row per converged sample");
                row.extend(numbers(&res.x));
                row.extend(numbers(&res.lambda_per_agent));
                row.push(format_flag(true));
                row.push(format_flag(s.strict_complementarity));
                row.extend(p.values.iter().map(|v| v.as_ref().map(|f| format_number(*f)).unwrap_or_default()));
            }
            None => {
                row.extend(blank(2 * m));
                row.push(format_flag(false));
                row.push(format_flag(false));
                row.extend(blank(metrics.len()));
            }
        }
        t.push(row);
    }
    out.csv("gne_set.csv", &t);
    if !any {
        return Err(GneError::AllPointsFailed {
            converged: 0,
            domain_failures: 0,
        }
        .into());
    }
    Ok(())
}

fn audit(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let game = config.build_game()?;
    let m = game.num_agents();
    let base = solve_vgne(&game, &config.solver)?;
    out.solve("baseline", true);
    let header = ["transformation", "kind"]
        .map(String::from)
        .into_iter()
        .chain(indexed("u", m))
        .chain(["deviation".to_string(), "baseline_is_gne".to_string()]);
    let mut t = Table::new(header);
    let mut row = |label: String, kind: &str, res: &EquilibriumResult, still_gne: bool| {
        let deviation = res
            .x
            .iter()
            .zip(&base.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let r = [label, kind.to_string()]
            .into_iter()
            .chain(numbers(&res.x))
            .chain([format_number(deviation), format_flag(still_gne)])
            .collect();
        t.push(r);
    };
    row("baseline".into(), "identity", &base, true);
    for (k, tr) in config.audit.resolved(m).iter().enumerate() {
        let label = format!("{}_{}", tr.name().to_lowercase(), k + 1);
        let transformed = game.apply_transformation(tr)?;
        let res = solve_vgne(&transformed, &config.solver)?;
        out.solve(label.clone(), true);
        let still_gne = is_gne(&transformed, &base.x, 1e-6)?.verdict;
        row(label, tr.name(), &res, still_gne);
    }
    out.csv("audit.csv", &t);
    Ok(())
}

fn fig3(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut t = Table::new(["scenario", "agent", "u", "cost", "lambda"]);
    let mut groups = Vec::new();
    let (mut u_bars, mut cost_bars) = (Vec::new(), Vec::new());
    let mut m = 0;
    for s in Scenario::ALL {
        let game = s.game()?;
        m = game.num_agents();
        let res = solve_vgne(&game, &config.solver)?;
        out.solve(s.name(), true);
        let c = costs(&game, &res.x)?;
        for i in 0..m {
            t.push(vec![
                s.name().to_string(),
                (i + 1).to_string(),
                format_number(res.x[i]),
                format_number(c[i]),
                format_number(res.lambda_per_agent[i]),
            ]);
        }
        groups.push(s.name().to_string());
        u_bars.push(res.x);
        cost_bars.push(c);
    }
    out.csv("fig3.csv", &t);
    if config.output.emit_plots {
        let series: Vec<String> = (1..=m).map(|i| format!("agent {i}")).collect();
        out.svg("fig3_u.svg", plots::grouped_bars("v-GNE allocation", "u", &groups, &series, &u_bars));
        out.svg("fig3_cost.svg", plots::grouped_bars("Cost at the v-GNE", "cost", &groups, &series, &cost_bars));
    }
    Ok(())
}

/// Scaling factors of agent 1 in the two-agent comparison.
pub const FIG4_SCALINGS: [f64; 2] = [1.0, 3.0];

fn fig4(config: &ExperimentConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut t = Table::new(["a_1", "method", "r_1", "r_2", "u_1", "u_2", "cost_1", "cost_2"]);
    let metrics = [
        FairnessMetric::Maximin,
        FairnessMetric::SocialWelfare,
        FairnessMetric::nbs(),
        FairnessMetric::Jain,
    ];
    for a1 in FIG4_SCALINGS {
        let game = two_agent_game(a1)?;
        let mut results = Vec::new();
        let v = solve_vgne(&game, &config.solver)?;
        out.solve(format!("a_1={a1}/vGNE"), true);
        results.push(("vGNE".to_string(), vec![1.0, 1.0], v.x));
        for metric in &metrics {
            let f = solve_fgne(
                &game,
                metric,
                config.sweep.density(2),
                config.sweep.refine_iters,
                &config.solver,
            )?;
            out.solve(format!("a_1={a1}/{}", metric.label()), true);
            results.push((metric.label(), f.r_star, f.x_star));
        }
        let mut bars = Vec::new();
        for (label, r, x) in &results {
            let c = costs(&game, x)?;
            let row = [format_number(a1), label.clone()]
                .into_iter()
                .chain(numbers(r))
                .chain(numbers(x))
                .chain(numbers(&c))
                .collect();
            t.push(row);
            bars.push(x.clone());
        }
        if config.output.emit_plots {
            let groups: Vec<String> = results.iter().map(|r| r.0.clone()).collect();
            let series = vec!["agent 1".to_string(), "agent 2".to_string()];
            out.svg(
                &format!("fig4_a1_{a1}.svg"),
                plots::grouped_bars(&format!("Allocation, a_1 = {a1}"), "u", &groups, &series, &bars),
            );
        }
    }
    out.csv("fig4.csv", &t);
    Ok(())
}

/// Computes every artifact of `command` without touching the filesystem.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let errors = config.violations();
    if !errors.is_empty() {
        return Err(ConfigError::Validation(errors).into());
    }
    let mut out = RunOutput::default();
    match command {
        Command::Vgne => vgne(config, &mut out),
        Command::Fgne => fgne(config, &mut out),
        Command::Sweep => sweep(config, &mut out),
        Command::Audit => audit(config, &mut out),
        Command::ReproduceFig3 => fig3(config, &mut out),
        Command::ReproduceFig4 => fig4(config, &mut out),
    }?;
    Ok(out)
}

impl Cli {
    /// The configuration after applying `--out`, `--seed` and `--plots`.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None if !self.command.needs_config() => ExperimentConfig::for_scenario(Scenario::Baseline),
            None => {
                return Err(ConfigError::Validation(vec![FieldError {
                    path: "--config".into(),
                    message: format!("required for `{}`", self.command.name()),
                }])
                .into())
            }
        };
        if let Some(out) = &self.out {
            config.output.directory = out.clone();
        }
        if let Some(seed) = self.seed {
            config.solver.seed = seed;
        }
        config.output.emit_plots |= self.plots;
        Ok(config)
    }

    pub fn execute(&self) -> Result<Vec<PathBuf>, CliError> {
        let config = self.resolve_config()?;
        match run(self.command, &config) {
            Ok(output) => write_outputs(self.command, &config, &output),
            Err(e @ CliError::Solver(_)) => {
                if fs::create_dir_all(&config.output.directory).is_ok() {
                    let _ = write_manifest(&config.output.directory, self.command, &config, &RunOutput::default(), Some(&e));
                }
                Err(e)
            }
            Err(e) => Err(e),
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
        }
    };
    match cli.execute() {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
