//! The `crowdtopo` command line.
//!
//! Summaries go to standard output, records to the file or directory given
//! by `--out`. Exit codes: 0 success, 1 usage error, 2 input error,
//! 3 degenerate input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::chain::{solve_delta, solve_fk, ChainError, ChainSolution};
use crate::experiments::{
    delta_points_csv, is_step_monotone, run_delta_sweep, run_random_ensemble, run_threshold_sweep,
    run_walk_vs_teleport, synthetic_power_map, threshold_points_csv, walk_points_csv,
    EnsembleConfig, ExperimentError, WalkSweepConfig,
};
use crate::mobility::{
    mean_reports, mean_wall_time, run_trajectories, teleport_stream, trajectories_to_csv,
    MobilityError, RandomWalkStream, StopCondition, WalkConfig, WalkLattice, DEFAULT_MAX_REPORTS,
};
use crate::scenario::{
    generate_random_scenario, load_scenario, PowerMap, Scenario, ScenarioError,
};
use crate::tessellation::{estimate_tessellation, canonical_order, TessellationError, TileMeasure, DEFAULT_SAMPLES};

/// Below this many samples the tile table carries a precision warning.
const LOW_SAMPLE_WARNING: u64 = 10_000;

#[derive(Debug, Parser)]
#[command(name = "crowdtopo", version, about = "Crowdsourced neighbour-topology discovery: tessellation, knowledge-chain solves and simulations")]
pub struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the tile measure of a scenario by Monte Carlo.
    Tessellate(TessellateArgs),
    /// Solve the knowledge chain of a tile measure.
    Solve(SolveArgs),
    /// Simulate report trajectories.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Run a batch study.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Args)]
pub struct TessellateArgs {
    /// Scenario JSON file, or a power-map file when --threshold is given.
    #[arg(required_unless_present = "random", conflicts_with = "random")]
    pub scenario: Option<PathBuf>,
    /// Random disc scenario: neighbour count, radius and geometry seed.
    #[arg(long, num_args = 3, value_names = ["N", "RADIUS", "SEED"])]
    pub random: Option<Vec<String>>,
    /// Detection threshold (dBm) applied to a power-map input.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: u64,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the measure JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["delta", "fk"]))]
pub struct SolveArgs {
    /// Tile measure JSON file.
    pub measure: PathBuf,
    /// Stop at δ-knowledge.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Stop at full knowledge.
    #[arg(long)]
    pub fk: bool,
    /// Tail probability for the report bound S(1 − ε); repeatable.
    #[arg(long, default_values_t = [0.1])]
    pub epsilon: Vec<f64>,
    /// Where to write the per-state JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StopArgs {
    /// Knowledge fraction to stop at.
    #[arg(long, default_value_t = 0.9, conflicts_with = "fk")]
    pub delta: f64,
    /// Stop at full knowledge instead of δ-knowledge.
    #[arg(long)]
    pub fk: bool,
}

impl StopArgs {
    fn condition(&self) -> StopCondition {
        if self.fk {
            StopCondition::FullKnowledge
        } else {
            StopCondition::Delta(self.delta)
        }
    }
}

#[derive(Debug, Args)]
pub struct WalkScenarioArgs {
    /// Scenario JSON file; overrides the random disc scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Coverage radius of the random disc scenario, metres.
    #[arg(long, default_value_t = 50.0)]
    pub radius: f64,
    /// Neighbours in the random disc scenario.
    #[arg(long, default_value_t = 7)]
    pub neighbours: usize,
    /// Geometry seed of the random disc scenario.
    #[arg(long, default_value_t = 7)]
    pub scenario_seed: u64,
    /// Lattice spacing, metres.
    #[arg(long, default_value_t = 2.5)]
    pub grid_step: f64,
    /// Seconds between walker moves.
    #[arg(long, default_value_t = 5.0)]
    pub step_period: f64,
}

impl WalkScenarioArgs {
    fn scenario(&self) -> Result<Scenario, CliError> {
        match &self.scenario {
            Some(path) => Ok(load_scenario(path)?),
            None => {
                if !(self.radius.is_finite() && self.radius > 0.0) {
                    return Err(CliError::Input(format!("--radius must be positive, got {}", self.radius)));
                }
                if self.neighbours == 0 || self.neighbours > crate::scenario::DEFAULT_NEIGHBOUR_CAP {
                    return Err(CliError::Input(format!("--neighbours must be in 1..=20, got {}", self.neighbours)));
                }
                Ok(generate_random_scenario(self.neighbours, self.radius, self.scenario_seed))
            }
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Users teleport: reports are independent draws from the tile measure.
    Teleport {
        /// Tile measure JSON file.
        #[arg(long)]
        measure: PathBuf,
        /// Number of trajectories.
        #[arg(long, default_value_t = 100_000)]
        trajectories: u64,
        #[command(flatten)]
        stop: StopArgs,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report cap per trajectory.
        #[arg(long, default_value_t = DEFAULT_MAX_REPORTS)]
        max_reports: u64,
        /// Where to write per-trajectory CSV records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A single user random-walks on a lattice inside the serving area.
    Walk {
        #[command(flatten)]
        geometry: WalkScenarioArgs,
        /// Seconds between reports.
        #[arg(long, default_value_t = 360.0)]
        inter_report: f64,
        /// Number of trajectories.
        #[arg(long, default_value_t = 200)]
        trajectories: u64,
        #[command(flatten)]
        stop: StopArgs,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report cap per trajectory.
        #[arg(long, default_value_t = DEFAULT_MAX_REPORTS)]
        max_reports: u64,
        /// Where to write per-trajectory CSV records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Tessellate and solve many random disc scenarios.
    Ensemble {
        /// Number of random configurations.
        #[arg(long, default_value_t = 350)]
        configs: usize,
        /// Neighbours per configuration.
        #[arg(long, default_value_t = 7)]
        neighbours: usize,
        #[arg(long, default_value_t = 0.9)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Coverage radius.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Monte Carlo samples per tessellation.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        /// Master seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for `ensemble-seed<SEED>.csv` and `.summary.json`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Walk against teleport predictions over several inter-report periods.
    WalkSweep {
        #[command(flatten)]
        geometry: WalkScenarioArgs,
        /// Inter-report periods, seconds.
        #[arg(long, value_delimiter = ',', default_values_t = [60.0, 180.0, 360.0, 900.0, 1800.0, 3600.0, 7200.0])]
        periods: Vec<f64>,
        #[arg(long, default_value_t = 0.9)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Trajectories per period.
        #[arg(long, default_value_t = 200)]
        trajectories: u64,
        /// Report cap per trajectory.
        #[arg(long, default_value_t = 100_000)]
        max_reports: u64,
        /// Master seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for `walk-sweep-seed<SEED>.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Expected δ-knowledge time across δ for one measure.
    DeltaSweep {
        /// Tile measure JSON file.
        #[arg(long)]
        measure: PathBuf,
        /// δ values.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        deltas: Vec<f64>,
        /// Output directory for `delta-sweep.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Full-knowledge time across detection thresholds of a power map.
    ThresholdSweep {
        /// Power-map file; the built-in synthetic 4-station map when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Thresholds, dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_values_t = [-60.0, -65.0, -70.0, -75.0, -80.0, -85.0, -90.0, -95.0, -100.0])]
        thresholds: Vec<f64>,
        /// Monte Carlo samples per threshold.
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// Sampling seed, shared by every threshold.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for `threshold-sweep-seed<SEED>.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TessellationError> for CliError {
    fn from(e: TessellationError) -> Self {
        match e {
            TessellationError::Degenerate(_) => CliError::Degenerate(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MobilityError> for CliError {
    fn from(e: MobilityError) -> Self {
        match e {
            MobilityError::Tessellation(t) => t.into(),
            MobilityError::EmptyLattice(_) => CliError::Degenerate(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Scenario(s) => s.into(),
            ExperimentError::Tessellation(t) => t.into(),
            ExperimentError::Chain(c) => c.into(),
            ExperimentError::Mobility(m) => m.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return 2;
        }
    };
    let mut out = String::new();
    let mut warn = String::new();
    let result = pool.install(|| dispatch(&cli.command, &mut out, &mut warn));
    let _ = stdout.write_all(out.as_bytes());
    let _ = stderr.write_all(warn.as_bytes());
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, out: &mut String, warn: &mut String) -> Result<(), CliError> {
    match cmd {
        Command::Tessellate(a) => tessellate(a, out, warn),
        Command::Solve(a) => solve(a, out),
        Command::Simulate(s) => simulate(s, out),
        Command::Experiment(e) => experiment(e, out),
    }
}

fn parse_random(spec: &[String]) -> Result<Scenario, CliError> {
    let bad = |what: &str, v: &str| CliError::Input(format!("--random {what}: cannot parse `{v}`"));
    let n: usize = spec[0].parse().map_err(|_| bad("N", &spec[0]))?;
    let radius: f64 = spec[1].parse().map_err(|_| bad("RADIUS", &spec[1]))?;
    let seed: u64 = spec[2].parse().map_err(|_| bad("SEED", &spec[2]))?;
    if n == 0 || n > crate::scenario::DEFAULT_NEIGHBOUR_CAP {
        return Err(CliError::Input(format!("--random N must be in 1..=20, got {n}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(CliError::Input(format!("--random RADIUS must be positive, got {radius}")));
    }
    Ok(generate_random_scenario(n, radius, seed))
}

fn tessellate(a: &TessellateArgs, out: &mut String, warn: &mut String) -> Result<(), CliError> {
    let scenario = match (&a.random, &a.scenario) {
        (Some(spec), _) => parse_random(spec)?,
        (None, Some(path)) => match a.threshold {
            Some(t) => PowerMap::load(path)?.to_scenario(t)?,
            None => load_scenario(path)?,
        },
        (None, None) => unreachable!("clap requires a scenario source"),
    };
    let measure = estimate_tessellation(&scenario, a.samples, a.seed)?;
    let se = measure.std_err().unwrap_or(&[]);
    let _ = writeln!(out, "neighbours {}  samples {}", measure.n_neighbours(), measure.sample_count());
    let _ = writeln!(out, "{:<24} {:>12} {:>12}", "tile", "mass", "std_err");
    for tile in canonical_order(measure.n_neighbours()) {
        let _ = writeln!(
            out,
            "{:<24} {:>12.6} {:>12.6}",
            tile.to_string(),
            measure.mass(tile),
            se.get(tile.index()).copied().unwrap_or(0.0)
        );
    }
    if a.samples < LOW_SAMPLE_WARNING {
        let _ = writeln!(
            warn,
            "warning: only {} samples; tile masses carry large standard errors",
            a.samples
        );
    }
    if let Some(path) = &a.out {
        measure.save(path)?;
    }
    Ok(())
}

fn describe_solution(sol: &ChainSolution, epsilons: &[f64], out: &mut String) {
    let fmt = |v: Option<f64>, none: &str| v.map_or_else(|| none.to_string(), |x| x.to_string());
    let _ = writeln!(out, "start_state {}", sol.start_state());
    let _ = writeln!(out, "expected_steps {}", fmt(sol.expected().value(), "unreachable"));
    let _ = writeln!(out, "variance {}", fmt(sol.variance().value(), "unreachable"));
    let _ = writeln!(out, "second_largest_eigenvalue {}", sol.second_largest());
    for &eps in epsilons {
        let _ = writeln!(out, "report_bound[{eps}] {}", fmt(sol.report_bound(eps).value(), "unbounded"));
    }
}

fn solve(a: &SolveArgs, out: &mut String) -> Result<(), CliError> {
    let measure = TileMeasure::load(&a.measure)?;
    for &eps in &a.epsilon {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ChainError::InvalidEpsilon(eps).into());
        }
    }
    let sol = match a.delta {
        Some(d) if !a.fk => solve_delta(&measure, d)?,
        _ => solve_fk(&measure),
    };
    describe_solution(&sol, &a.epsilon, out);
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&sol.report(&a.epsilon)).expect("report serialisation is infallible");
        write_file(path, &json)?;
    }
    Ok(())
}

fn summarise_trajectories(records: &[crate::mobility::TrajectoryRecord], out: &mut String) {
    let timeouts = records.iter().filter(|r| r.outcome.is_timeout()).count();
    let _ = writeln!(out, "trajectories {}  timeouts {}", records.len(), timeouts);
    if let Some((m, se)) = mean_reports(records) {
        let _ = writeln!(out, "mean_reports {m} ± {se}");
    }
    if let Some((m, se)) = mean_wall_time(records) {
        let _ = writeln!(out, "mean_wall_time_s {m} ± {se}");
        let _ = writeln!(out, "mean_wall_time_h {} ± {}", m / 3600.0, se / 3600.0);
    }
}

fn simulate(cmd: &SimulateCommand, out: &mut String) -> Result<(), CliError> {
    match cmd {
        SimulateCommand::Teleport { measure, trajectories, stop, seed, max_reports, out: path } => {
            let measure = TileMeasure::load(measure)?;
            let absorbing = stop.condition().absorbing_set(&measure)?;
            let records = run_trajectories(*trajectories, *seed, &absorbing, *max_reports, |s| {
                teleport_stream(&measure, s)
            });
            summarise_trajectories(&records, out);
            let predicted = crate::chain::expected_absorption_steps(&measure, &absorbing)?;
            let _ = writeln!(
                out,
                "chain_expected_steps {}",
                predicted.expected().value().map_or_else(|| "unreachable".into(), |v| v.to_string())
            );
            if let Some(p) = path {
                write_file(p, &trajectories_to_csv(&records))?;
            }
        }
        SimulateCommand::Walk { geometry, inter_report, trajectories, stop, seed, max_reports, out: path } => {
            let scenario = geometry.scenario()?;
            let cfg = WalkConfig {
                grid_step: geometry.grid_step,
                step_period: geometry.step_period,
                inter_report_time: *inter_report,
            };
            cfg.validate()?;
            let lattice = WalkLattice::new(&scenario, cfg.grid_step)?;
            let stationary = lattice.stationary_measure(scenario.n_neighbours())?;
            let absorbing = stop.condition().absorbing_set(&stationary)?;
            let records = run_trajectories(*trajectories, *seed, &absorbing, *max_reports, |s| {
                RandomWalkStream::new(&lattice, cfg, s).expect("configuration validated")
            });
            let _ = writeln!(out, "lattice_points {}", lattice.len());
            summarise_trajectories(&records, out);
            if let Some(p) = path {
                write_file(p, &trajectories_to_csv(&records))?;
            }
        }
    }
    Ok(())
}

fn experiment(cmd: &ExperimentCommand, out: &mut String) -> Result<(), CliError> {
    match cmd {
        ExperimentCommand::Ensemble { configs, neighbours, delta, epsilon, radius, samples, seed, out: dir } => {
            let cfg = EnsembleConfig {
                n_configs: *configs,
                n_neighbours: *neighbours,
                delta: *delta,
                epsilon: *epsilon,
                radius: *radius,
                samples: *samples,
                seed: *seed,
            };
            let report = run_random_ensemble(&cfg)?;
            ensure_dir(dir)?;
            write_file(&dir.join(format!("ensemble-seed{seed}.csv")), &report.records_csv())?;
            let summary = report.summary_json();
            write_file(&dir.join(format!("ensemble-seed{seed}.summary.json")), &summary)?;
            out.push_str(&summary);
            out.push('\n');
        }
        ExperimentCommand::WalkSweep { geometry, periods, delta, epsilon, trajectories, max_reports, seed, out: dir } => {
            let scenario = geometry.scenario()?;
            let cfg = WalkSweepConfig {
                walk: WalkConfig {
                    grid_step: geometry.grid_step,
                    step_period: geometry.step_period,
                    ..WalkConfig::default()
                },
                delta: *delta,
                epsilon: *epsilon,
                n_trajectories: *trajectories,
                max_reports: *max_reports,
                seed: *seed,
            };
            let points = run_walk_vs_teleport(&scenario, periods, &cfg)?;
            let csv = walk_points_csv(&points);
            ensure_dir(dir)?;
            write_file(&dir.join(format!("walk-sweep-seed{seed}.csv")), &csv)?;
            out.push_str(&csv);
        }
        ExperimentCommand::DeltaSweep { measure, deltas, out: dir } => {
            let measure = TileMeasure::load(measure)?;
            let points = run_delta_sweep(&measure, deltas)?;
            let csv = delta_points_csv(&points);
            ensure_dir(dir)?;
            write_file(&dir.join("delta-sweep.csv"), &csv)?;
            out.push_str(&csv);
            let _ = writeln!(out, "step_monotone {}", is_step_monotone(&points));
        }
        ExperimentCommand::ThresholdSweep { map, thresholds, samples, seed, out: dir } => {
            let map = match map {
                Some(p) => PowerMap::load(p)?,
                None => synthetic_power_map(),
            };
            let points = run_threshold_sweep(&map, thresholds, *samples, *seed)?;
            let csv = threshold_points_csv(&points);
            ensure_dir(dir)?;
            write_file(&dir.join(format!("threshold-sweep-seed{seed}.csv")), &csv)?;
            out.push_str(&csv);
        }
    }
    Ok(())
}
