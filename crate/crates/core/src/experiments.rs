//! Batch studies: random-scenario ensembles, walk-versus-teleport curves,
//! δ sweeps and detection-threshold sweeps, with the summary statistics
//! needed to plot them.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chain::{
    report_bound, solve_delta, solve_fk, tail_bound, AbsorbingSet, ChainError, Expectation,
    ReportBound,
};
use crate::mobility::{
    mean_and_se, mean_reports, mean_wall_time, run_trajectories, MobilityError, RandomWalkStream,
    WalkConfig, WalkLattice,
};
use crate::scenario::{generate_random_scenario, Point2D, PowerMap, Scenario, ScenarioError, StationGrid};
use crate::seed::derive_seed;
use crate::tessellation::{estimate_tessellation, TessellationError, TileMeasure};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Tessellation(#[from] TessellationError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error("invalid experiment parameters: {0}")]
    InvalidParameters(String),
}

/// Distribution summary of one per-record quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
    /// Lower edge of the most populated unit-width bin (lowest on ties).
    pub mode_bin: f64,
    /// `(bin lower edge, relative frequency)` over unit-width bins.
    pub pmf: Vec<(f64, f64)>,
    /// `(bin upper edge, cumulative frequency)`.
    pub cdf: Vec<(f64, f64)>,
}

/// Nearest-rank percentile of sorted values, `q` in `(0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let lo = sorted[0].floor();
        let hi = sorted[n - 1].floor();
        let bins = (hi - lo) as usize + 1;
        let mut counts = vec![0usize; bins];
        for v in &sorted {
            counts[(v.floor() - lo) as usize] += 1;
        }
        let mode = counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
            .0;
        let pmf: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (lo + i as f64, c as f64 / n as f64))
            .collect();
        let mut acc = 0usize;
        let cdf = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                acc += c;
                (lo + i as f64 + 1.0, acc as f64 / n as f64)
            })
            .collect();
        Some(Summary {
            count: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            min: sorted[0],
            max: sorted[n - 1],
            p05: percentile(&sorted, 0.05),
            p50: percentile(&sorted, 0.5),
            p95: percentile(&sorted, 0.95),
            mode_bin: lo + mode as f64,
            pmf,
            cdf,
        })
    }
}

/// Parameters of a random-scenario ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_configs: usize,
    pub n_neighbours: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub radius: f64,
    pub samples: u64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_configs: 350,
            n_neighbours: 7,
            delta: 0.9,
            epsilon: 0.1,
            radius: 1.0,
            samples: crate::tessellation::DEFAULT_SAMPLES,
            seed: 7,
        }
    }
}

/// One configuration of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRecord {
    pub index: usize,
    pub scenario_seed: u64,
    /// `E[τ_δ]` in reports.
    pub expected: Expectation,
    /// Spectral radius of the transient block of the δ-aggregated chain.
    pub second_largest: f64,
    /// `S(1 − ε)` for that chain.
    pub bound: ReportBound,
    /// `λ̃^⌈S⌉`, which must not exceed `ε`.
    pub tail_at_bound: Option<f64>,
}

impl EnsembleRecord {
    pub fn is_flagged(&self) -> bool {
        self.expected.is_unreachable() || self.bound.value().is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub configs: usize,
    pub excluded: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub expected_steps: Option<Summary>,
    pub report_bound: Option<Summary>,
}

impl EnsembleSummary {
    pub fn from_records(records: &[EnsembleRecord], delta: f64, epsilon: f64) -> Self {
        let kept: Vec<&EnsembleRecord> = records.iter().filter(|r| !r.is_flagged()).collect();
        let e: Vec<f64> = kept.iter().filter_map(|r| r.expected.value()).collect();
        let s: Vec<f64> = kept.iter().filter_map(|r| r.bound.value()).collect();
        EnsembleSummary {
            configs: records.len(),
            excluded: records.len() - kept.len(),
            delta,
            epsilon,
            expected_steps: Summary::from_values(&e),
            report_bound: Summary::from_values(&s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub config: EnsembleConfig,
    pub records: Vec<EnsembleRecord>,
    pub summary: EnsembleSummary,
}

fn fmt_exp(e: Expectation) -> String {
    e.value().map_or_else(|| "unreachable".to_string(), |v| v.to_string())
}

fn fmt_bound(b: ReportBound) -> String {
    b.value().map_or_else(|| "unbounded".to_string(), |v| v.to_string())
}

impl EnsembleReport {
    pub fn records_csv(&self) -> String {
        let mut out = String::from("index,scenario_seed,expected_steps,second_largest,report_bound,tail_at_bound\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.index,
                r.scenario_seed,
                fmt_exp(r.expected),
                r.second_largest,
                fmt_bound(r.bound),
                r.tail_at_bound.map_or_else(String::new, |v| v.to_string())
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialisation is infallible")
    }
}

/// Tessellates and solves `n_configs` random scenarios.
///
/// Scenario `i` uses seeds derived from `(seed, 2i)` for geometry and
/// `(seed, 2i + 1)` for sampling, so records are reproducible one by one.
pub fn run_random_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleReport, ExperimentError> {
    if cfg.n_configs == 0 || cfg.n_neighbours == 0 {
        return Err(ExperimentError::InvalidParameters(
            "need at least one configuration and one neighbour".into(),
        ));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(ChainError::InvalidEpsilon(cfg.epsilon).into());
    }
    let records = (0..cfg.n_configs)
        .into_par_iter()
        .map(|i| -> Result<EnsembleRecord, ExperimentError> {
            let scenario_seed = derive_seed(cfg.seed, 2 * i as u64);
            let scenario = generate_random_scenario(cfg.n_neighbours, cfg.radius, scenario_seed);
            let measure = estimate_tessellation(&scenario, cfg.samples, derive_seed(cfg.seed, 2 * i as u64 + 1))?;
            let sol = solve_delta(&measure, cfg.delta)?;
            let bound = report_bound(sol.second_largest(), cfg.epsilon);
            Ok(EnsembleRecord {
                index: i,
                scenario_seed,
                expected: sol.expected(),
                second_largest: sol.second_largest(),
                bound,
                tail_at_bound: bound
                    .value()
                    .map(|s| tail_bound(sol.second_largest(), s.ceil() as u32)),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = EnsembleSummary::from_records(&records, cfg.delta, cfg.epsilon);
    Ok(EnsembleReport {
        config: *cfg,
        records,
        summary,
    })
}

/// Parameters of a walk-versus-teleport sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkSweepConfig {
    pub walk: WalkConfig,
    pub delta: f64,
    pub epsilon: f64,
    pub n_trajectories: u64,
    pub max_reports: u64,
    pub seed: u64,
}

impl Default for WalkSweepConfig {
    fn default() -> Self {
        WalkSweepConfig {
            walk: WalkConfig::default(),
            delta: 0.9,
            epsilon: 0.1,
            n_trajectories: 200,
            max_reports: 100_000,
            seed: 7,
        }
    }
}

/// One inter-report period of a walk sweep. Times are seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkPoint {
    pub inter_report_time: f64,
    pub walk_mean_reports: f64,
    pub walk_se_reports: f64,
    pub walk_mean_time: f64,
    pub walk_se_time: f64,
    /// `E[τ_δ]` under teleport mobility with the walk's stationary law.
    pub teleport_reports: f64,
    pub teleport_time: f64,
    /// `S(1 − ε) · inter_report_time`, when finite.
    pub bound_time: Option<f64>,
    pub timeouts: usize,
}

/// Empirical δ-knowledge times of a lattice random walk against the
/// teleport prediction built from the walk's stationary report law.
///
/// Both the walk's stopping rule and the prediction use that law for the
/// coverage fractions, so the comparison isolates report correlation.
pub fn run_walk_vs_teleport(
    scenario: &Scenario,
    inter_report_times: &[f64],
    cfg: &WalkSweepConfig,
) -> Result<Vec<WalkPoint>, ExperimentError> {
    if inter_report_times.is_empty() {
        return Err(ExperimentError::InvalidParameters("no inter-report periods".into()));
    }
    let lattice = WalkLattice::new(scenario, cfg.walk.grid_step)?;
    let stationary = lattice.stationary_measure(scenario.n_neighbours())?;
    let absorbing = AbsorbingSet::delta(&stationary, cfg.delta)?;
    let sol = crate::chain::expected_absorption_steps(&stationary, &absorbing)?;
    let teleport_reports = sol.expected().value().ok_or_else(|| {
        ExperimentError::InvalidParameters("δ-knowledge is unreachable for this scenario".into())
    })?;
    let bound = sol.report_bound(cfg.epsilon).value();

    inter_report_times
        .iter()
        .enumerate()
        .map(|(i, &period)| {
            let walk = cfg.walk.with_inter_report_time(period);
            walk.validate()?;
            let records = run_trajectories(
                cfg.n_trajectories,
                derive_seed(cfg.seed, i as u64),
                &absorbing,
                cfg.max_reports,
                |s| RandomWalkStream::new(&lattice, walk, s).expect("validated above"),
            );
            let timeouts = records.iter().filter(|r| r.outcome.is_timeout()).count();
            let (mr, ser) = mean_reports(&records).unwrap_or((f64::NAN, f64::NAN));
            let (mt, set) = mean_wall_time(&records).unwrap_or((f64::NAN, f64::NAN));
            Ok(WalkPoint {
                inter_report_time: period,
                walk_mean_reports: mr,
                walk_se_reports: ser,
                walk_mean_time: mt,
                walk_se_time: set,
                teleport_reports,
                teleport_time: teleport_reports * period,
                bound_time: bound.map(|s| s * period),
                timeouts,
            })
        })
        .collect()
}

pub fn walk_points_csv(points: &[WalkPoint]) -> String {
    let mut out = String::from(
        "inter_report_time,walk_mean_reports,walk_se_reports,walk_mean_time,walk_se_time,teleport_reports,teleport_time,bound_time,timeouts\n",
    );
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.inter_report_time,
            p.walk_mean_reports,
            p.walk_se_reports,
            p.walk_mean_time,
            p.walk_se_time,
            p.teleport_reports,
            p.teleport_time,
            p.bound_time.map_or_else(|| "unbounded".to_string(), |v| v.to_string()),
            p.timeouts
        );
    }
    out
}

/// `E[τ_δ]` at one δ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaPoint {
    pub delta: f64,
    pub expected: Expectation,
    /// Size of the absorbing set; the sets are nested in δ, so equal sizes mean equal sets.
    pub absorbing_states: usize,
}

/// Solves the δ-problem for each δ, sorted ascending.
pub fn run_delta_sweep(measure: &TileMeasure, deltas: &[f64]) -> Result<Vec<DeltaPoint>, ExperimentError> {
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|delta| {
            let sol = solve_delta(measure, delta)?;
            Ok(DeltaPoint {
                delta,
                expected: sol.expected(),
                absorbing_states: sol.absorbing().len(),
            })
        })
        .collect()
}

/// True when `E[τ_δ]` never decreases along the sweep and only changes
/// where the absorbing set does. Unreachable counts as `+∞`.
pub fn is_step_monotone(points: &[DeltaPoint]) -> bool {
    let val = |p: &DeltaPoint| p.expected.value().unwrap_or(f64::INFINITY);
    points.windows(2).all(|w| {
        let (a, b) = (val(&w[0]), val(&w[1]));
        let rising = a <= b;
        let flat_where_same = w[0].absorbing_states != w[1].absorbing_states || a == b;
        rising && flat_where_same
    })
}

pub fn delta_points_csv(points: &[DeltaPoint]) -> String {
    let mut out = String::from("delta,expected_steps,absorbing_states\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.delta, fmt_exp(p.expected), p.absorbing_states);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdStatus {
    Ok,
    /// Some neighbour covers none of the serving area at this threshold.
    Unreachable,
    /// The serving area itself is empty at this threshold.
    Degenerate,
}

/// `E[τ]` to full knowledge at one detection threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub expected: Expectation,
    pub status: ThresholdStatus,
}

/// Full-knowledge times as the detection threshold varies.
///
/// Thresholds are processed from the most conservative (highest) down. Every
/// threshold reuses the same sampling seed; with a serving area that does
/// not shrink, the same points are classified each time.
pub fn run_threshold_sweep(
    map: &PowerMap,
    thresholds: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<ThresholdPoint>, ExperimentError> {
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
        .into_iter()
        .map(|threshold| {
            let scenario = map.to_scenario(threshold)?;
            match estimate_tessellation(&scenario, samples, seed) {
                Err(TessellationError::Degenerate(_)) => Ok(ThresholdPoint {
                    threshold,
                    expected: Expectation::Unreachable,
                    status: ThresholdStatus::Degenerate,
                }),
                Err(e) => Err(e.into()),
                Ok(measure) => {
                    let expected = solve_fk(&measure).expected();
                    Ok(ThresholdPoint {
                        threshold,
                        expected,
                        status: if expected.is_unreachable() {
                            ThresholdStatus::Unreachable
                        } else {
                            ThresholdStatus::Ok
                        },
                    })
                }
            }
        })
        .collect()
}

/// [`run_threshold_sweep`] on a power-map file.
pub fn run_threshold_sweep_file(
    path: impl AsRef<Path>,
    thresholds: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<ThresholdPoint>, ExperimentError> {
    run_threshold_sweep(&PowerMap::load(path)?, thresholds, samples, seed)
}

pub fn threshold_points_csv(points: &[ThresholdPoint]) -> String {
    let mut out = String::from("threshold_dbm,expected_steps,status\n");
    for p in points {
        let status = match p.status {
            ThresholdStatus::Ok => "ok",
            ThresholdStatus::Unreachable => "unreachable",
            ThresholdStatus::Degenerate => "degenerate",
        };
        let _ = writeln!(out, "{},{},{}", p.threshold, fmt_exp(p.expected), status);
    }
    out
}

/// Mean and standard error helper re-exported for callers summarising trajectories.
pub fn mean_with_se(values: &[f64]) -> Option<(f64, f64)> {
    mean_and_se(values.iter().copied())
}

/// Transmit power of the synthetic femtocells, dBm (34 mW).
const FEMTO_TX_DBM: f64 = 15.3;
/// Free-space loss at 1 m for 2.1 GHz, dB.
const LOSS_AT_1M_DB: f64 = 38.9;
const PATH_LOSS_EXPONENT: f64 = 3.5;
const WALL_LOSS_DB: f64 = 8.0;

/// A deterministic indoor power map: one macrocell covering the whole floor
/// plus three femtocells attenuated by log-distance path loss and interior
/// walls. Stands in for a ray-traced map when none is available.
pub fn synthetic_power_map() -> PowerMap {
    let (n_cols, n_rows, cell) = (80usize, 50usize, 2.0);
    let origin = Point2D::ORIGIN;
    let femtos = [(25.0, 25.0), (80.0, 70.0), (135.0, 30.0)];
    // interior walls: x = 55, x = 105 and the corridor line y = 50
    let walls_between = |a: Point2D, b: Point2D| -> f64 {
        let crosses = |u: f64, v: f64, at: f64| (u - at) * (v - at) < 0.0;
        [55.0, 105.0].iter().filter(|&&w| crosses(a.x, b.x, w)).count() as f64
            + crosses(a.y, b.y, 50.0) as u8 as f64
    };
    let centre = |idx: usize| -> Point2D {
        let row = idx / n_cols;
        let col = idx % n_cols;
        let from_south = n_rows - 1 - row;
        Point2D::new((col as f64 + 0.5) * cell, (from_south as f64 + 0.5) * cell)
    };
    let mut stations = vec![StationGrid {
        label: "macro".into(),
        power: vec![-40.0; n_cols * n_rows],
    }];
    for (i, &(fx, fy)) in femtos.iter().enumerate() {
        let at = Point2D::new(fx, fy);
        let power = (0..n_cols * n_rows)
            .map(|idx| {
                let p = centre(idx);
                let d = p.distance(&at).max(1.0);
                let loss = LOSS_AT_1M_DB + 10.0 * PATH_LOSS_EXPONENT * d.log10() + WALL_LOSS_DB * walls_between(p, at);
                ((FEMTO_TX_DBM - loss) * 10.0).round() / 10.0
            })
            .collect();
        stations.push(StationGrid {
            label: format!("femto{}", i + 1),
            power,
        });
    }
    PowerMap {
        n_cols,
        n_rows,
        cell_size: cell,
        origin,
        stations,
    }
}
