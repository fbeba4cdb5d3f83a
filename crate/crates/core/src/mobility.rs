//! Report streams and knowledge trajectories.
//!
//! A stream is any iterator of time-stamped tile reports. Two generators are
//! provided: teleport mobility (i.i.d. tiles drawn from the measure) and a
//! lattice random walk over the serving area with a reflecting boundary.

use std::borrow::Borrow;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{AbsorbingSet, ChainError};
use crate::scenario::{BoundingBox, Point2D, Scenario};
use crate::seed::{derive_seed, stream_rng};
use crate::tessellation::{classify_point, NeighborSet, TessellationError, TileMeasure};

/// Default cap on reports per simulated trajectory.
pub const DEFAULT_MAX_REPORTS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid walk configuration: {0}")]
    InvalidConfig(String),
    #[error("serving area contains no lattice point at grid step {0} m")]
    EmptyLattice(f64),
    #[error("invalid users: {0}")]
    InvalidUsers(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Tessellation(#[from] TessellationError),
}

/// One report: the tile the user stood in at `time` seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Report {
    pub time: f64,
    pub tile: NeighborSet,
}

/// I.i.d. tile draws from a measure, one per unit of time starting at `t = 1`.
#[derive(Clone, Debug)]
pub struct TeleportStream {
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    step: u64,
}

impl Iterator for TeleportStream {
    type Item = Report;

    fn next(&mut self) -> Option<Report> {
        self.step += 1;
        let tile = NeighborSet::from_bits(self.dist.sample(&mut self.rng) as u32);
        Some(Report {
            time: self.step as f64,
            tile,
        })
    }
}

/// Teleport mobility: each report lands in tile `j` with probability `mass[j]`.
pub fn teleport_stream(measure: &TileMeasure, seed: u64) -> TeleportStream {
    TeleportStream {
        dist: WeightedIndex::new(measure.masses()).expect("a valid measure has positive total mass"),
        rng: stream_rng(seed, 0),
        step: 0,
    }
}

/// When a trajectory stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopCondition {
    FullKnowledge,
    Delta(f64),
}

impl StopCondition {
    pub fn absorbing_set(self, measure: &TileMeasure) -> Result<AbsorbingSet, ChainError> {
        match self {
            StopCondition::FullKnowledge => Ok(AbsorbingSet::full_knowledge(measure.n_neighbours())),
            StopCondition::Delta(d) => AbsorbingSet::delta(measure, d),
        }
    }
}

/// Result of folding a stream into knowledge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Reached {
        reports: u64,
        wall_time: f64,
        knowledge: NeighborSet,
    },
    Timeout {
        reports: u64,
        wall_time: f64,
        knowledge: NeighborSet,
    },
}

impl Outcome {
    pub fn reports(&self) -> u64 {
        match *self {
            Outcome::Reached { reports, .. } | Outcome::Timeout { reports, .. } => reports,
        }
    }

    pub fn wall_time(&self) -> f64 {
        match *self {
            Outcome::Reached { wall_time, .. } | Outcome::Timeout { wall_time, .. } => wall_time,
        }
    }

    pub fn knowledge(&self) -> NeighborSet {
        match *self {
            Outcome::Reached { knowledge, .. } | Outcome::Timeout { knowledge, .. } => knowledge,
        }
    }

    pub fn is_timeout(&self) -> bool {
        matches!(self, Outcome::Timeout { .. })
    }
}

/// Folds reports via `K_t = K_{t−1} ∪ j^t` until `K_t` is absorbing.
///
/// A state that is absorbing at `t = 0` returns `(0, 0.0)`. Stops with
/// [`Outcome::Timeout`] after `max_reports` reports.
pub fn run_until<I>(stream: I, absorbing: &AbsorbingSet, max_reports: u64) -> Outcome
where
    I: IntoIterator<Item = Report>,
{
    let mut knowledge = NeighborSet::EMPTY;
    let mut reports = 0;
    let mut wall_time = 0.0;
    if absorbing.contains(knowledge) {
        return Outcome::Reached {
            reports,
            wall_time,
            knowledge,
        };
    }
    for report in stream.into_iter().take(max_reports as usize) {
        knowledge = knowledge.union(report.tile);
        reports += 1;
        wall_time = report.time;
        if absorbing.contains(knowledge) {
            return Outcome::Reached {
                reports,
                wall_time,
                knowledge,
            };
        }
    }
    Outcome::Timeout {
        reports,
        wall_time,
        knowledge,
    }
}

/// [`run_until`] with the absorbing set built from `measure` and `stop`.
pub fn simulate_until<I>(
    stream: I,
    measure: &TileMeasure,
    stop: StopCondition,
    max_reports: u64,
) -> Result<Outcome, ChainError>
where
    I: IntoIterator<Item = Report>,
{
    Ok(run_until(stream, &stop.absorbing_set(measure)?, max_reports))
}

/// Tile frequencies over the first `horizon` reports of a stream.
pub fn empirical_report_measure<I>(
    stream: I,
    n_neighbours: usize,
    horizon: u64,
) -> Result<TileMeasure, TessellationError>
where
    I: IntoIterator<Item = Report>,
{
    let mut counts = vec![0u64; 1 << n_neighbours];
    for r in stream.into_iter().take(horizon as usize) {
        counts[r.tile.index()] += 1;
    }
    TileMeasure::from_counts(n_neighbours, &counts)
}

/// Random-walk timing. Moves are 4-adjacent on a square lattice; a move that
/// would leave the serving area is reflected back, so the walker stays put.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkConfig {
    /// Lattice spacing, metres.
    pub grid_step: f64,
    /// Seconds between moves.
    pub step_period: f64,
    /// Seconds between reports; the first report is at `t = inter_report_time`.
    pub inter_report_time: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            grid_step: 2.5,
            step_period: 5.0,
            inter_report_time: 360.0,
        }
    }
}

impl WalkConfig {
    pub fn with_inter_report_time(self, inter_report_time: f64) -> Self {
        WalkConfig {
            inter_report_time,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        for (name, v) in [
            ("grid_step", self.grid_step),
            ("step_period", self.step_period),
            ("inter_report_time", self.inter_report_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MobilityError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inter_report_time < self.step_period {
            return Err(MobilityError::InvalidConfig(
                "inter_report_time must be at least step_period".into(),
            ));
        }
        Ok(())
    }
}

const NO_CELL: u32 = u32::MAX;

/// Lattice points of the serving area, anchored at its bounding-box centre.
#[derive(Clone, Debug)]
pub struct WalkLattice {
    cols: usize,
    rows: usize,
    /// Row-major over the bounding grid; `NO_CELL` outside the serving area.
    index: Vec<u32>,
    points: Vec<Point2D>,
    tiles: Vec<NeighborSet>,
    /// Per lattice point: east, west, north, south neighbour (itself when blocked).
    moves: Vec<[u32; 4]>,
}

impl WalkLattice {
    pub fn new(scenario: &Scenario, grid_step: f64) -> Result<Self, MobilityError> {
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(MobilityError::InvalidConfig(format!("grid_step must be positive, got {grid_step}")));
        }
        let BoundingBox { min, max } = scenario.serving.bounding_box();
        let cx = 0.5 * (min.x + max.x);
        let cy = 0.5 * (min.y + max.y);
        let half_cols = (0.5 * (max.x - min.x) / grid_step).floor() as i64;
        let half_rows = (0.5 * (max.y - min.y) / grid_step).floor() as i64;
        let cols = (2 * half_cols + 1) as usize;
        let rows = (2 * half_rows + 1) as usize;
        let mut index = vec![NO_CELL; cols * rows];
        let mut points = Vec::new();
        let mut tiles = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let p = Point2D::new(
                    cx + (c as i64 - half_cols) as f64 * grid_step,
                    cy + (r as i64 - half_rows) as f64 * grid_step,
                );
                if let Some(tile) = classify_point(scenario, p) {
                    index[r * cols + c] = points.len() as u32;
                    points.push(p);
                    tiles.push(tile);
                }
            }
        }
        if points.is_empty() {
            return Err(MobilityError::EmptyLattice(grid_step));
        }
        let mut moves = vec![[0u32; 4]; points.len()];
        for r in 0..rows {
            for c in 0..cols {
                let me = index[r * cols + c];
                if me == NO_CELL {
                    continue;
                }
                let at = |rr: Option<usize>, cc: Option<usize>| -> u32 {
                    match (rr, cc) {
                        (Some(rr), Some(cc)) if rr < rows && cc < cols && index[rr * cols + cc] != NO_CELL => {
                            index[rr * cols + cc]
                        }
                        _ => me,
                    }
                };
                moves[me as usize] = [
                    at(Some(r), Some(c + 1)),
                    at(Some(r), c.checked_sub(1)),
                    at(Some(r + 1), Some(c)),
                    at(r.checked_sub(1), Some(c)),
                ];
            }
        }
        Ok(WalkLattice {
            cols,
            rows,
            index,
            points,
            tiles,
            moves,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point2D {
        self.points[i]
    }

    pub fn tile(&self, i: usize) -> NeighborSet {
        self.tiles[i]
    }

    /// Bounding-grid dimensions `(cols, rows)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    /// Lattice index at bounding-grid position `(col, row)`, if inside the area.
    pub fn at(&self, col: usize, row: usize) -> Option<usize> {
        let i = *self.index.get(row * self.cols + col)?;
        (i != NO_CELL).then_some(i as usize)
    }

    /// The walk's stationary report law: uniform over lattice points, pushed
    /// onto tiles.
    pub fn stationary_measure(&self, n_neighbours: usize) -> Result<TileMeasure, TessellationError> {
        let mut weights = vec![0.0; 1 << n_neighbours];
        for t in &self.tiles {
            weights[t.index()] += 1.0;
        }
        TileMeasure::from_weights(n_neighbours, weights)
    }

    fn step<R: Rng + ?Sized>(&self, at: usize, rng: &mut R) -> usize {
        self.moves[at][rng.gen_range(0..4)] as usize
    }
}

/// A walker on a [`WalkLattice`], reporting its tile every `inter_report_time`.
///
/// `L` is the lattice or a reference to it, so batch drivers can share one
/// lattice across many walkers.
#[derive(Clone, Debug)]
pub struct RandomWalkStream<L: Borrow<WalkLattice>> {
    lattice: L,
    cfg: WalkConfig,
    rng: ChaCha8Rng,
    position: usize,
    steps_taken: u64,
    reports: u64,
}

impl<L: Borrow<WalkLattice>> RandomWalkStream<L> {
    /// Starts uniformly at random on the lattice.
    pub fn new(lattice: L, cfg: WalkConfig, seed: u64) -> Result<Self, MobilityError> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, 0);
        let position = rng.gen_range(0..lattice.borrow().len());
        Ok(RandomWalkStream {
            lattice,
            cfg,
            rng,
            position,
            steps_taken: 0,
            reports: 0,
        })
    }

    pub fn lattice(&self) -> &WalkLattice {
        self.lattice.borrow()
    }

    pub fn position(&self) -> Point2D {
        self.lattice().point(self.position)
    }

    pub fn position_index(&self) -> usize {
        self.position
    }
}

impl<L: Borrow<WalkLattice>> Iterator for RandomWalkStream<L> {
    type Item = Report;

    fn next(&mut self) -> Option<Report> {
        self.reports += 1;
        let time = self.reports as f64 * self.cfg.inter_report_time;
        // moves happen at multiples of step_period; the slack absorbs ratio rounding
        let due = (time / self.cfg.step_period + 1e-9).floor() as u64;
        let lattice = self.lattice.borrow();
        while self.steps_taken < due {
            self.position = lattice.step(self.position, &mut self.rng);
            self.steps_taken += 1;
        }
        Some(Report {
            time,
            tile: lattice.tile(self.position),
        })
    }
}

/// Builds the lattice for `scenario` and starts a walker on it.
pub fn random_walk_stream(
    scenario: &Scenario,
    cfg: WalkConfig,
    seed: u64,
) -> Result<RandomWalkStream<WalkLattice>, MobilityError> {
    cfg.validate()?;
    RandomWalkStream::new(WalkLattice::new(scenario, cfg.grid_step)?, cfg, seed)
}

/// Many users each reporting independently with a small probability per
/// time unit; their superposition is approximately a Poisson process of rate
/// `n_users * report_prob`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonUsers {
    pub n_users: u64,
    pub report_prob: f64,
}

impl PoissonUsers {
    pub fn new(n_users: u64, report_prob: f64) -> Result<Self, MobilityError> {
        if n_users == 0 {
            return Err(MobilityError::InvalidUsers("need at least one user".into()));
        }
        if !(report_prob > 0.0 && report_prob <= 1.0) {
            return Err(MobilityError::InvalidUsers(format!(
                "report probability must lie in (0, 1], got {report_prob}"
            )));
        }
        Ok(PoissonUsers { n_users, report_prob })
    }

    /// Reports per time unit.
    pub fn rate(&self) -> f64 {
        self.n_users as f64 * self.report_prob
    }
}

/// Expected time for a rate-`λ` Poisson process to accumulate `mean_reports` arrivals.
pub fn poisson_wallclock(mean_reports: f64, users: &PoissonUsers) -> f64 {
    assert!(mean_reports >= 0.0, "mean_reports must be non-negative");
    mean_reports / users.rate()
}

/// One simulated trajectory of a batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub outcome: Outcome,
}

/// Runs `n` trajectories with seeds derived from `master_seed`, in parallel.
/// Output order and content do not depend on the thread count.
pub fn run_trajectories<S, F>(
    n: u64,
    master_seed: u64,
    absorbing: &AbsorbingSet,
    max_reports: u64,
    make_stream: F,
) -> Vec<TrajectoryRecord>
where
    S: Iterator<Item = Report>,
    F: Fn(u64) -> S + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i);
            TrajectoryRecord {
                seed,
                outcome: run_until(make_stream(seed), absorbing, max_reports),
            }
        })
        .collect()
}

/// `seed,reports_used,wall_time,terminal_state,status` lines with a header.
pub fn trajectories_to_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from("seed,reports_used,wall_time,terminal_state,status\n");
    for r in records {
        let status = if r.outcome.is_timeout() { "timeout" } else { "reached" };
        let _ = writeln!(
            out,
            "{},{},{},\"{}\",{}",
            r.seed,
            r.outcome.reports(),
            r.outcome.wall_time(),
            r.outcome.knowledge(),
            status
        );
    }
    out
}

/// Mean and standard error of reports used, over trajectories that did not time out.
pub fn mean_reports(records: &[TrajectoryRecord]) -> Option<(f64, f64)> {
    mean_and_se(records.iter().filter(|r| !r.outcome.is_timeout()).map(|r| r.outcome.reports() as f64))
}

/// Mean and standard error of wall-clock time, over trajectories that did not time out.
pub fn mean_wall_time(records: &[TrajectoryRecord]) -> Option<(f64, f64)> {
    mean_and_se(records.iter().filter(|r| !r.outcome.is_timeout()).map(|r| r.outcome.wall_time()))
}

pub(crate) fn mean_and_se<I: Iterator<Item = f64>>(values: I) -> Option<(f64, f64)> {
    let (mut n, mut sum, mut sq) = (0u64, 0.0, 0.0);
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Some((mean, (var / nf).sqrt()))
}
