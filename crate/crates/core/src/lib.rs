//! Crowdsourced discovery of a basestation's neighbour topology.
//!
//! A serving cell learns which neighbouring cells overlap it from user
//! reports. Each report carries the set of neighbours audible at the user's
//! location. The accumulated knowledge is a Markov chain on subsets of the
//! neighbour list, driven by the areas of the tiles of the serving cell's
//! tessellation by neighbour coverage.
//!
//! * [`scenario`]: coverage regions (discs, thresholded raster maps) and
//!   random scenario generation.
//! * [`tessellation`]: Monte Carlo tile areas and the [`TileMeasure`].
//! * [`chain`]: exact expected discovery times, variances and spectral
//!   bounds, for full knowledge or δ-knowledge.
//! * [`mobility`]: report streams from teleporting users and lattice random
//!   walks, plus trajectory simulation.
//! * [`experiments`]: ensembles and parameter sweeps.
//! * [`cli`]: the `crowdtopo` command line.

pub mod chain;
pub mod cli;
pub mod experiments;
pub mod mobility;
pub mod scenario;
pub mod seed;
pub mod tessellation;

pub use chain::{
    expected_absorption_steps, solve_delta, solve_fk, AbsorbingSet, ChainError, ChainSolution,
    Expectation, ReportBound,
};
pub use scenario::{CoverageRegion, Point2D, Scenario, ScenarioError};
pub use tessellation::{estimate_tessellation, KnowledgeState, NeighborSet, TileMeasure};
