//! Tiles of the serving area and their measures.
//!
//! Tile `A_j` is the part of the serving area covered by exactly the
//! neighbours in `j`. The knowledge chain only ever sees the vector of tile
//! areas normalised by the serving area, which this module estimates by
//! uniform sampling.

mod set;

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{CoverageRegion, Point2D, RasterCoverage, Scenario};
use crate::seed::stream_rng;

pub use set::{canonical_order, KnowledgeState, NeighborSet, Subsets, MAX_BITS};

/// Sum-to-one slack accepted when a measure is built from given masses.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

/// Default number of Monte Carlo points per tessellation.
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum TessellationError {
    #[error("degenerate scenario: {0}")]
    Degenerate(String),
    #[error("invalid tile measure: {0}")]
    InvalidMeasure(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Probability distribution over the `2^N` tiles, indexed by [`NeighborSet`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TileMeasure {
    n_neighbours: usize,
    mass: Vec<f64>,
    sample_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_err: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawMeasure {
    n_neighbours: usize,
    mass: Vec<f64>,
    #[serde(default)]
    sample_count: u64,
    #[serde(default)]
    std_err: Option<Vec<f64>>,
}

impl TileMeasure {
    /// Exact or synthetic measure. Masses must be finite, non-negative and sum
    /// to one within [`MASS_SUM_TOLERANCE`]; they are renormalised when off by
    /// more than `1e-12` and kept verbatim otherwise.
    pub fn new(n_neighbours: usize, mass: Vec<f64>) -> Result<Self, TessellationError> {
        Self::checked(n_neighbours, mass, 0, None)
    }

    /// Normalises arbitrary non-negative weights into a measure.
    pub fn from_weights(n_neighbours: usize, weights: Vec<f64>) -> Result<Self, TessellationError> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(TessellationError::InvalidMeasure(format!(
                "weights must have positive finite total, got {total}"
            )));
        }
        Self::new(n_neighbours, weights.into_iter().map(|w| w / total).collect())
    }

    /// Empirical frequencies with binomial standard errors.
    pub fn from_counts(n_neighbours: usize, counts: &[u64]) -> Result<Self, TessellationError> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(TessellationError::InvalidMeasure("no samples".into()));
        }
        let nf = n as f64;
        let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let std_err = mass.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();
        Self::checked(n_neighbours, mass, n, Some(std_err))
    }

    fn checked(
        n_neighbours: usize,
        mut mass: Vec<f64>,
        sample_count: u64,
        std_err: Option<Vec<f64>>,
    ) -> Result<Self, TessellationError> {
        if n_neighbours > MAX_BITS {
            return Err(TessellationError::InvalidMeasure(format!(
                "{n_neighbours} neighbours exceeds the supported {MAX_BITS}"
            )));
        }
        let tiles = 1usize << n_neighbours;
        if mass.len() != tiles {
            return Err(TessellationError::InvalidMeasure(format!(
                "expected {tiles} masses for {n_neighbours} neighbours, found {}",
                mass.len()
            )));
        }
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return Err(TessellationError::InvalidMeasure(format!(
                "mass[{i}] = {m} is not a non-negative finite number"
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOLERANCE {
            return Err(TessellationError::InvalidMeasure(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        if (total - 1.0).abs() > 1e-12 {
            mass.iter_mut().for_each(|m| *m /= total);
        }
        if let Some(se) = &std_err {
            if se.len() != tiles {
                return Err(TessellationError::InvalidMeasure("std_err length mismatch".into()));
            }
        }
        Ok(TileMeasure {
            n_neighbours,
            mass,
            sample_count,
            std_err,
        })
    }

    pub fn n_neighbours(&self) -> usize {
        self.n_neighbours
    }

    pub fn n_tiles(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self, tile: NeighborSet) -> f64 {
        self.mass[tile.index()]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn std_err(&self) -> Option<&[f64]> {
        self.std_err.as_deref()
    }

    pub fn full_set(&self) -> NeighborSet {
        NeighborSet::full(self.n_neighbours)
    }

    /// Union of all tiles with positive mass: everything a report can ever reveal.
    pub fn support_union(&self) -> NeighborSet {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .fold(NeighborSet::EMPTY, |acc, (j, _)| acc.union(NeighborSet::from_bits(j as u32)))
    }

    /// `Σ_{l ⊆ k} mass[l]`: the fraction of the serving area whose reports
    /// would reveal nothing beyond `k`.
    pub fn subset_mass(&self, k: NeighborSet) -> f64 {
        k.subsets().map(|l| self.mass[l.index()]).sum()
    }

    pub fn from_json_str(text: &str) -> Result<Self, TessellationError> {
        let raw: RawMeasure =
            serde_json::from_str(text).map_err(|e| TessellationError::Parse(e.to_string()))?;
        Self::checked(raw.n_neighbours, raw.mass, raw.sample_count, raw.std_err)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure serialisation is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TessellationError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TessellationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TessellationError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string() + "\n").map_err(|source| TessellationError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Fraction of the serving area described by knowledge `k`.
pub fn coverage_fraction(measure: &TileMeasure, k: KnowledgeState) -> f64 {
    measure.subset_mass(k)
}

/// The tile containing `p`, or `None` when `p` is outside the serving area.
pub fn classify_point(scenario: &Scenario, p: Point2D) -> Option<NeighborSet> {
    if !scenario.serving.contains(p) {
        return None;
    }
    Some(
        scenario
            .neighbours
            .iter()
            .enumerate()
            .filter(|(_, r)| r.contains(p))
            .fold(NeighborSet::EMPTY, |acc, (i, _)| acc.union(NeighborSet::singleton(i))),
    )
}

/// Uniform sampler over a coverage region.
#[derive(Clone, Debug)]
pub enum AreaSampler<'a> {
    /// Rejection from the bounding square.
    Disc { center: Point2D, radius: f64 },
    /// Uniform covered cell, then uniform point inside it.
    Raster {
        grid: &'a RasterCoverage,
        cells: Vec<usize>,
    },
}

impl<'a> AreaSampler<'a> {
    pub fn new(region: &'a CoverageRegion) -> Result<Self, TessellationError> {
        match region {
            CoverageRegion::Disc { center, radius } => Ok(AreaSampler::Disc {
                center: *center,
                radius: *radius,
            }),
            CoverageRegion::Raster(grid) => {
                let cells = grid.covered_cells();
                if cells.is_empty() {
                    return Err(TessellationError::Degenerate(
                        "serving raster has no covered cell".into(),
                    ));
                }
                Ok(AreaSampler::Raster { grid, cells })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2D {
        match self {
            AreaSampler::Disc { center, radius } => loop {
                let x = rng.gen_range(-1.0..1.0);
                let y = rng.gen_range(-1.0..1.0);
                if x * x + y * y <= 1.0 {
                    return Point2D::new(center.x + radius * x, center.y + radius * y);
                }
            },
            AreaSampler::Raster { grid, cells } => {
                let cell = cells[rng.gen_range(0..cells.len())];
                let corner = grid.cell_corner(cell);
                corner.translate(
                    rng.gen::<f64>() * grid.cell_size,
                    rng.gen::<f64>() * grid.cell_size,
                )
            }
        }
    }
}

/// Monte Carlo estimate of the tile measure from `n_samples` uniform points
/// of the serving area.
///
/// Points are drawn in fixed-size chunks, each from its own sub-stream of
/// `seed`, so the result does not depend on the number of worker threads.
pub fn estimate_tessellation(
    scenario: &Scenario,
    n_samples: u64,
    seed: u64,
) -> Result<TileMeasure, TessellationError> {
    if n_samples == 0 {
        return Err(TessellationError::InvalidMeasure("n_samples must be at least 1".into()));
    }
    let n = scenario.n_neighbours();
    if n > MAX_BITS {
        return Err(TessellationError::InvalidMeasure(format!("{n} neighbours is too many")));
    }
    let sampler = AreaSampler::new(&scenario.serving)?;
    let chunks = n_samples.div_ceil(CHUNK);
    let tiles = 1usize << n;
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut local = vec![0u64; tiles];
            for _ in 0..len {
                let p = sampler.sample(&mut rng);
                // sampler stays inside the serving area up to cell-edge rounding
                let tile = classify_point(scenario, p).unwrap_or(NeighborSet::EMPTY);
                local[tile.index()] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; tiles],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    TileMeasure::from_counts(n, &counts)
}
