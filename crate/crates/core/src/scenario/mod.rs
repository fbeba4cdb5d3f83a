//! Coverage geometry: the serving basestation's area and the areas of its
//! neighbours, as discs or thresholded power rasters.

mod raster;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::stream_rng;

pub use raster::{load_raster_scenario, PowerMap, StationGrid};

/// Default maximum number of neighbours accepted by the loaders.
pub const DEFAULT_NEIGHBOUR_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("scenario has {count} neighbours, cap is {cap}")]
    TooManyNeighbours { count: usize, cap: usize },
    #[error("raster header is missing field `{0}`")]
    MissingHeaderField(&'static str),
    #[error("raster dimension mismatch in station `{station}`: {detail}")]
    DimensionMismatch { station: String, detail: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidField {
        field: field.into(),
        reason: reason.into(),
    }
}

/// A point in the plane, in metres. Serialised as `[x, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Point2D {
        Point2D::new(self.x + dx, self.y + dy)
    }
}

impl From<[f64; 2]> for Point2D {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2D { x, y }
    }
}

impl From<Point2D> for [f64; 2] {
    fn from(p: Point2D) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point2D,
    pub max: Point2D,
}

/// A received-power raster with a detection threshold.
///
/// `origin` is the south-west corner of the grid. Cells are half-open squares
/// of side `cell_size`; `power` is row-major with row 0 the northernmost row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterCoverage {
    pub origin: Point2D,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    /// dBm, `n_rows * n_cols` values.
    pub power: Vec<f64>,
    /// dBm; a cell is covered when its power is at least this.
    pub threshold: f64,
}

impl RasterCoverage {
    /// Row-major index of the cell containing `p`, if `p` lies on the grid.
    pub fn cell_of(&self, p: Point2D) -> Option<usize> {
        let cx = ((p.x - self.origin.x) / self.cell_size).floor();
        let cy = ((p.y - self.origin.y) / self.cell_size).floor();
        if !(cx >= 0.0 && cy >= 0.0) || cx >= self.n_cols as f64 || cy >= self.n_rows as f64 {
            return None;
        }
        let row = self.n_rows - 1 - cy as usize;
        Some(row * self.n_cols + cx as usize)
    }

    /// South-west corner of the cell at row-major index `idx`.
    pub fn cell_corner(&self, idx: usize) -> Point2D {
        let row = idx / self.n_cols;
        let col = idx % self.n_cols;
        let from_south = self.n_rows - 1 - row;
        Point2D::new(
            self.origin.x + col as f64 * self.cell_size,
            self.origin.y + from_south as f64 * self.cell_size,
        )
    }

    pub fn is_covered(&self, idx: usize) -> bool {
        self.power[idx] >= self.threshold
    }

    /// Coverage mask over the grid, row-major.
    pub fn mask(&self) -> Vec<bool> {
        self.power.iter().map(|&p| p >= self.threshold).collect()
    }

    pub fn covered_cells(&self) -> Vec<usize> {
        (0..self.power.len()).filter(|&i| self.is_covered(i)).collect()
    }

    fn validate(&self, field: &str) -> Result<(), ScenarioError> {
        if !self.origin.is_finite() {
            return Err(invalid(format!("{field}.origin"), "must be finite"));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(invalid(format!("{field}.cell_size"), "must be positive"));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(invalid(format!("{field}.n_cols"), "grid must be non-empty"));
        }
        if self.power.len() != self.n_cols * self.n_rows {
            return Err(invalid(
                format!("{field}.power"),
                format!(
                    "expected {} values, found {}",
                    self.n_cols * self.n_rows,
                    self.power.len()
                ),
            ));
        }
        if self.power.iter().any(|v| v.is_nan()) {
            return Err(invalid(format!("{field}.power"), "contains NaN"));
        }
        if self.threshold.is_nan() {
            return Err(invalid(format!("{field}.threshold"), "is NaN"));
        }
        Ok(())
    }
}

/// The coverage area of one basestation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CoverageRegion {
    Disc { center: Point2D, radius: f64 },
    Raster(RasterCoverage),
}

impl CoverageRegion {
    pub fn disc(center: Point2D, radius: f64) -> Self {
        CoverageRegion::Disc { center, radius }
    }

    /// Closed-region membership: `distance <= radius` for discs,
    /// `power >= threshold` for rasters; off-grid points are outside.
    pub fn contains(&self, p: Point2D) -> bool {
        match self {
            CoverageRegion::Disc { center, radius } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                dx * dx + dy * dy <= radius * radius
            }
            CoverageRegion::Raster(r) => r.cell_of(p).is_some_and(|i| r.is_covered(i)),
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match self {
            CoverageRegion::Disc { center, radius } => BoundingBox {
                min: center.translate(-radius, -radius),
                max: center.translate(*radius, *radius),
            },
            CoverageRegion::Raster(r) => BoundingBox {
                min: r.origin,
                max: r.origin.translate(
                    r.n_cols as f64 * r.cell_size,
                    r.n_rows as f64 * r.cell_size,
                ),
            },
        }
    }

    /// Area in square metres.
    pub fn area(&self) -> f64 {
        match self {
            CoverageRegion::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            CoverageRegion::Raster(r) => {
                r.power.iter().filter(|&&p| p >= r.threshold).count() as f64
                    * r.cell_size
                    * r.cell_size
            }
        }
    }

    fn validate(&self, field: &str) -> Result<(), ScenarioError> {
        match self {
            CoverageRegion::Disc { center, radius } => {
                if !center.is_finite() {
                    return Err(invalid(format!("{field}.center"), "must be finite"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid(
                        format!("{field}.radius"),
                        format!("must be positive, got {radius}"),
                    ));
                }
                Ok(())
            }
            CoverageRegion::Raster(r) => r.validate(field),
        }
    }
}

/// A serving basestation and its ordered neighbour list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub serving: CoverageRegion,
    pub neighbours: Vec<CoverageRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl Scenario {
    /// Validates geometry and the default neighbour cap.
    pub fn new(
        serving: CoverageRegion,
        neighbours: Vec<CoverageRegion>,
    ) -> Result<Self, ScenarioError> {
        let s = Scenario {
            serving,
            neighbours,
            labels: None,
        };
        s.validate(DEFAULT_NEIGHBOUR_CAP)?;
        Ok(s)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn n_neighbours(&self) -> usize {
        self.neighbours.len()
    }

    pub fn validate(&self, cap: usize) -> Result<(), ScenarioError> {
        if self.neighbours.len() > cap {
            return Err(ScenarioError::TooManyNeighbours {
                count: self.neighbours.len(),
                cap,
            });
        }
        self.serving.validate("serving")?;
        for (i, n) in self.neighbours.iter().enumerate() {
            n.validate(&format!("neighbours[{i}]"))?;
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.neighbours.len() + 1 {
                return Err(invalid(
                    "labels",
                    format!(
                        "expected {} labels (serving first), found {}",
                        self.neighbours.len() + 1,
                        labels.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, cap: usize) -> Result<Self, ScenarioError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate(cap)?;
        Ok(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialisation is infallible")
    }
}

/// Reads a scenario file with the default neighbour cap.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    load_scenario_with_cap(path, DEFAULT_NEIGHBOUR_CAP)
}

pub fn load_scenario_with_cap(
    path: impl AsRef<Path>,
    cap: usize,
) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json_str(&text, cap)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json_string() + "\n").map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serving disc of radius `radius` at the origin plus `n_neighbours` discs of
/// the same radius whose centres are uniform over the disc of radius
/// `2 * radius` around the origin, redrawn until strictly closer than
/// `2 * radius` (so every neighbour overlaps the serving area).
pub fn generate_random_scenario(n_neighbours: usize, radius: f64, seed: u64) -> Scenario {
    assert!(n_neighbours >= 1, "need at least one neighbour");
    assert!(radius.is_finite() && radius > 0.0, "radius must be positive");
    let mut rng = stream_rng(seed, 0);
    let reach = 2.0 * radius;
    let neighbours = (0..n_neighbours)
        .map(|_| loop {
            let x = rng.gen_range(-reach..reach);
            let y = rng.gen_range(-reach..reach);
            if x * x + y * y < reach * reach {
                break CoverageRegion::disc(Point2D::new(x, y), radius);
            }
        })
        .collect();
    Scenario {
        serving: CoverageRegion::disc(Point2D::ORIGIN, radius),
        neighbours,
        labels: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_disc() -> CoverageRegion {
        CoverageRegion::disc(Point2D::ORIGIN, 1.0)
    }

    #[test]
    fn disc_membership() {
        assert!(unit_disc().contains(Point2D::new(0.0, 0.0)));
        assert!(!unit_disc().contains(Point2D::new(2.0, 0.0)));
        assert!(unit_disc().contains(Point2D::new(1.0, 0.0)));
    }

    fn one_cell(power: f64, threshold: f64) -> CoverageRegion {
        CoverageRegion::Raster(RasterCoverage {
            origin: Point2D::ORIGIN,
            cell_size: 1.0,
            n_cols: 1,
            n_rows: 1,
            power: vec![power],
            threshold,
        })
    }

    #[test]
    fn raster_membership_uses_threshold() {
        assert!(one_cell(-65.0, -70.0).contains(Point2D::new(0.5, 0.5)));
        assert!(one_cell(-70.0, -70.0).contains(Point2D::new(0.5, 0.5)));
        assert!(!one_cell(-75.0, -70.0).contains(Point2D::new(0.5, 0.5)));
        assert!(!one_cell(-65.0, -70.0).contains(Point2D::new(1.5, 0.5)));
        assert!(!one_cell(-65.0, -70.0).contains(Point2D::new(-0.1, 0.5)));
    }

    #[test]
    fn raster_row_zero_is_north() {
        let r = RasterCoverage {
            origin: Point2D::new(10.0, 20.0),
            cell_size: 2.0,
            n_cols: 3,
            n_rows: 2,
            power: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            threshold: 0.0,
        };
        assert_eq!(r.cell_of(Point2D::new(10.5, 23.5)), Some(0));
        assert_eq!(r.cell_of(Point2D::new(15.5, 20.5)), Some(5));
        assert_eq!(r.cell_corner(0), Point2D::new(10.0, 22.0));
        assert_eq!(r.cell_corner(5), Point2D::new(14.0, 20.0));
        assert_eq!(r.cell_of(Point2D::new(16.0, 20.5)), None);
    }

    #[test]
    fn random_scenario_constraints() {
        let s = generate_random_scenario(7, 1.0, 42);
        assert_eq!(s.n_neighbours(), 7);
        for n in &s.neighbours {
            let CoverageRegion::Disc { center, radius } = n else {
                panic!("expected disc")
            };
            assert_eq!(*radius, 1.0);
            assert!(center.distance(&Point2D::ORIGIN) < 2.0);
        }
        assert_eq!(s, generate_random_scenario(7, 1.0, 42));
        assert_ne!(s, generate_random_scenario(7, 1.0, 43));
        let one = generate_random_scenario(1, 1.0, 5);
        assert_eq!(one.n_neighbours(), 1);
    }

    #[test]
    fn ensemble_always_intersects() {
        for seed in 0..200 {
            let s = generate_random_scenario(7, 50.0, seed);
            for n in &s.neighbours {
                let CoverageRegion::Disc { center, .. } = n else { unreachable!() };
                assert!(center.distance(&Point2D::ORIGIN) < 100.0);
            }
        }
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let s = generate_random_scenario(3, 1.7, 9);
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }

    #[test]
    fn negative_radius_names_field() {
        let text = r#"{"serving":{"type":"disc","center":[0,0],"radius":1},
            "neighbours":[{"type":"disc","center":[1,0],"radius":-1}]}"#;
        let err = Scenario::from_json_str(text, DEFAULT_NEIGHBOUR_CAP).unwrap_err();
        match err {
            ScenarioError::InvalidField { field, .. } => assert_eq!(field, "neighbours[0].radius"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_parse_error() {
        let text = r#"{"serving":{"type":"disc","center":[0,0]},"neighbours":[]}"#;
        let err = Scenario::from_json_str(text, DEFAULT_NEIGHBOUR_CAP).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(ref m) if m.contains("radius")), "{err}");
    }

    #[test]
    fn neighbour_cap_enforced() {
        let n: Vec<String> = (0..25)
            .map(|_| r#"{"type":"disc","center":[0.5,0],"radius":1}"#.to_string())
            .collect();
        let text = format!(
            r#"{{"serving":{{"type":"disc","center":[0,0],"radius":1}},"neighbours":[{}]}}"#,
            n.join(",")
        );
        let err = Scenario::from_json_str(&text, 20).unwrap_err();
        assert!(matches!(err, ScenarioError::TooManyNeighbours { count: 25, cap: 20 }));
        assert!(Scenario::from_json_str(&text, 25).is_ok());
    }

    proptest! {
        // dyadic coordinates keep the shifted arithmetic exact
        #[test]
        fn disc_membership_is_translation_equivariant(
            cx in -64i32..64, cy in -64i32..64, r in 1i32..64,
            px in -256i32..256, py in -256i32..256,
            vx in -1024i32..1024, vy in -1024i32..1024,
        ) {
            let s = 0.125;
            let region = CoverageRegion::disc(Point2D::new(cx as f64 * s, cy as f64 * s), r as f64 * s);
            let p = Point2D::new(px as f64 * s, py as f64 * s);
            let (dx, dy) = (vx as f64 * s, vy as f64 * s);
            let shifted = CoverageRegion::disc(Point2D::new(cx as f64 * s + dx, cy as f64 * s + dy), r as f64 * s);
            prop_assert_eq!(region.contains(p), shifted.contains(p.translate(dx, dy)));
        }

        #[test]
        fn disc_membership_is_rotation_equivariant(
            px in -64i32..64, py in -64i32..64, r in 1i32..64, quarter in 0u8..4,
        ) {
            let region = CoverageRegion::disc(Point2D::ORIGIN, r as f64);
            let (x, y) = (px as f64, py as f64);
            let rotated = match quarter {
                0 => Point2D::new(x, y),
                1 => Point2D::new(-y, x),
                2 => Point2D::new(-x, -y),
                _ => Point2D::new(y, -x),
            };
            prop_assert_eq!(region.contains(Point2D::new(x, y)), region.contains(rotated));
        }
    }
}
