use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CoverageRegion, Point2D, RasterCoverage, Scenario, ScenarioError};

/// One station's received-power grid, dBm, row-major with row 0 north.
#[derive(Clone, Debug, PartialEq)]
pub struct StationGrid {
    pub label: String,
    pub power: Vec<f64>,
}

/// Power maps of several basestations over a shared grid.
///
/// Text layout:
///
/// ```text
/// ncols <int> nrows <int> cellsize <metres> origin <x> <y> nstations <int>
/// station <label>
/// <nrows lines of ncols dBm values>
/// station <label>
/// ...
/// ```
///
/// Blank lines and lines starting with `#` are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMap {
    pub n_cols: usize,
    pub n_rows: usize,
    pub cell_size: f64,
    pub origin: Point2D,
    pub stations: Vec<StationGrid>,
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, field: &'static str) -> Result<T, ScenarioError> {
    let tok = tok.ok_or(ScenarioError::MissingHeaderField(field))?;
    tok.parse().map_err(|_| ScenarioError::InvalidField {
        field: field.to_string(),
        reason: format!("cannot parse `{tok}`"),
    })
}

impl PowerMap {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));

        let header = lines
            .next()
            .ok_or(ScenarioError::MissingHeaderField("ncols"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let after = |key: &str, k: usize| -> Option<&str> {
            toks.iter()
                .position(|t| *t == key)
                .and_then(|i| toks.get(i + 1 + k).copied())
        };
        let n_cols: usize = parse_num(after("ncols", 0), "ncols")?;
        let n_rows: usize = parse_num(after("nrows", 0), "nrows")?;
        let cell_size: f64 = parse_num(after("cellsize", 0), "cellsize")?;
        let ox: f64 = parse_num(after("origin", 0), "origin")?;
        let oy: f64 = parse_num(after("origin", 1), "origin")?;
        let n_stations: usize = parse_num(after("nstations", 0), "nstations")?;
        if n_cols == 0 || n_rows == 0 {
            return Err(ScenarioError::InvalidField {
                field: "ncols".into(),
                reason: "grid must be non-empty".into(),
            });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(ScenarioError::InvalidField {
                field: "cellsize".into(),
                reason: "must be positive".into(),
            });
        }

        let mut stations = Vec::with_capacity(n_stations);
        let mut pending = lines.peekable();
        while let Some(line) = pending.next() {
            let label = line
                .strip_prefix("station")
                .map(str::trim)
                .ok_or_else(|| ScenarioError::Parse(format!("expected `station <label>`, got `{line}`")))?
                .to_string();
            let mut power = Vec::with_capacity(n_cols * n_rows);
            for row in 0..n_rows {
                let row_line = match pending.peek() {
                    Some(l) if !l.starts_with("station") => pending.next().unwrap(),
                    _ => {
                        return Err(ScenarioError::DimensionMismatch {
                            station: label,
                            detail: format!("expected {n_rows} rows, found {row}"),
                        })
                    }
                };
                let before = power.len();
                for tok in row_line.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| {
                        ScenarioError::Parse(format!("station `{label}` row {row}: bad value `{tok}`"))
                    })?;
                    power.push(v);
                }
                if power.len() - before != n_cols {
                    return Err(ScenarioError::DimensionMismatch {
                        station: label,
                        detail: format!(
                            "row {row} has {} values, expected {n_cols}",
                            power.len() - before
                        ),
                    });
                }
            }
            stations.push(StationGrid { label, power });
        }
        if stations.len() != n_stations {
            return Err(ScenarioError::InvalidField {
                field: "nstations".into(),
                reason: format!("header says {n_stations}, file has {}", stations.len()),
            });
        }
        Ok(PowerMap {
            n_cols,
            n_rows,
            cell_size,
            origin: Point2D::new(ox, oy),
            stations,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "ncols {} nrows {} cellsize {} origin {} {} nstations {}\n",
            self.n_cols,
            self.n_rows,
            self.cell_size,
            self.origin.x,
            self.origin.y,
            self.stations.len()
        );
        for st in &self.stations {
            let _ = writeln!(out, "station {}", st.label);
            for row in st.power.chunks(self.n_cols) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Smallest and largest power over all stations.
    pub fn power_range(&self) -> (f64, f64) {
        self.stations
            .iter()
            .flat_map(|s| s.power.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// First station serves; the rest become neighbours. `threshold` applies to all.
    pub fn to_scenario(&self, threshold: f64) -> Result<Scenario, ScenarioError> {
        let region = |st: &StationGrid| {
            CoverageRegion::Raster(RasterCoverage {
                origin: self.origin,
                cell_size: self.cell_size,
                n_cols: self.n_cols,
                n_rows: self.n_rows,
                power: st.power.clone(),
                threshold,
            })
        };
        let (serving, rest) = self.stations.split_first().ok_or(ScenarioError::InvalidField {
            field: "nstations".into(),
            reason: "need at least the serving station".into(),
        })?;
        let scenario = Scenario {
            serving: region(serving),
            neighbours: rest.iter().map(region).collect(),
            labels: Some(self.stations.iter().map(|s| s.label.clone()).collect()),
        };
        scenario.validate(super::DEFAULT_NEIGHBOUR_CAP)?;
        Ok(scenario)
    }
}

/// Loads a power-map file and thresholds every station at `threshold` dBm.
pub fn load_raster_scenario(path: impl AsRef<Path>, threshold: f64) -> Result<Scenario, ScenarioError> {
    PowerMap::load(path)?.to_scenario(threshold)
}
