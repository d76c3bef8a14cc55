//! Sample-table ingestion: CSV parsing, reduction of 2-D site coordinates to
//! a 1-D transect position, position normalization, and per-element outlier
//! weights.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of samples a transect needs before smoothing is meaningful.
pub const MIN_SAMPLES: usize = 4;

/// Separation inserted between coincident normalized positions. The k-th of
/// d duplicates is offset by `JITTER * k / d`, so a whole group stays within
/// one jitter unit.
pub const JITTER: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input table has no header row")]
    MissingHeader,
    #[error(
        "no position column: expected `{position}` or the coordinate pair `{east}`/`{north}`"
    )]
    MissingPositionColumn {
        position: String,
        east: String,
        north: String,
    },
    #[error("header names fewer than 2 element columns")]
    TooFewElements,
    #[error("line {line}: cannot parse column `{column}` value `{value}` as a number")]
    BadCell {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: missing value in column `{column}`")]
    MissingCell { line: usize, column: String },
    #[error("sample `{sample}`, column `{column}`: negative concentration {value}")]
    NegativeConcentration {
        sample: String,
        column: String,
        value: f64,
    },
    #[error("at least {MIN_SAMPLES} samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("positions have zero range; at least two distinct positions are required")]
    ZeroRange,
    #[error("cannot project: all coordinates are identical")]
    DegenerateCoordinates,
    #[error("at least 2 points are required for projection, got {0}")]
    TooFewPoints(usize),
    #[error(
        "positions {a} and {b} are closer than the duplicate-separation step; \
         positions must either coincide exactly or differ by more than {JITTER}"
    )]
    JitterCollision { a: f64, b: f64 },
    #[error("weights need at least 2 observations, got {0}")]
    TooFewForWeights(usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Which header names play which role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnRoles {
    /// Optional sample-identifier column.
    #[serde(default = "default_id_column")]
    pub sample_id: String,
    /// 1-D position column (meters along the transect).
    #[serde(default = "default_position_column")]
    pub position: String,
    /// Easting column of a planar coordinate pair.
    #[serde(default = "default_east_column")]
    pub east: String,
    /// Northing column of a planar coordinate pair.
    #[serde(default = "default_north_column")]
    pub north: String,
}

fn default_id_column() -> String {
    "id".into()
}
fn default_position_column() -> String {
    "x".into()
}
fn default_east_column() -> String {
    "east".into()
}
fn default_north_column() -> String {
    "north".into()
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            sample_id: default_id_column(),
            position: default_position_column(),
            east: default_east_column(),
            north: default_north_column(),
        }
    }
}

/// Site coordinates as they appear in the input.
#[derive(Debug, Clone)]
pub enum Coordinates {
    /// Distances in meters along the transect.
    Distance(Vec<f64>),
    /// Planar easting/northing pairs in meters.
    Planar(Vec<(f64, f64)>),
}

/// A parsed sample table, one concentration column per element.
#[derive(Debug, Clone)]
pub struct RawSampleTable {
    pub sample_ids: Vec<String>,
    pub coordinates: Coordinates,
    pub elements: Vec<String>,
    /// `values[e][i]` is the concentration of element `e` in sample `i`.
    pub values: Vec<Vec<f64>>,
}

impl RawSampleTable {
    pub fn sample_count(&self) -> usize {
        self.sample_ids.len()
    }
}

/// Parses a delimited UTF-8 table with a header row. The position column (or
/// the coordinate pair) is identified by `roles`; every other column is
/// treated as an element concentration.
pub fn parse_table<R: Read>(reader: R, roles: &ColumnRoles) -> Result<RawSampleTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|_| IngestError::MissingHeader)?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let id_col = headers.iter().position(|h| *h == roles.sample_id);
    let pos_col = headers.iter().position(|h| *h == roles.position);
    let east_col = headers.iter().position(|h| *h == roles.east);
    let north_col = headers.iter().position(|h| *h == roles.north);
    let planar = match (pos_col, east_col, north_col) {
        (Some(_), _, _) => false,
        (None, Some(_), Some(_)) => true,
        _ => {
            return Err(IngestError::MissingPositionColumn {
                position: roles.position.clone(),
                east: roles.east.clone(),
                north: roles.north.clone(),
            })
        }
    };

    let mut reserved: BTreeSet<usize> = BTreeSet::new();
    reserved.extend(id_col);
    if planar {
        reserved.extend([east_col.unwrap(), north_col.unwrap()]);
    } else {
        reserved.insert(pos_col.unwrap());
    }
    let element_cols: Vec<usize> = (0..headers.len()).filter(|c| !reserved.contains(c)).collect();
    if element_cols.len() < 2 {
        return Err(IngestError::TooFewElements);
    }
    let elements: Vec<String> = element_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut sample_ids = Vec::new();
    let mut distances = Vec::new();
    let mut planar_coords = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); element_cols.len()];

    let parse_cell = |record: &csv::StringRecord, col: usize, line: usize| -> Result<f64, IngestError> {
        let raw = record.get(col).unwrap_or("");
        if raw.is_empty() {
            return Err(IngestError::MissingCell {
                line,
                column: headers[col].clone(),
            });
        }
        raw.parse::<f64>().map_err(|_| IngestError::BadCell {
            line,
            column: headers[col].clone(),
            value: raw.to_string(),
        })
    };

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_idx + 2; // header is line 1
        let id = match id_col {
            Some(c) => record.get(c).unwrap_or("").to_string(),
            None => format!("s{}", row_idx + 1),
        };
        if planar {
            let e = parse_cell(&record, east_col.unwrap(), line)?;
            let n = parse_cell(&record, north_col.unwrap(), line)?;
            planar_coords.push((e, n));
        } else {
            distances.push(parse_cell(&record, pos_col.unwrap(), line)?);
        }
        for (slot, &col) in element_cols.iter().enumerate() {
            let v = parse_cell(&record, col, line)?;
            if v < 0.0 {
                return Err(IngestError::NegativeConcentration {
                    sample: id.clone(),
                    column: headers[col].clone(),
                    value: v,
                });
            }
            values[slot].push(v);
        }
        sample_ids.push(id);
    }

    if sample_ids.len() < MIN_SAMPLES {
        return Err(IngestError::TooFewSamples(sample_ids.len()));
    }

    Ok(RawSampleTable {
        sample_ids,
        coordinates: if planar {
            Coordinates::Planar(planar_coords)
        } else {
            Coordinates::Distance(distances)
        },
        elements,
        values,
    })
}

/// Orthogonally projects planar points onto the principal axis of their
/// scatter (the line through the centroid maximizing projected variance) and
/// returns offsets along that axis, shifted so the smallest is zero.
pub fn project_to_transect(points: &[(f64, f64)]) -> Result<Vec<f64>, IngestError> {
    if points.len() < 2 {
        return Err(IngestError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let dx = x - cx;
        let dy = y - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 && syy == 0.0 {
        return Err(IngestError::DegenerateCoordinates);
    }
    // Leading eigenvector of the 2×2 scatter matrix, closed form.
    let half_trace = 0.5 * (sxx + syy);
    let det = sxx * syy - sxy * sxy;
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    let lead = half_trace + disc;
    let (mut vx, mut vy) = if sxy.abs() > 0.0 {
        (lead - syy, sxy)
    } else if sxx >= syy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (vx * vx + vy * vy).sqrt();
    vx /= norm;
    vy /= norm;
    // The eigenvector sign is arbitrary; fix it for reproducibility.
    if vx < 0.0 || (vx == 0.0 && vy < 0.0) {
        vx = -vx;
        vy = -vy;
    }
    let mut offsets: Vec<f64> = points
        .iter()
        .map(|(x, y)| (x - cx) * vx + (y - cy) * vy)
        .collect();
    let min = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
    for o in &mut offsets {
        *o -= min;
    }
    Ok(offsets)
}

/// Affinely maps distances onto [0, 1]. Coincident positions are separated by
/// a deterministic sub-`JITTER` offset (the spline knots must be strictly
/// increasing); if that pushes the largest position past 1 the whole vector
/// is re-normalized. Input order must be sorted ascending.
pub fn normalize_positions(distances: &[f64]) -> Result<Vec<f64>, IngestError> {
    let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = distances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(IngestError::ZeroRange);
    }
    let span = max - min;
    let mut positions: Vec<f64> = distances.iter().map(|d| (d - min) / span).collect();

    // Separate duplicate runs.
    let mut i = 0;
    let mut jittered = false;
    while i < positions.len() {
        let mut j = i + 1;
        while j < positions.len() && positions[j] == positions[i] {
            j += 1;
        }
        let group = j - i;
        if group > 1 {
            jittered = true;
            for k in 1..group {
                positions[i + k] += JITTER * k as f64 / group as f64;
            }
        }
        i = j;
    }
    if jittered {
        let new_min = positions[0];
        let new_max = positions[positions.len() - 1];
        if new_min != 0.0 || new_max != 1.0 {
            let s = new_max - new_min;
            for p in &mut positions {
                *p = (*p - new_min) / s;
            }
        }
        for w in positions.windows(2) {
            if w[1] <= w[0] {
                return Err(IngestError::JitterCollision { a: w[0], b: w[1] });
            }
        }
    }
    Ok(positions)
}

/// Outlier weights `max(|y_i − mean| / sd, 1)`, normalized to mean one.
/// Observations more than one standard deviation from the mean are upweighted
/// proportionally; a zero standard deviation yields uniform weights.
pub fn compute_outlier_weights(y: &[f64]) -> Result<Vec<f64>, IngestError> {
    let n = y.len();
    if n < 2 {
        return Err(IngestError::TooFewForWeights(n));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let raw: Vec<f64> = y.iter().map(|v| ((v - mean).abs() / sd).max(1.0)).collect();
    let raw_mean = raw.iter().sum::<f64>() / n as f64;
    Ok(raw.iter().map(|w| w / raw_mean).collect())
}

/// A transect ready for fitting: normalized positions with per-element
/// concentration and weight vectors.
#[derive(Debug, Clone)]
pub struct TransectDataset {
    pub sample_ids: Vec<String>,
    /// Strictly increasing positions with min 0 and max 1.
    pub positions: Vec<f64>,
    pub elements: Vec<String>,
    /// `values[e][i]`, aligned with `positions`.
    pub values: Vec<Vec<f64>>,
    /// Mean-one outlier weights, same layout as `values`.
    pub weights: Vec<Vec<f64>>,
    /// Original distance range in input units (for mapping results back).
    pub distance_range: (f64, f64),
}

impl TransectDataset {
    /// Builds the fitting-ready dataset: projects planar coordinates if
    /// needed, sorts samples by distance, normalizes positions and computes
    /// the outlier weights of every element.
    pub fn from_raw(raw: &RawSampleTable) -> Result<Self, IngestError> {
        if raw.sample_count() < MIN_SAMPLES {
            return Err(IngestError::TooFewSamples(raw.sample_count()));
        }
        let distances = match &raw.coordinates {
            Coordinates::Distance(d) => d.clone(),
            Coordinates::Planar(points) => project_to_transect(points)?,
        };

        let mut order: Vec<usize> = (0..distances.len()).collect();
        order.sort_by(|&a, &b| {
            distances[a]
                .partial_cmp(&distances[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });

        let sorted_distances: Vec<f64> = order.iter().map(|&i| distances[i]).collect();
        let positions = normalize_positions(&sorted_distances)?;
        let sample_ids = order.iter().map(|&i| raw.sample_ids[i].clone()).collect();
        let values: Vec<Vec<f64>> = raw
            .values
            .iter()
            .map(|col| order.iter().map(|&i| col[i]).collect())
            .collect();
        let weights = values
            .iter()
            .map(|col| compute_outlier_weights(col))
            .collect::<Result<Vec<_>, _>>()?;
        let dmin = sorted_distances[0];
        let dmax = sorted_distances[sorted_distances.len() - 1];
        Ok(Self {
            sample_ids,
            positions,
            elements: raw.elements.clone(),
            values,
            weights,
            distance_range: (dmin, dmax),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.positions.len()
    }

    pub fn element_index(&self, symbol: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == symbol)
    }

    /// Maps a normalized position back to original distance units.
    pub fn to_distance(&self, position: f64) -> f64 {
        let (lo, hi) = self.distance_range;
        lo + position * (hi - lo)
    }
}
