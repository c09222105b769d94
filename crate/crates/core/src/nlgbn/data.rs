//! Datasets, CSV input/output and the per-column squashing into (0, 1).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};

/// Margin kept free at both ends of (0, 1) after rescaling.
pub const RESCALE_MARGIN: f64 = 0.05;

/// Row-major matrix of observations in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(IcpError::Parse {
                line: i + 1,
                message: format!("expected {dim} columns, found {}", r.len()),
            });
        }
        if let Some(x) = rows.iter().flatten().find(|x| !x.is_finite()) {
            return Err(IcpError::InvalidArgument(format!("non-finite value {x} in dataset")));
        }
        Ok(Dataset { rows, dim })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Ok(Dataset { rows: Vec::new(), dim })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Reads comma-separated floats; a first line that does not parse is
    /// taken as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| IcpError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if idx == 0 => continue,
                Err(e) => {
                    return Err(IcpError::Parse {
                        line: idx + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::from_rows(rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(File::open(path)?)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.rows {
            wtr.write_record(row.iter().map(|x| x.to_string()))
                .map_err(|e| IcpError::Internal(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(File::create(path)?)
    }
}

/// Per-column min-max map onto [margin, 1 − margin] and its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rescale {
    pub lo: Vec<f64>,
    pub span: Vec<f64>,
    pub margin: f64,
}

impl Rescale {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::fit_with_margin(data, RESCALE_MARGIN)
    }

    pub fn fit_with_margin(data: &Dataset, margin: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(IcpError::InvalidArgument("cannot rescale an empty dataset".into()));
        }
        if !(0.0..0.5).contains(&margin) {
            return Err(IcpError::InvalidArgument(format!("margin {margin} outside [0, 0.5)")));
        }
        let mut lo = Vec::with_capacity(data.dim());
        let mut span = Vec::with_capacity(data.dim());
        for j in 0..data.dim() {
            let col = data.column(j);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo.push(min);
            // a constant column maps to the middle of the range
            span.push(if max > min { max - min } else { 0.0 });
        }
        Ok(Rescale { lo, span, margin })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn width(&self) -> f64 {
        1.0 - 2.0 * self.margin
    }

    pub fn forward(&self, j: usize, x: f64) -> f64 {
        if self.span[j] == 0.0 {
            0.5
        } else {
            self.margin + self.width() * (x - self.lo[j]) / self.span[j]
        }
    }

    pub fn inverse(&self, j: usize, y: f64) -> f64 {
        if self.span[j] == 0.0 {
            self.lo[j]
        } else {
            self.lo[j] + (y - self.margin) * self.span[j] / self.width()
        }
    }

    /// Column-major rescaled values.
    pub fn apply(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        if data.dim() != self.dim() {
            return Err(IcpError::InvalidArgument(format!(
                "dataset has {} columns, rescale expects {}",
                data.dim(),
                self.dim()
            )));
        }
        Ok((0..self.dim())
            .map(|j| data.rows().iter().map(|r| self.forward(j, r[j])).collect())
            .collect())
    }
}
