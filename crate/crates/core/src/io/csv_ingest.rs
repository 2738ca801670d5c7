use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Tensor;

/// A channel computed from the CSV columns rather than read from one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedChannel {
    pub cell: [usize; 2],
    /// One weight per CSV data column.
    pub weights: Vec<f64>,
}

/// How the columns of an exported CSV map onto the electrode grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvLayout {
    /// Grid size `[rows, cols]`.
    pub grid: [usize; 2],
    /// `(row, col)` of each data column, in column order.
    pub channel_order: Vec<[usize; 2]>,
    pub sample_rate_hz: f64,
    /// Samples are in millivolts; otherwise microvolts, converted on read.
    #[serde(default = "yes")]
    pub millivolts: bool,
    /// First line holds column names.
    #[serde(default = "yes")]
    pub header: bool,
    /// First column holds time stamps and is skipped.
    #[serde(default)]
    pub time_column: bool,
    #[serde(default)]
    pub derived: Option<DerivedChannel>,
}

fn yes() -> bool {
    true
}

impl CsvLayout {
    /// `rows x cols` grid with columns in row-major order.
    pub fn row_major(rows: usize, cols: usize, sample_rate_hz: f64) -> Self {
        let channel_order = (0..rows).flat_map(|r| (0..cols).map(move |c| [r, c])).collect();
        Self {
            grid: [rows, cols],
            channel_order,
            sample_rate_hz,
            millivolts: true,
            header: true,
            time_column: false,
            derived: None,
        }
    }

    /// Three bipolar columns `S1 = E2 - E1`, `S2 = E2 - E3`, `S3 = E4 - E3`
    /// on a 2x2 grid, supplemented with `S1 - S2 + S3 = E4 - E1` in the
    /// remaining cell.
    pub fn tpehgt(sample_rate_hz: f64) -> Self {
        Self {
            grid: [2, 2],
            channel_order: vec![[0, 0], [0, 1], [1, 1]],
            sample_rate_hz,
            millivolts: true,
            header: true,
            time_column: false,
            derived: Some(DerivedChannel { cell: [1, 0], weights: vec![1.0, -1.0, 1.0] }),
        }
    }

    /// Every grid cell is covered exactly once by a column or the derived
    /// channel.
    pub fn validate(&self) -> Result<()> {
        let [rows, cols] = self.grid;
        if rows == 0 || cols == 0 {
            return Err(Error::Config("layout grid must be non-empty".into()));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config("layout sample rate must be positive".into()));
        }
        let mut seen = vec![false; rows * cols];
        let cells = self.channel_order.iter().chain(self.derived.as_ref().map(|d| &d.cell));
        for &[r, c] in cells {
            if r >= rows || c >= cols {
                return Err(Error::Config(format!("cell ({r}, {c}) outside the {rows}x{cols} grid")));
            }
            if std::mem::replace(&mut seen[r * cols + c], true) {
                return Err(Error::Config(format!("cell ({r}, {c}) mapped more than once")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("cell ({}, {}) is not mapped", missing / cols, missing % cols)));
        }
        if let Some(d) = &self.derived {
            if d.weights.len() != self.channel_order.len() {
                return Err(Error::Config(format!(
                    "derived channel has {} weights for {} columns",
                    d.weights.len(),
                    self.channel_order.len()
                )));
            }
        }
        Ok(())
    }
}

/// Reads an exported recording into a `rows x cols x T` tensor in
/// millivolts.
pub fn ingest_csv(path: &Path, layout: &CsvLayout) -> Result<Tensor> {
    layout.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(layout.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let skip = usize::from(layout.time_column);
    let width = skip + layout.channel_order.len();
    if layout.header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        if h.len() != width {
            return Err(Error::format(path, format!("header has {} columns, layout expects {width}", h.len())));
        }
    }
    let unit = if layout.millivolts { 1.0 } else { 1e-3 };
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); layout.channel_order.len()];
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::format(path, format!("line {line}: {} columns, expected {width}", rec.len())));
        }
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = &rec[skip + c];
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::format(path, format!("line {line}, column {}: '{cell}' is not a finite number", skip + c + 1))
            })?;
            col.push(v * unit);
        }
    }
    let t = columns.first().map_or(0, Vec::len);
    if t == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    let [rows, cols] = layout.grid;
    let mut x = Tensor::zeros([rows, cols, t]);
    for (col, &[r, c]) in columns.iter().zip(&layout.channel_order) {
        x.set_series(r, c, col);
    }
    if let Some(d) = &layout.derived {
        let series: Vec<f64> =
            (0..t).map(|k| d.weights.iter().zip(&columns).map(|(w, col)| w * col[k]).sum()).collect();
        x.set_series(d.cell[0], d.cell[1], &series);
    }
    Ok(x)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::format(path, e.to_string()),
    }
}
