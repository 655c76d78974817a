use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth sidecar carried alongside a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    /// Rows of `Σ*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `1` marks a replaced row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption_mask: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl DatasetMeta {
    pub fn theta_star_vec(&self) -> Option<DVector<f64>> {
        self.theta_star.as_ref().map(|t| DVector::from_column_slice(t))
    }

    pub fn sigma_matrix(&self) -> Option<DMatrix<f64>> {
        let rows = self.sigma.as_ref()?;
        let d = rows.len();
        Some(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }
}

/// `n` labeled rows: `x` is `n × d`, `y` has length `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    #[serde(default)]
    pub meta: Option<DatasetMeta>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, meta: Option<DatasetMeta>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Structure("dataset needs n >= 1 and d >= 1".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Structure(format!("{} covariate rows but {} labels", x.nrows(), y.len())));
        }
        if let Some(mask) = meta.as_ref().and_then(|m| m.corruption_mask.as_ref()) {
            if mask.len() != x.nrows() {
                return Err(Error::Structure(format!(
                    "corruption mask has length {} but n = {}",
                    mask.len(),
                    x.nrows()
                )));
            }
        }
        Ok(Self { x, y, meta })
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Structure(format!("row {} has {} coordinates, expected {d}", i + 1, r.len())));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y), None)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn theta_star(&self) -> Option<DVector<f64>> {
        self.meta.as_ref().and_then(|m| m.theta_star_vec())
    }

    pub fn sigma_star(&self) -> Option<DMatrix<f64>> {
        self.meta.as_ref().and_then(|m| m.sigma_matrix())
    }

    /// Rows at the given indices, in order; meta is dropped.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(idx);
        let y = self.y.select_rows(idx);
        Self::new(x, y, None)
    }
}

/// `data.csv` → `data.meta.json`.
pub fn meta_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = (1..=ds.d()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        rec.push(format!("{:.16e}", ds.y[i]));
        w.write_record(&rec).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    let meta_path = meta_path_for(path);
    match &ds.meta {
        Some(meta) => fs::write(&meta_path, serde_json::to_string_pretty(meta)?)?,
        None => {
            if meta_path.exists() {
                fs::remove_file(&meta_path)?;
            }
        }
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let cols = header.len();
    if cols < 2 || header.get(cols - 1) != Some("y") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be x1,...,xd,y".into(),
        });
    }
    for (j, h) in header.iter().take(cols - 1).enumerate() {
        if h != format!("x{}", j + 1) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column x{} but found '{h}'", j + 1),
            });
        }
    }
    let d = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != cols {
            return Err(Error::Structure(format!(
                "line {line} (row {}) has {} fields, expected {cols}",
                k + 1,
                rec.len()
            )));
        }
        for (j, tok) in rec.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("row {}: non-numeric token '{tok}'", k + 1),
            })?;
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Structure("dataset has no rows".into()));
    }
    let x = DMatrix::from_row_slice(ys.len(), d, &xs);
    let meta_path = meta_path_for(path);
    let meta = if meta_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(meta_path)?)?)
    } else {
        None
    };
    Dataset::new(x, DVector::from_vec(ys), meta)
}
