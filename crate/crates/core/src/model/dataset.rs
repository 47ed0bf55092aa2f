use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EdpmError, Result};

/// Response vector plus an `n × p` covariate matrix, stored row-major.
///
/// The design row used by the regression kernel is the covariate row with a
/// leading 1 (intercept at coefficient index 0); it is never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(EdpmError::Data("need at least one covariate".into()));
        }
        if x.len() != y.len() * p {
            return Err(EdpmError::Data(format!(
                "covariate matrix has {} entries, expected {} rows × {p}",
                x.len(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().chain(x.iter()).position(|v| !v.is_finite()) {
            return Err(EdpmError::Data(format!("non-finite entry at flat index {i}")));
        }
        Ok(Dataset { y, x, p })
    }

    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(EdpmError::Data("ragged covariate rows".into()));
        }
        if rows.len() != y.len() {
            return Err(EdpmError::Data(format!(
                "{} covariate rows for {} responses",
                rows.len(),
                y.len()
            )));
        }
        Self::new(y, rows.concat(), p)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    /// `x*_i β` with the intercept at index 0.
    pub fn linear_predictor(&self, i: usize, beta: &[f64]) -> f64 {
        design_dot(self.row(i), beta)
    }

    pub fn column_mean(&self, l: usize) -> f64 {
        self.rows().map(|r| r[l]).sum::<f64>() / self.n() as f64
    }

    /// Reads `y,x1,..,xp` with a header row. Anything that is not a finite
    /// number (including `NA`) is rejected.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(EdpmError::Data("need columns y,x1..xp".into()));
        }
        for (c, h) in headers.iter().enumerate() {
            let want = if c == 0 { "y".to_string() } else { format!("x{c}") };
            if h.trim() != want {
                return Err(EdpmError::Data(format!(
                    "column {} is `{h}`, expected `{want}`",
                    c + 1
                )));
            }
        }
        let p = headers.len() - 1;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    EdpmError::Data(format!("row {}, column {}: `{field}` is not a number", r + 2, c + 1))
                })?;
                if !v.is_finite() {
                    return Err(EdpmError::Data(format!(
                        "row {}, column {}: non-finite value",
                        r + 2,
                        c + 1
                    )));
                }
                if c == 0 {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        Self::new(y, x, p)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p).map(|l| format!("x{l}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![fmt_f64(self.y[i])];
            rec.extend(self.row(i).iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// `β_0 + Σ_l x_l β_l`.
#[inline]
pub fn design_dot(x: &[f64], beta: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len() + 1);
    beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

// Shortest representation that round-trips.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
