//! Datasets and on-disk formats.
//!
//! Every [`Dataset`] row is scaled to `‖x‖² = d0`, so the arccosine kernel has unit
//! diagonal. MNIST digits map to `+1` when even and `-1` when odd.

mod idx;
mod matrix;
mod report;
mod synthetic;

pub use idx::{
    load_mnist, parse_idx_images, parse_idx_labels, read_maybe_gz, write_idx_images,
    write_idx_labels, IdxImages,
};
pub use matrix::{load_matrix, read_matrix, save_matrix, write_matrix, MATRIX_MAGIC};
pub use report::{
    append_report, load_reports, read_csv, write_csv, CsvRow, ExperimentKind, ExperimentRecord,
};
pub use synthetic::{synthetic_gaussians, synthetic_xor};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance on `‖x‖² = d0`.
pub const NORM_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    MnistEvenOdd,
    SyntheticGaussians,
    SyntheticXor,
    /// Rows supplied by the caller.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    source: DatasetSource,
    seed: u64,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>, source: DatasetSource, seed: u64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidParameter(
                "dataset needs at least one row".into(),
            ));
        }
        if ys.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        let d0 = xs[0].len();
        if d0 == 0 {
            return Err(Error::InvalidParameter(
                "input dimension must be positive".into(),
            ));
        }
        for x in &xs {
            if x.len() != d0 {
                return Err(Error::DimensionMismatch {
                    expected: d0,
                    found: x.len(),
                });
            }
            let norm_sq: f64 = x.iter().map(|v| v * v).sum();
            if !((norm_sq - d0 as f64).abs() <= NORM_REL_TOL * d0 as f64) {
                return Err(Error::NotNormalized {
                    norm_sq,
                    expected: d0 as f64,
                });
            }
        }
        if let Some(&bad) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "labels must be ±1, got {bad}"
            )));
        }
        Ok(Self {
            xs,
            ys,
            source,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn labels(&self) -> &[f64] {
        &self.ys
    }

    pub fn source(&self) -> DatasetSource {
        self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rows `range.start..range.end` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::CountExceeded {
                requested: range.end,
                available: self.len(),
            });
        }
        Ok(Self {
            xs: self.xs[range.clone()].to_vec(),
            ys: self.ys[range].to_vec(),
            source: self.source,
            seed: self.seed,
        })
    }

    /// First `train` rows and the following `test` rows.
    pub fn split(&self, train: usize, test: usize) -> Result<(Self, Self)> {
        if train + test > self.len() {
            return Err(Error::CountExceeded {
                requested: train + test,
                available: self.len(),
            });
        }
        Ok((self.slice(0..train)?, self.slice(train..train + test)?))
    }
}

/// Rescales `x` in place to `‖x‖² = d0`.
pub fn normalize_row(x: &mut [f64]) -> Result<()> {
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::Corrupt(format!(
            "cannot normalize a row with squared norm {norm_sq}"
        )));
    }
    let scale = (x.len() as f64 / norm_sq).sqrt();
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}
