use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::bin_index;

/// Indicator columns per covariate: bin indices `ceil(5 x)` range over 0..=5.
pub const BINS_PER_DIM: usize = 6;

/// One-hot encoder over the staircase bins of each covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub dim: usize,
}

impl Encoder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn features(&self) -> usize {
        BINS_PER_DIM * self.dim
    }

    /// Active bin per covariate.
    pub fn bins(&self, x: &[f64]) -> Result<Vec<u8>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        x.iter()
            .enumerate()
            .map(|(index, &value)| {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::OutOfRange { index, value });
                }
                Ok(bin_index(value).clamp(0, BINS_PER_DIM as i64 - 1) as u8)
            })
            .collect()
    }

    /// Dense one-hot vector of length `6 d`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let bins = self.bins(x)?;
        let mut out = alloc::vec![0.0; self.features()];
        for (k, &b) in bins.iter().enumerate() {
            out[k * BINS_PER_DIM + b as usize] = 1.0;
        }
        Ok(out)
    }
}
