//! RBF kernel on one-hot encodings and the row cache used by the solver.
//!
//! Two one-hot vectors that disagree in `m` covariate bins are at squared
//! distance `2 m`, so the kernel only takes `d + 1` distinct values and is
//! evaluated by table lookup on the bin vectors.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `1 / (features * Var(vec(X)))` for a row-major `rows x features` matrix,
/// using the population variance of all entries.
pub fn auto_gamma(matrix: &[f64], features: usize) -> Result<f64> {
    if features == 0 || matrix.is_empty() {
        return Err(Error::EmptyInput("auto_gamma matrix"));
    }
    if matrix.len() % features != 0 {
        return Err(Error::DimensionMismatch { expected: features, actual: matrix.len() % features });
    }
    let n = matrix.len() as f64;
    let mean = matrix.iter().sum::<f64>() / n;
    let var = matrix.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance("auto_gamma matrix"));
    }
    Ok(1.0 / (features as f64 * var))
}

/// `exp(-gamma * ||e(x) - e(x')||^2)` indexed by the number of mismatched bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinKernel {
    table: Vec<f64>,
}

impl BinKernel {
    pub fn new(gamma: f64, dim: usize) -> Self {
        Self { table: (0..=dim).map(|m| libm::exp(-gamma * 2.0 * m as f64)).collect() }
    }

    pub fn eval(&self, a: &[u8], b: &[u8]) -> f64 {
        let m = a.iter().zip(b).filter(|(x, y)| x != y).count();
        self.table[m]
    }

    /// Kernel value for two outputs of [`pack_bins`].
    #[inline]
    pub fn eval_packed(&self, a: u64, b: u64) -> f64 {
        let x = a ^ b;
        let m = ((x | (x >> 1) | (x >> 2)) & FIELD_MASK).count_ones();
        self.table[m as usize]
    }
}

const FIELD_BITS: usize = 3;
const FIELD_MASK: u64 = 0x1249_2492_4924_9249;

/// Bin vector packed three bits per covariate, or `None` when it does not fit
/// in 63 bits (more than 21 covariates).
pub fn pack_bins(bins: &[u8]) -> Option<u64> {
    if bins.len() * FIELD_BITS > 63 {
        return None;
    }
    Some(bins.iter().enumerate().fold(0u64, |acc, (k, &b)| acc | (u64::from(b) << (FIELD_BITS * k))))
}

/// Training points as bin vectors, stored contiguously.
pub(crate) struct BinMatrix<'a> {
    pub bins: &'a [u8],
    pub dim: usize,
}

impl BinMatrix<'_> {
    pub fn len(&self) -> usize {
        self.bins.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bins[i * self.dim..(i + 1) * self.dim]
    }
}

/// Least-recently-used cache of full kernel rows.
pub(crate) struct KernelCache<'a> {
    data: BinMatrix<'a>,
    kernel: BinKernel,
    packed: Option<Vec<u64>>,
    slot_of: Vec<Option<usize>>,
    slots: Vec<(usize, u64, Rc<[f64]>)>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    /// `cache_bytes` bounds the row storage; at least two rows are kept.
    pub fn new(data: BinMatrix<'a>, kernel: BinKernel, cache_bytes: usize) -> Self {
        let n = data.len();
        let row_bytes = (n * core::mem::size_of::<f64>()).max(1);
        let capacity = (cache_bytes / row_bytes).clamp(2, n.max(2));
        let packed = (0..n).map(|i| pack_bins(data.row(i))).collect();
        Self { packed, slot_of: alloc::vec![None; n], slots: Vec::new(), data, kernel, capacity, clock: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        if let Some(s) = self.slot_of[i] {
            self.slots[s].1 = self.clock;
            return self.slots[s].2.clone();
        }
        let row: Rc<[f64]> = match &self.packed {
            Some(p) => p.iter().map(|&pj| self.kernel.eval_packed(p[i], pj)).collect(),
            None => {
                let xi = self.data.row(i);
                (0..self.data.len()).map(|j| self.kernel.eval(xi, self.data.row(j))).collect()
            }
        };
        if self.slots.len() < self.capacity {
            self.slot_of[i] = Some(self.slots.len());
            self.slots.push((i, self.clock, row.clone()));
        } else {
            let (victim, _) = self.slots.iter().enumerate().min_by_key(|(_, s)| s.1).expect("capacity >= 2");
            self.slot_of[self.slots[victim].0] = None;
            self.slot_of[i] = Some(victim);
            self.slots[victim] = (i, self.clock, row.clone());
        }
        row
    }

    #[cfg(test)]
    pub fn cached_rows(&self) -> usize {
        self.slots.len()
    }
}
