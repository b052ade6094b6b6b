use serde::{Deserialize, Serialize};

use super::{FactorError, Result};

/// Whether the nonzero pattern of a system equals the pattern of its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    PatternSymmetric,
    General,
}

/// A square sparse matrix in compressed-column form.
///
/// Row indices inside every column are strictly increasing, so there are
/// never duplicate `(row, col)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseSystem {
    /// Builds a system from triplets, summing values that share a position.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::build(n, triplets, true)
    }

    /// Builds a system from entries that must not repeat a position.
    pub fn try_from_entries<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::build(n, entries, false)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::try_from_entries(n, (0..n).map(|i| (i, i, 1.0)))
    }

    fn build<I>(n: usize, entries: I, sum_duplicates: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(FactorError::EmptySystem);
        }
        let mut entries: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        for &(row, col, _) in &entries {
            if row >= n || col >= n {
                return Err(FactorError::OutOfBounds { row, col, n });
            }
        }
        // Stable sort keeps the summation order of duplicates deterministic.
        entries.sort_by_key(|&(r, c, _)| (c, r));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in entries {
            if last == Some((row, col)) {
                if !sum_duplicates {
                    return Err(FactorError::DuplicateEntry { row, col });
                }
                *values.last_mut().expect("duplicate follows an entry") += value;
                continue;
            }
            last = Some((row, col));
            col_ptr[col + 1] += 1;
            row_idx.push(row);
            values.push(value);
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut sys = Self {
            n,
            col_ptr,
            row_idx,
            values,
            symmetry: Symmetry::General,
        };
        sys.symmetry = if sys.pattern_is_symmetric() {
            Symmetry::PatternSymmetric
        } else {
            Symmetry::General
        };
        Ok(sys)
    }

    fn pattern_is_symmetric(&self) -> bool {
        (0..self.n).all(|col| {
            self.column(col)
                .0
                .iter()
                .all(|&row| self.position(col, row).is_some())
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Row indices and values of column `col`.
    pub fn column(&self, col: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (rows, _) = self.column(col);
        rows.binary_search(&row).ok().map(|p| self.col_ptr[col] + p)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.position(row, col).map(|p| self.values[p])
    }

    /// Entries `(row, col, value)` in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |col| {
            let (rows, vals) = self.column(col);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, col, v))
        })
    }

    /// Overwrites the value at an existing pattern position.
    pub fn set(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        let p = self
            .position(row, col)
            .ok_or(FactorError::PatternMismatch { row, col })?;
        self.values[p] = value;
        Ok(())
    }

    /// Adds to the value at an existing pattern position.
    pub fn add(&mut self, row: usize, col: usize, delta: f64) -> Result<()> {
        let p = self
            .position(row, col)
            .ok_or(FactorError::PatternMismatch { row, col })?;
        self.values[p] += delta;
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Computes `A·x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(FactorError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for (col, &xc) in x.iter().enumerate() {
            let (rows, vals) = self.column(col);
            for (&r, &v) in rows.iter().zip(vals) {
                y[r] += v * xc;
            }
        }
        Ok(y)
    }

    /// Dense row-major copy; meant for small systems and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (r, c, v) in self.entries() {
            dense[r][c] = v;
        }
        dense
    }

    /// Strictly-off-diagonal adjacency of the pattern of `A + Aᵀ`.
    pub(crate) fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (r, c, _) in self.entries() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}
