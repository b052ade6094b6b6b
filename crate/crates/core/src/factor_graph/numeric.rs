use std::sync::Arc;

use rayon::prelude::*;

use super::{FactorError, Result, SparseSystem, SymbolicStructure, PIVOT_TOLERANCE};

/// How the vertices of one level are processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Vertices of a level are spread over the rayon pool; levels are barriers.
    Levels,
}

/// `L` (unit diagonal implied) and `U` values on a symbolic fill pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericFactors {
    symbolic: Arc<SymbolicStructure>,
    l_values: Vec<f64>,
    u_values: Vec<f64>,
    diag: Vec<f64>,
}

/// Factorizes `P·A·Pᵀ = L·U` on the fill pattern of `sym`, one level at a time.
pub fn factorize(sys: &SparseSystem, sym: &Arc<SymbolicStructure>) -> Result<NumericFactors> {
    factorize_with(sys, sym, Parallelism::Sequential)
}

struct Column {
    u: Vec<f64>,
    diag: f64,
    l: Vec<f64>,
}

pub fn factorize_with(
    sys: &SparseSystem,
    sym: &Arc<SymbolicStructure>,
    parallelism: Parallelism,
) -> Result<NumericFactors> {
    let n = sym.n();
    if sys.n() != n {
        return Err(FactorError::DimensionMismatch {
            expected: n,
            found: sys.n(),
        });
    }
    let perm = sym.permutation();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, c, v) in sys.entries() {
        let (pr, pc) = (perm.to_ordered(r), perm.to_ordered(c));
        if !sym.contains(pr, pc) {
            return Err(FactorError::PatternMismatch { row: r, col: c });
        }
        columns[pc].push((pr, v));
    }
    let threshold = PIVOT_TOLERANCE * sys.max_abs();

    let mut factors = NumericFactors {
        symbolic: Arc::clone(sym),
        l_values: vec![0.0; sym.l_rows.len()],
        u_values: vec![0.0; sym.u_rows.len()],
        diag: vec![0.0; n],
    };

    for level in sym.schedule() {
        match parallelism {
            Parallelism::Sequential => {
                let mut work = vec![0.0; n];
                for &k in level {
                    let col = factors.column(k, &columns[k], &mut work, threshold)?;
                    factors.store(k, col);
                }
            }
            Parallelism::Levels => {
                let computed: Vec<Result<Column>> = level
                    .par_iter()
                    .map_init(
                        || vec![0.0; n],
                        |work, &k| factors.column(k, &columns[k], work, threshold),
                    )
                    .collect();
                for (&k, col) in level.iter().zip(computed) {
                    factors.store(k, col?);
                }
            }
        }
    }
    Ok(factors)
}

impl NumericFactors {
    /// Left-looking computation of column `k`; reads only columns of
    /// descendants of `k` in the elimination tree.
    fn column(&self, k: usize, a_col: &[(usize, f64)], work: &mut [f64], threshold: f64) -> Result<Column> {
        let sym = &*self.symbolic;
        for &(r, v) in a_col {
            work[r] = v;
        }
        let upper = sym.u_column(k);
        for &j in upper {
            let ujk = work[j];
            if ujk != 0.0 {
                let range = sym.l_col_ptr[j]..sym.l_col_ptr[j + 1];
                for (&i, &lij) in sym.l_rows[range.clone()].iter().zip(&self.l_values[range]) {
                    work[i] -= lij * ujk;
                }
            }
        }
        let pivot = work[k];
        let lower = sym.l_column(k);
        let col = Column {
            u: upper.iter().map(|&j| work[j]).collect(),
            diag: pivot,
            l: lower.iter().map(|&i| work[i] / pivot).collect(),
        };
        for &j in upper.iter().chain(lower) {
            work[j] = 0.0;
        }
        work[k] = 0.0;
        if !(pivot.abs() >= threshold) || pivot == 0.0 {
            return Err(FactorError::SingularPivot {
                vertex: sym.permutation().to_original(k),
                magnitude: pivot.abs(),
            });
        }
        Ok(col)
    }

    fn store(&mut self, k: usize, col: Column) {
        let sym = &*self.symbolic;
        self.u_values[sym.u_col_ptr[k]..sym.u_col_ptr[k + 1]].copy_from_slice(&col.u);
        self.l_values[sym.l_col_ptr[k]..sym.l_col_ptr[k + 1]].copy_from_slice(&col.l);
        self.diag[k] = col.diag;
    }

    pub fn symbolic(&self) -> &Arc<SymbolicStructure> {
        &self.symbolic
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Pivot magnitudes `|U_kk|` in elimination order.
    pub fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        self.diag.iter().map(|d| d.abs())
    }

    /// Strictly-lower entries of L as `(row, col, value)` in permuted indices.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let sym = &*self.symbolic;
        (0..self.n()).flat_map(move |j| {
            let range = sym.l_col_ptr[j]..sym.l_col_ptr[j + 1];
            sym.l_rows[range.clone()]
                .iter()
                .zip(&self.l_values[range])
                .map(move |(&i, &v)| (i, j, v))
        })
    }

    /// Entries of U including the diagonal, in permuted indices.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let sym = &*self.symbolic;
        (0..self.n()).flat_map(move |k| {
            let range = sym.u_col_ptr[k]..sym.u_col_ptr[k + 1];
            sym.u_rows[range.clone()]
                .iter()
                .zip(&self.u_values[range])
                .map(move |(&i, &v)| (i, k, v))
                .chain(std::iter::once((k, k, self.diag[k])))
        })
    }

    /// Solves `A·x = b` in place on a vector already in original ordering.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n();
        if b.len() != n {
            return Err(FactorError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let sym = &*self.symbolic;
        let perm = sym.permutation();
        let mut y: Vec<f64> = (0..n).map(|k| b[perm.to_original(k)]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                let range = sym.l_col_ptr[j]..sym.l_col_ptr[j + 1];
                for (&i, &l) in sym.l_rows[range.clone()].iter().zip(&self.l_values[range]) {
                    y[i] -= l * yj;
                }
            }
        }
        for k in (0..n).rev() {
            y[k] /= self.diag[k];
            let yk = y[k];
            if yk != 0.0 {
                let range = sym.u_col_ptr[k]..sym.u_col_ptr[k + 1];
                for (&i, &u) in sym.u_rows[range.clone()].iter().zip(&self.u_values[range]) {
                    y[i] -= u * yk;
                }
            }
        }
        for (k, v) in y.into_iter().enumerate() {
            b[perm.to_original(k)] = v;
        }
        Ok(())
    }
}

/// Forward/backward substitution: returns `x` with `A·x = b`.
pub fn solve(fac: &NumericFactors, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = b.to_vec();
    fac.solve_in_place(&mut x)?;
    Ok(x)
}
