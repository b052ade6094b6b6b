use super::{Permutation, Result, SparseSystem};
use super::FactorError;

/// Ordering, elimination tree, fill pattern and level schedule of a system.
///
/// All indices except those inside [`Permutation`] refer to the permuted
/// (elimination) order. The pattern of `U` is the transpose of the pattern of
/// `L`, since structure is analysed on `A + Aᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicStructure {
    n: usize,
    permutation: Permutation,
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    schedule: Vec<Vec<usize>>,
    // Strictly-lower pattern of L by column, rows ascending.
    pub(crate) l_col_ptr: Vec<usize>,
    pub(crate) l_rows: Vec<usize>,
    // Strictly-upper pattern of U by column, rows ascending.
    pub(crate) u_col_ptr: Vec<usize>,
    pub(crate) u_rows: Vec<usize>,
    input_lower_nnz: usize,
}

/// Computes the elimination tree, fill pattern and level schedule of `sys`
/// under `perm`.
pub fn symbolic_analyze(sys: &SparseSystem, perm: &Permutation) -> Result<SymbolicStructure> {
    let n = sys.n();
    if perm.len() != n {
        return Err(FactorError::InvalidPermutation { n });
    }
    // Lower adjacency of the permuted symmetric pattern: for each k, the i < k
    // adjacent to k.
    let mut lower: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (orig, list) in sys.symmetric_adjacency().into_iter().enumerate() {
        let k = perm.to_ordered(orig);
        for other in list {
            let i = perm.to_ordered(other);
            if i < k {
                lower[k].push(i);
            }
        }
    }
    let input_lower_nnz = lower.iter().map(Vec::len).sum();

    // Elimination tree with path-compressed ancestors.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &start in &lower[k] {
            let mut i = start;
            loop {
                match ancestor[i] {
                    Some(a) if a == k => break,
                    Some(a) => {
                        ancestor[i] = Some(k);
                        i = a;
                    }
                    None => {
                        ancestor[i] = Some(k);
                        parent[i] = Some(k);
                        break;
                    }
                }
            }
        }
    }

    // Row k of L is the union of tree paths from each i in lower[k] up to k.
    let mut mark = vec![usize::MAX; n];
    let mut u_col_ptr = vec![0usize; n + 1];
    let mut u_rows = Vec::new();
    let mut l_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 0..n {
        mark[k] = k;
        let row_start = u_rows.len();
        for &start in &lower[k] {
            let mut i = start;
            while mark[i] != k {
                mark[i] = k;
                u_rows.push(i);
                i = parent[i].expect("a descendant of k has a parent");
            }
        }
        u_rows[row_start..].sort_unstable();
        for &j in &u_rows[row_start..] {
            l_cols[j].push(k);
        }
        u_col_ptr[k + 1] = u_rows.len();
    }
    let mut l_col_ptr = vec![0usize; n + 1];
    let mut l_rows = Vec::with_capacity(u_rows.len());
    for (j, rows) in l_cols.into_iter().enumerate() {
        l_rows.extend(rows);
        l_col_ptr[j + 1] = l_rows.len();
    }

    // Parents always have larger indices, so one forward sweep yields the
    // longest path from the leaves.
    let mut level = vec![0usize; n];
    for v in 0..n {
        if let Some(p) = parent[v] {
            level[p] = level[p].max(level[v] + 1);
        }
    }
    let depth = level.iter().max().map_or(0, |m| m + 1);
    let mut schedule = vec![Vec::new(); depth];
    for (v, &l) in level.iter().enumerate() {
        schedule[l].push(v);
    }

    Ok(SymbolicStructure {
        n,
        permutation: perm.clone(),
        parent,
        level,
        schedule,
        l_col_ptr,
        l_rows,
        u_col_ptr,
        u_rows,
        input_lower_nnz,
    })
}

impl SymbolicStructure {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }

    /// Elimination-tree parent of a vertex (permuted index); `None` for roots.
    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn level(&self, v: usize) -> usize {
        self.level[v]
    }

    /// Vertices grouped by level; all vertices of one level are independent.
    pub fn schedule(&self) -> &[Vec<usize>] {
        &self.schedule
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&v| self.parent[v].is_none())
    }

    /// Strictly-lower rows of column `j` of L.
    pub fn l_column(&self, j: usize) -> &[usize] {
        &self.l_rows[self.l_col_ptr[j]..self.l_col_ptr[j + 1]]
    }

    /// Strictly-upper rows of column `k` of U.
    pub fn u_column(&self, k: usize) -> &[usize] {
        &self.u_rows[self.u_col_ptr[k]..self.u_col_ptr[k + 1]]
    }

    /// Nonzeros of strictly-lower L.
    pub fn l_nnz(&self) -> usize {
        self.l_rows.len()
    }

    /// Entries of L that are zero in the permuted input pattern.
    pub fn fill_in_count(&self) -> usize {
        self.l_nnz() - self.input_lower_nnz
    }

    /// Whether the permuted position `(row, col)` belongs to the pattern of `L + U`.
    pub fn contains(&self, row: usize, col: usize) -> bool {
        use std::cmp::Ordering::*;
        match row.cmp(&col) {
            Equal => true,
            Greater => self.l_column(col).binary_search(&row).is_ok(),
            Less => self.u_column(col).binary_search(&row).is_ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::order;

    fn tridiagonal(n: usize) -> SparseSystem {
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSystem::from_triplets(n, t).unwrap()
    }

    /// Dense boolean elimination in a fixed order: reference fill pattern.
    fn dense_pattern(sys: &SparseSystem, perm: &Permutation) -> Vec<Vec<bool>> {
        let n = sys.n();
        let mut g = vec![vec![false; n]; n];
        for (r, c, _) in sys.entries() {
            let (a, b) = (perm.to_ordered(r), perm.to_ordered(c));
            g[a][b] = true;
            g[b][a] = true;
        }
        for k in 0..n {
            let below: Vec<usize> = (k + 1..n).filter(|&i| g[i][k]).collect();
            for &a in &below {
                for &b in &below {
                    g[a][b] = true;
                }
            }
        }
        g
    }

    #[test]
    fn tridiagonal_is_a_chain_without_fill() {
        let n = 7;
        let sym = symbolic_analyze(&tridiagonal(n), &Permutation::identity(n)).unwrap();
        for v in 0..n - 1 {
            assert_eq!(sym.parent(v), Some(v + 1));
        }
        assert_eq!(sym.parent(n - 1), None);
        assert_eq!(sym.fill_in_count(), 0);
        assert_eq!(sym.schedule().len(), n);
    }

    #[test]
    fn diagonal_is_a_forest_of_singletons() {
        let sys = SparseSystem::identity(5).unwrap();
        let sym = symbolic_analyze(&sys, &Permutation::identity(5)).unwrap();
        assert_eq!(sym.roots().count(), 5);
        assert_eq!(sym.schedule().len(), 1);
        assert_eq!(sym.l_nnz(), 0);
    }

    #[test]
    fn arrowhead_hub_first_fills_completely() {
        let n = 6;
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 10.0));
            if i > 0 {
                t.push((0, i, 1.0));
                t.push((i, 0, 1.0));
            }
        }
        let sys = SparseSystem::from_triplets(n, t).unwrap();
        let perm = Permutation::identity(n);
        let sym = symbolic_analyze(&sys, &perm).unwrap();
        let dense = dense_pattern(&sys, &perm);
        for r in 0..n {
            for c in 0..n {
                assert_eq!(sym.contains(r, c), dense[r][c], "({r},{c})");
                assert!(sym.contains(r, c));
            }
        }
        assert_eq!(sym.l_nnz(), n * (n - 1) / 2);

        // Minimum degree puts the hub last: no fill.
        let good = symbolic_analyze(&sys, &order(&sys)).unwrap();
        assert_eq!(good.fill_in_count(), 0);
    }

    #[test]
    fn levels_respect_tree_order() {
        let n = 30;
        let mut t: Vec<_> = (0..n).map(|i| (i, i, 5.0)).collect();
        for i in 0..n {
            let j = (i * 7 + 3) % n;
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        let sys = SparseSystem::from_triplets(n, t).unwrap();
        let perm = order(&sys);
        let sym = symbolic_analyze(&sys, &perm).unwrap();
        let dense = dense_pattern(&sys, &perm);
        for r in 0..n {
            for c in 0..n {
                assert_eq!(sym.contains(r, c), dense[r][c]);
            }
        }
        for v in 0..n {
            if let Some(p) = sym.parent(v) {
                assert!(p > v);
                assert!(sym.level(v) < sym.level(p));
            }
        }
    }
}
