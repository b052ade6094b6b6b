use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{FactorError, Result, SparseSystem};

/// A symmetric reordering `P·A·Pᵀ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    /// `to_ordered[original] = position in the elimination order`.
    to_ordered: Vec<usize>,
    /// `to_original[position] = original index`.
    to_original: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            to_ordered: (0..n).collect(),
            to_original: (0..n).collect(),
        }
    }

    /// Builds a permutation from an elimination order (`order[k]` is the
    /// original index eliminated k-th).
    pub fn from_elimination_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut to_ordered = vec![usize::MAX; n];
        for (k, &v) in order.iter().enumerate() {
            if v >= n || to_ordered[v] != usize::MAX {
                return Err(FactorError::InvalidPermutation { n });
            }
            to_ordered[v] = k;
        }
        Ok(Self {
            to_ordered,
            to_original: order,
        })
    }

    pub fn len(&self) -> usize {
        self.to_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_original.is_empty()
    }

    pub fn to_ordered(&self, original: usize) -> usize {
        self.to_ordered[original]
    }

    pub fn to_original(&self, ordered: usize) -> usize {
        self.to_original[ordered]
    }

    pub fn elimination_order(&self) -> &[usize] {
        &self.to_original
    }
}

/// Minimum-degree ordering on the pattern of `A + Aᵀ`.
///
/// Eliminates, at every step, the vertex of smallest current degree in the
/// elimination graph (ties go to the smallest original index) and turns its
/// neighbourhood into a clique.
pub fn order(sys: &SparseSystem) -> Permutation {
    let n = sys.n();
    let mut adj: Vec<BTreeSet<usize>> = sys
        .symmetric_adjacency()
        .into_iter()
        .map(|l| l.into_iter().collect())
        .collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut elim = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        elim.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &u in &nbrs {
            queue.insert((adj[u].len(), u));
        }
    }
    Permutation::from_elimination_order(elim).expect("every vertex eliminated once")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fill count by explicit dense boolean elimination, independent of the
    /// elimination-tree machinery.
    fn dense_fill_count(adj: &[Vec<usize>], order: &[usize]) -> usize {
        let n = adj.len();
        let mut g = vec![vec![false; n]; n];
        for (v, list) in adj.iter().enumerate() {
            for &u in list {
                g[v][u] = true;
            }
        }
        let mut eliminated = vec![false; n];
        let mut fill = 0;
        for &v in order {
            eliminated[v] = true;
            let nbrs: Vec<usize> = (0..n).filter(|&u| !eliminated[u] && g[v][u]).collect();
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !g[a][b] {
                        g[a][b] = true;
                        g[b][a] = true;
                        fill += 1;
                    }
                }
            }
        }
        fill
    }

    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }

    #[test]
    fn diagonal_gives_identity() {
        let sys = SparseSystem::identity(6).unwrap();
        assert_eq!(order(&sys), Permutation::identity(6));
    }

    #[test]
    fn star_hub_is_eliminated_last_with_zero_fill() {
        // hub = vertex 5, leaves 0..5; the final leaf/hub degree tie goes to the leaf
        let hub = 5;
        let mut t = vec![];
        for v in 0..6 {
            t.push((v, v, 1.0));
        }
        for leaf in 0..5 {
            t.push((hub, leaf, 1.0));
            t.push((leaf, hub, 1.0));
        }
        let sys = SparseSystem::from_triplets(6, t).unwrap();
        let adj = sys.symmetric_adjacency();

        let mut all = vec![];
        permutations(&mut (0..6).collect(), 0, &mut all);
        assert_eq!(all.len(), 720);
        let best = all.iter().map(|p| dense_fill_count(&adj, p)).min().unwrap();
        assert_eq!(best, 0);

        let perm = order(&sys);
        assert_eq!(*perm.elimination_order().last().unwrap(), hub);
        assert_eq!(dense_fill_count(&adj, perm.elimination_order()), best);
    }

    #[test]
    fn invalid_permutation_rejected() {
        assert!(Permutation::from_elimination_order(vec![0, 0]).is_err());
        assert!(Permutation::from_elimination_order(vec![0, 2]).is_err());
    }

    #[test]
    fn beats_natural_order_on_random_patterns() {
        let seeds = 100;
        let mut wins = 0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 50;
            let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
            for _ in 0..80 {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                t.push((a, b, 1.0));
                t.push((b, a, 1.0));
            }
            let sys = SparseSystem::from_triplets(n, t).unwrap();
            let adj = sys.symmetric_adjacency();
            let natural: Vec<usize> = (0..n).collect();
            let md = order(&sys);
            if dense_fill_count(&adj, md.elimination_order()) <= dense_fill_count(&adj, &natural) {
                wins += 1;
            }
        }
        assert!(wins * 100 >= 95 * seeds, "only {wins}/{seeds} seeds");
    }
}
