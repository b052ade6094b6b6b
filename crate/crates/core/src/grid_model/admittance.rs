use num_complex::Complex64;

use super::{BusBranchGraph, GridModelError};

/// Mutual terms contributed by one in-service branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    /// Position of the branch in the graph.
    pub branch: usize,
    /// Bus positions of the two ends.
    pub from: usize,
    pub to: usize,
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
}

/// Nodal admittance in graph form: one self term per bus, one two-port per
/// in-service branch. Parallel branches keep separate mutual terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    pub self_terms: Vec<Complex64>,
    pub branches: Vec<BranchAdmittance>,
}

/// Builds the admittance structure of the in-service network.
pub fn build_admittance(g: &BusBranchGraph) -> Result<Admittance, GridModelError> {
    let mut self_terms: Vec<Complex64> = g
        .buses()
        .iter()
        .map(|b| Complex64::new(b.g_shunt, b.b_shunt))
        .collect();
    let mut branches = Vec::new();
    for (k, br) in g.branches().iter().enumerate() {
        if !br.in_service() {
            continue;
        }
        if br.x == 0.0 {
            return Err(GridModelError::ZeroReactance(br.id.to_string()));
        }
        let from = g.bus_position(br.from).ok_or(GridModelError::DanglingBranch { branch: br.id, bus: br.from })?;
        let to = g.bus_position(br.to).ok_or(GridModelError::DanglingBranch { branch: br.id, bus: br.to })?;
        let [y_ff, y_ft, y_tf, y_tt] = br.admittances();
        self_terms[from] += y_ff;
        self_terms[to] += y_tt;
        branches.push(BranchAdmittance { branch: k, from, to, y_ff, y_ft, y_tf, y_tt });
    }
    Ok(Admittance { self_terms, branches })
}

impl Admittance {
    pub fn n(&self) -> usize {
        self.self_terms.len()
    }

    /// Nodal currents `I = Y·V`.
    pub fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut i: Vec<Complex64> = self.self_terms.iter().zip(v).map(|(y, v)| y * v).collect();
        for b in &self.branches {
            i[b.from] += b.y_ft * v[b.to];
            i[b.to] += b.y_tf * v[b.from];
        }
        i
    }

    /// Complex power injections `S_i = V_i · conj(I_i)`.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.currents(v)
            .into_iter()
            .zip(v)
            .map(|(i, v)| v * i.conj())
            .collect()
    }

    /// Complex power leaving each end of the branch: `(S_from, S_to)`.
    pub fn flow(&self, b: &BranchAdmittance, v: &[Complex64]) -> (Complex64, Complex64) {
        let (vf, vt) = (v[b.from], v[b.to]);
        let s_f = vf * (b.y_ff * vf + b.y_ft * vt).conj();
        let s_t = vt * (b.y_tf * vf + b.y_tt * vt).conj();
        (s_f, s_t)
    }

    /// Summed `(row, col, value)` entries of the nodal matrix.
    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out: Vec<(usize, usize, Complex64)> = self
            .self_terms
            .iter()
            .enumerate()
            .map(|(i, &y)| (i, i, y))
            .collect();
        for b in &self.branches {
            out.push((b.from, b.to, b.y_ft));
            out.push((b.to, b.from, b.y_tf));
        }
        out.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(out.len());
        for (r, c, y) in out {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += y,
                _ => merged.push((r, c, y)),
            }
        }
        merged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{Branch, BranchStatus, Bus, BusType, VoltageBand};

    fn two_bus(status: BranchStatus, shunt: f64) -> BusBranchGraph {
        let mut b2 = Bus::new(2, BusType::PQ);
        b2.b_shunt = shunt;
        let mut br = Branch::new(1, 1, 2, 0.0, 0.1, 0.0);
        br.status = status;
        BusBranchGraph::new(100.0, VoltageBand::default(), vec![Bus::new(1, BusType::Slack), b2], vec![br], vec![]).unwrap()
    }

    #[test]
    fn single_lossless_branch() {
        let y = build_admittance(&two_bus(BranchStatus::In, 0.0)).unwrap();
        assert!((y.self_terms[0] - Complex64::new(0.0, -10.0)).norm() < 1e-12);
        assert!((y.branches[0].y_ft - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        let with_shunt = build_admittance(&two_bus(BranchStatus::In, 0.3)).unwrap();
        assert!((with_shunt.self_terms[1] - Complex64::new(0.0, -9.7)).norm() < 1e-12);
    }

    #[test]
    fn out_of_service_branch_leaves_only_shunts() {
        let y = build_admittance(&two_bus(BranchStatus::Out, 0.3)).unwrap();
        assert!(y.branches.is_empty());
        assert_eq!(y.self_terms, vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.3)]);
    }

    #[test]
    fn zero_reactance_rejected_with_branch_id() {
        let mut br = Branch::new(7, 1, 2, 0.01, 0.0, 0.0);
        br.status = BranchStatus::In;
        let g = BusBranchGraph::new(
            100.0,
            VoltageBand::default(),
            vec![Bus::new(1, BusType::Slack), Bus::new(2, BusType::PQ)],
            vec![br],
            vec![],
        )
        .unwrap();
        assert_eq!(build_admittance(&g).unwrap_err(), GridModelError::ZeroReactance("7".into()));
    }

    #[test]
    fn off_nominal_tap_breaks_value_symmetry_only() {
        let mut br = Branch::new(1, 1, 2, 0.01, 0.1, 0.02);
        br.tap = 0.95;
        let g = BusBranchGraph::new(
            100.0,
            VoltageBand::default(),
            vec![Bus::new(1, BusType::Slack), Bus::new(2, BusType::PQ)],
            vec![br],
            vec![],
        )
        .unwrap();
        let t = build_admittance(&g).unwrap().triplets();
        let pattern: Vec<(usize, usize)> = t.iter().map(|&(r, c, _)| (r, c)).collect();
        assert_eq!(pattern, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(t[1].2, t[2].2);
        assert_ne!(t[0].2, t[3].2);
    }
}
