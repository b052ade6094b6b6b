//! Reference implementations for the test suites.
//!
//! Everything here is deliberately naive (dense matrices, breadth-first
//! search, element-by-element loops) and shares no algorithmic code with
//! `ems-core`; only its data types are used.

pub mod fuzz;

use std::collections::VecDeque;

use ems_core::factor_graph::{NumericFactors, SparseSystem};
use ems_core::grid_model::{BusBranchGraph, BusType, DeviceKind, NodeBreakerGraph, StateVector};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Nodal admittance matrix, filled by looping over every bus pair and every
/// branch.
pub fn dense_ybus(g: &BusBranchGraph) -> DMatrix<Complex64> {
    let n = g.buses().len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        let bi = &g.buses()[i];
        for j in 0..n {
            let bj = &g.buses()[j];
            let mut acc = Complex64::new(0.0, 0.0);
            if i == j {
                acc += Complex64::new(bi.g_shunt, bi.b_shunt);
            }
            for br in g.branches().iter().filter(|b| b.in_service()) {
                let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
                let half = Complex64::new(0.0, br.b / 2.0);
                let a = br.tap;
                if i == j {
                    if br.from == bi.id {
                        acc += (ys + half) / (a * a);
                    }
                    if br.to == bi.id {
                        acc += ys + half;
                    }
                } else if (br.from == bi.id && br.to == bj.id) || (br.to == bi.id && br.from == bj.id) {
                    acc -= ys / a;
                }
            }
            y[(i, j)] = acc;
        }
    }
    y
}

/// Complex voltages per bus position (zero on buses missing from `x`).
pub fn phasors(g: &BusBranchGraph, x: &StateVector) -> DVector<Complex64> {
    DVector::from_iterator(
        g.buses().len(),
        g.buses().iter().map(|b| x.get(b.id).map_or(Complex64::new(0.0, 0.0), |(vm, va)| Complex64::from_polar(vm, va))),
    )
}

/// `S = V ∘ conj(Y V)`.
pub fn dense_injections(y: &DMatrix<Complex64>, v: &DVector<Complex64>) -> Vec<Complex64> {
    let i = y * v;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// `B′` of the XB scheme over energized non-slack buses, by bus pairs.
pub fn dense_b_prime(g: &BusBranchGraph) -> DMatrix<f64> {
    let rows: Vec<usize> = g
        .energized_buses()
        .filter(|(_, b)| b.bus_type != BusType::Slack)
        .map(|(p, _)| p)
        .collect();
    let mut m = DMatrix::zeros(rows.len(), rows.len());
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in rows.iter().enumerate() {
            let (bi, bj) = (g.buses()[i].id, g.buses()[j].id);
            for br in g.branches().iter().filter(|b| b.in_service()) {
                let touches_i = br.from == bi || br.to == bi;
                if r == c && touches_i {
                    m[(r, c)] += 1.0 / br.x;
                } else if r != c && touches_i && (br.from == bj || br.to == bj) {
                    m[(r, c)] -= 1.0 / br.x;
                }
            }
        }
    }
    m
}

/// `B″ = −Im(Y)` over energized PQ buses.
pub fn dense_b_double(g: &BusBranchGraph) -> DMatrix<f64> {
    let y = dense_ybus(g);
    let rows: Vec<usize> = g.energized_buses().filter(|(_, b)| b.bus_type == BusType::PQ).map(|(p, _)| p).collect();
    DMatrix::from_fn(rows.len(), rows.len(), |r, c| -y[(rows[r], rows[c])].im)
}

/// Full Newton–Raphson power flow with a central-difference Jacobian on the
/// dense admittance matrix. Returns `None` if it fails to reach `tol`.
pub fn newton_raphson(g: &BusBranchGraph, tol: f64, max_iter: usize) -> Option<StateVector> {
    let y = dense_ybus(g);
    let mut x = StateVector::flat(g);
    let pos: Vec<usize> = x.buses.iter().map(|id| g.bus_position(*id).unwrap()).collect();
    let angle: Vec<usize> = (0..x.len()).filter(|&k| g.buses()[pos[k]].bus_type != BusType::Slack).collect();
    let volt: Vec<usize> = (0..x.len()).filter(|&k| g.buses()[pos[k]].bus_type == BusType::PQ).collect();
    let nu = angle.len() + volt.len();

    let residual = |x: &StateVector| -> DVector<f64> {
        let s = dense_injections(&y, &phasors(g, x));
        let mut f = DVector::zeros(nu);
        for (r, &k) in angle.iter().enumerate() {
            f[r] = s[pos[k]].re - g.buses()[pos[k]].p_inj;
        }
        for (r, &k) in volt.iter().enumerate() {
            f[angle.len() + r] = s[pos[k]].im - g.buses()[pos[k]].q_inj;
        }
        f
    };
    let shift = |x: &mut StateVector, u: usize, d: f64| {
        if u < angle.len() {
            x.va[angle[u]] += d;
        } else {
            x.vm[volt[u - angle.len()]] += d;
        }
    };
    for _ in 0..max_iter {
        let f = residual(&x);
        if f.amax() < tol {
            return Some(x);
        }
        let h = 1e-6;
        let mut jac = DMatrix::zeros(nu, nu);
        for u in 0..nu {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            shift(&mut xp, u, h);
            shift(&mut xm, u, -h);
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(u, &col);
        }
        let dx = jac.lu().solve(&f)?;
        for u in 0..nu {
            shift(&mut x, u, -dx[u]);
        }
    }
    (residual(&x).amax() < tol).then_some(x)
}

/// Dense copy of a sparse system.
pub fn dense(sys: &SparseSystem) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(sys.n(), sys.n());
    for (r, c, v) in sys.entries() {
        m[(r, c)] += v;
    }
    m
}

/// Dense LU (partial pivoting) solve.
pub fn dense_solve(sys: &SparseSystem, b: &[f64]) -> Option<Vec<f64>> {
    dense(sys).lu().solve(&DVector::from_column_slice(b)).map(|x| x.iter().copied().collect())
}

/// Dense LU without pivoting: unit-lower `L` and upper `U` with `L·U = A`.
pub fn dense_lu_no_pivot(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut u = a.clone();
    let mut l = DMatrix::identity(n, n);
    for k in 0..n {
        for i in k + 1..n {
            let f = u[(i, k)] / u[(k, k)];
            l[(i, k)] = f;
            for j in k..n {
                u[(i, j)] -= f * u[(k, j)];
            }
        }
    }
    (l, u)
}

/// `max |(L·U − P·A·Pᵀ)_ij|` over all entries.
pub fn factor_residual(sys: &SparseSystem, fac: &NumericFactors) -> f64 {
    let n = sys.n();
    let perm = fac.symbolic().permutation();
    let mut l = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    for (r, c, v) in fac.lower_entries() {
        l[(r, c)] = v;
    }
    for (r, c, v) in fac.upper_entries() {
        u[(r, c)] = v;
    }
    let mut pap = DMatrix::zeros(n, n);
    for (r, c, v) in sys.entries() {
        pap[(perm.to_ordered(r), perm.to_ordered(c))] += v;
    }
    (l * u - pap).amax()
}

/// Component label (smallest member) per vertex, by breadth-first search.
pub fn bfs_components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = s;
                    queue.push_back(w);
                }
            }
        }
    }
    label
}

/// Member-device sets of the buses a node-breaker model collapses into,
/// sorted. Nodes are joined by closed switches; a device belongs to the bus
/// of every terminal.
pub fn bus_partition(g: &NodeBreakerGraph) -> Vec<Vec<usize>> {
    let edges: Vec<(usize, usize)> = g
        .devices()
        .iter()
        .filter(|d| d.kind.is_switch() && d.switch_status().is_some_and(|s| s.is_closed()))
        .map(|d| (d.terminals[0], d.terminals[1]))
        .collect();
    let label = bfs_components(g.nodes().len(), &edges);
    let mut buses: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (d, dev) in g.devices().iter().enumerate() {
        let mut seen = Vec::new();
        for &n in &dev.terminals {
            if !seen.contains(&label[n]) {
                seen.push(label[n]);
                buses.entry(label[n]).or_default().push(d);
            }
        }
    }
    let mut out: Vec<Vec<usize>> = buses.into_values().collect();
    out.sort();
    out
}

/// Total `(P, Q)` of all loads and generators.
pub fn device_injection_total(g: &NodeBreakerGraph) -> (f64, f64) {
    use ems_core::grid_model::DeviceParams;
    let mut total = (0.0, 0.0);
    for d in g.devices() {
        match d.params {
            DeviceParams::Load { p, q } if d.kind == DeviceKind::Load => {
                total.0 -= p;
                total.1 -= q;
            }
            DeviceParams::Generator { p, q, .. } => {
                total.0 += p;
                total.1 += q;
            }
            _ => {}
        }
    }
    total
}

/// Island label (smallest member position) and energization per bus position.
pub fn islands(g: &BusBranchGraph, skip_branch: Option<usize>) -> (Vec<usize>, Vec<bool>) {
    let edges: Vec<(usize, usize)> = g
        .branches()
        .iter()
        .enumerate()
        .filter(|&(k, b)| b.in_service() && Some(k) != skip_branch)
        .map(|(_, b)| (g.bus_position(b.from).unwrap(), g.bus_position(b.to).unwrap()))
        .collect();
    let label = bfs_components(g.buses().len(), &edges);
    let energized = label
        .iter()
        .map(|&l| (0..label.len()).any(|q| label[q] == l && g.buses()[q].slack_candidate))
        .collect();
    (label, energized)
}

/// Screening of a single-branch outage: `"runnable"` if the ends stay
/// connected; otherwise `"end-point-isolation"` when the side cut off from
/// every slack candidate is one bus, else `"islanding"`.
pub fn screen(g: &BusBranchGraph, k: usize) -> &'static str {
    let (label, energized) = islands(g, Some(k));
    let br = &g.branches()[k];
    let (f, t) = (g.bus_position(br.from).unwrap(), g.bus_position(br.to).unwrap());
    if label[f] == label[t] {
        return "runnable";
    }
    for side in [f, t] {
        if !energized[side] && label.iter().filter(|&&l| l == label[side]).count() == 1 {
            let other = if side == f { t } else { f };
            if energized[other] {
                return "end-point-isolation";
            }
        }
    }
    "islanding"
}
