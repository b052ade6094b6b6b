use super::{FactorError, NumericFactors, Result, SparseSystem};

/// Outcome of a (preconditioned) conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − A·x‖₂ / ‖b‖₂` at exit (0 when `b = 0`).
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient on an SPD system, optionally preconditioned by the LU
/// factors of a nearby matrix. Stops when `‖r‖₂ ≤ tol·‖b‖₂` or after
/// `max_iter` iterations; the latter is reported with `converged = false`.
pub fn pcg_solve(
    sys: &SparseSystem,
    b: &[f64],
    precond: Option<&NumericFactors>,
    tol: f64,
    max_iter: usize,
) -> Result<PcgSolution> {
    let n = sys.n();
    if b.len() != n {
        return Err(FactorError::DimensionMismatch { expected: n, found: b.len() });
    }
    if let Some(m) = precond {
        if m.n() != n {
            return Err(FactorError::DimensionMismatch { expected: n, found: m.n() });
        }
    }
    let apply = |r: &[f64]| -> Result<Vec<f64>> {
        match precond {
            Some(m) => super::solve(m, r),
            None => Ok(r.to_vec()),
        }
    };

    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(PcgSolution { x, iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut z = apply(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;

    for iteration in 1..=max_iter {
        let ap = sys.mul_vec(&p)?;
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(FactorError::Breakdown { iteration });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tol {
            return Ok(PcgSolution { x, iterations: iteration, relative_residual: residual, converged: true });
        }
        z = apply(&r)?;
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgSolution { x, iterations: max_iter, relative_residual: residual, converged: false })
}
