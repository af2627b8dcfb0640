use log::debug;

use super::CompactGraph;
use crate::error::{Error, Result};

/// Symmetric sparse system with the diagonal stored apart from the
/// off-diagonal rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    pub diag: Vec<f64>,
    /// Row `i` lists `(j, a_ij)` for `j != i`, sorted by `j`.
    pub off: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.off.iter().enumerate() {
            out[i] = self.diag[i] * x[i] + row.iter().map(|&(j, a)| a * x[j]).sum::<f64>();
        }
    }

    /// Symmetric, nonpositive off-diagonals, strictly diagonally dominant.
    pub fn check_m_matrix(&self) -> Result<()> {
        let broken = |i: usize, what: &str| Err(Error::NotMMatrix(format!("row {i}: {what}")));
        for (i, row) in self.off.iter().enumerate() {
            let mut off_sum = 0.0;
            for &(j, a) in row {
                if j == i || a > 0.0 {
                    return broken(i, "positive or diagonal entry in off-diagonal part");
                }
                if self.off[j].binary_search_by_key(&i, |&(c, _)| c).map(|k| self.off[j][k].1) != Ok(a) {
                    return broken(i, "not symmetric");
                }
                off_sum -= a;
            }
            if !(self.diag[i] > off_sum) {
                return broken(i, "not strictly diagonally dominant");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Stop once `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    /// Defaults to ten times the number of unknowns.
    pub max_iters: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_iters: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkerSolution {
    pub x: Vec<f64>,
    /// `1` iff `x >= 0.5`.
    pub labels: Vec<u8>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient on the graph's system, started
/// from the unary-only minimiser.
pub fn solve(graph: &CompactGraph, options: &SolveOptions) -> Result<WalkerSolution> {
    if !(options.tol.is_finite() && options.tol > 0.0) {
        return Err(Error::OutOfRange { name: "tol", value: options.tol, range: "(0, inf)" });
    }
    let sys = graph.system();
    sys.check_m_matrix()?;
    let n = sys.len();
    let max_iters = options.max_iters.unwrap_or(10 * n);
    let b_norm = dot(&sys.rhs, &sys.rhs).sqrt();

    let (mut x, iterations, residual) = if b_norm == 0.0 {
        (vec![0.0; n], 0, 0.0)
    } else {
        let mut x = graph.unary_guess();
        let mut ap = vec![0.0; n];
        sys.matvec(&x, &mut ap);
        let mut r: Vec<f64> = sys.rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut rel = dot(&r, &r).sqrt() / b_norm;
        let mut it = 0;
        while rel > options.tol {
            if it == max_iters {
                return Err(Error::NotConverged { iterations: it, residual: rel });
            }
            sys.matvec(&p, &mut ap);
            let step = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
                z[i] = r[i] / sys.diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            rel = dot(&r, &r).sqrt() / b_norm;
            it += 1;
        }
        (x, it, rel)
    };

    // The exact minimiser lies in [0, 1]; anything beyond is solver error.
    let overshoot = x.iter().map(|&v| (-v).max(v - 1.0)).fold(0.0, f64::max);
    if overshoot > 1e-6 {
        return Err(Error::NotConverged { iterations, residual: overshoot });
    }
    for v in &mut x {
        *v = v.clamp(0.0, 1.0);
    }
    debug!("walker: {n} unknowns, {iterations} iterations, relative residual {residual:.3e}");
    let labels = x.iter().map(|&v| u8::from(v >= 0.5)).collect();
    Ok(WalkerSolution { x, labels, iterations, residual })
}
