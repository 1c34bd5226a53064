//! Weighted Dirichlet eigenproblem `A φ = λ diag(m) φ` on the grid.
//!
//! The generalized problem is symmetrized with `diag(m)^{-1/2}`, which keeps it
//! tridiagonal. Eigenvalues come from Sturm-sequence bisection, eigenvectors
//! from inverse iteration with a pivot-guarded tridiagonal solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{discrete_laplacian, sup_norm, Grid};

pub const DEFAULT_EIGEN_COUNT: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("weight must be strictly positive at every interior node (node {node}: {value})")]
    NonPositiveWeight { node: usize, value: f64 },
    #[error("requested {k} eigenpairs from a problem of dimension {n}")]
    TooManyEigenpairs { k: usize, n: usize },
    #[error("weight has length {got}, grid has {expected} nodes")]
    WeightLength { expected: usize, got: usize },
    #[error("inverse iteration stalled for eigenvalue {index} (relative residual {residual:e})")]
    ConvergenceFailure { index: usize, residual: f64 },
}

/// Eigenvalue with its sup-normalized nodal eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Symmetric tridiagonal matrix: `diag[i]`, `off[i]` couples `i` and `i + 1`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn sturm_count(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let coupling = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] / q };
            q = self.diag[i] - x - coupling;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue (zero-based) by bisection.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let span = hi - lo;
        lo -= 1e-12 * span.abs() + f64::MIN_POSITIVE;
        hi += 1e-12 * span.abs() + f64::MIN_POSITIVE;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Solves `(T - shift I) x = b` with partial pivoting; zero pivots are
    /// replaced by a tiny multiple of the matrix scale.
    fn shifted_solve(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let scale = self
            .diag
            .iter()
            .chain(self.off.iter())
            .fold(shift.abs(), |a, v| a.max(v.abs()));
        let guard = f64::EPSILON * scale;
        // rows stored as (c0, c1, c2) for columns (k, k+1, k+2) after elimination
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut up: Vec<f64> = self.off.clone();
        up.push(0.0);
        let mut up2 = vec![0.0; n];
        let mut lo: Vec<f64> = self.off.clone();
        let mut rhs = b.to_vec();
        for k in 0..n.saturating_sub(1) {
            if lo[k].abs() > d[k].abs() {
                // swap rows k and k + 1
                let (a0, a1, a2) = (d[k], up[k], up2[k]);
                d[k] = lo[k];
                up[k] = d[k + 1];
                up2[k] = up[k + 1];
                lo[k] = a0;
                d[k + 1] = a1;
                up[k + 1] = a2;
                rhs.swap(k, k + 1);
            }
            if d[k].abs() < guard {
                d[k] = guard;
            }
            let l = lo[k] / d[k];
            d[k + 1] -= l * up[k];
            up[k + 1] -= l * up2[k];
            rhs[k + 1] -= l * rhs[k];
        }
        if d[n - 1].abs() < guard {
            d[n - 1] = guard;
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = rhs[k];
            if k + 1 < n {
                s -= up[k] * x[k + 1];
            }
            if k + 2 < n {
                s -= up2[k] * x[k + 2];
            }
            x[k] = s / d[k];
        }
        x
    }
}

fn symmetrized(grid: &Grid, m: &[f64]) -> SymTridiagonal {
    let a = discrete_laplacian(grid);
    let n = grid.n();
    let sq: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
    SymTridiagonal {
        diag: (0..n).map(|i| a.get(i, i) / m[i]).collect(),
        off: (0..n - 1)
            .map(|i| a.get(i, i + 1) / (sq[i] * sq[i + 1]))
            .collect(),
    }
}

fn check_weight(grid: &Grid, m: &[f64]) -> Result<(), EigenError> {
    if m.len() != grid.n() {
        return Err(EigenError::WeightLength {
            expected: grid.n(),
            got: m.len(),
        });
    }
    if let Some((node, &value)) = m.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(EigenError::NonPositiveWeight { node, value });
    }
    Ok(())
}

/// The `k` smallest eigenvalues of `A φ = λ diag(m) φ`, ascending.
pub fn eigenvalues_weighted(grid: &Grid, m: &[f64], k: usize) -> Result<Vec<f64>, EigenError> {
    check_weight(grid, m)?;
    if k > grid.n() {
        return Err(EigenError::TooManyEigenpairs { k, n: grid.n() });
    }
    let t = symmetrized(grid, m);
    Ok((0..k).map(|j| t.eigenvalue(j)).collect())
}

/// The `k` smallest eigenpairs, ascending, with vectors scaled to sup-norm 1
/// and signed so the first interior node is positive (`φ'(a) > 0`).
pub fn eigen_weighted(grid: &Grid, m: &[f64], k: usize) -> Result<Vec<EigenPair>, EigenError> {
    check_weight(grid, m)?;
    let n = grid.n();
    if k > n {
        return Err(EigenError::TooManyEigenpairs { k, n });
    }
    let t = symmetrized(grid, m);
    let tnorm = t
        .diag
        .iter()
        .zip(t.off.iter().chain(std::iter::once(&0.0)))
        .map(|(d, o)| d.abs() + 2.0 * o.abs())
        .fold(0.0, f64::max);
    let inv_sqrt_m: Vec<f64> = m.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut pairs = Vec::with_capacity(k);
    for j in 0..k {
        let value = t.eigenvalue(j);
        // deterministic start vector with components along every mode
        let mut y: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 + j * 3) % 11) as f64).collect();
        let mut residual = f64::INFINITY;
        for _ in 0..8 {
            y = t.shifted_solve(value, &y);
            let s = sup_norm(&y);
            y.iter_mut().for_each(|v| *v /= s);
            let ty = t.matvec(&y);
            residual = ty
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - value * b).abs())
                .fold(0.0, f64::max)
                / tnorm;
            if residual < 1e-13 {
                break;
            }
        }
        if residual > 1e-9 {
            return Err(EigenError::ConvergenceFailure { index: j, residual });
        }
        let mut phi: Vec<f64> = y.iter().zip(&inv_sqrt_m).map(|(a, b)| a * b).collect();
        let s = sup_norm(&phi);
        let sign = if phi[0] < 0.0 { -1.0 } else { 1.0 };
        phi.iter_mut().for_each(|v| *v *= sign / s);
        pairs.push(EigenPair { value, vector: phi });
    }
    Ok(pairs)
}

/// Principal eigenvalue `λ₁(m)`.
pub fn principal_eigenvalue(grid: &Grid, m: &[f64]) -> Result<f64, EigenError> {
    Ok(eigenvalues_weighted(grid, m, 1)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    fn closed_form(j: usize, n: usize, h: f64) -> f64 {
        2.0 * (1.0 - (j as f64 * PI / (n as f64 + 1.0)).cos()) / (h * h)
    }

    #[test]
    fn three_node_eigenvalues() {
        let g = build_grid(-0.5, 0.5, 3).unwrap();
        let pairs = eigen_weighted(&g, &[1.0; 3], 3).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let exact = closed_form(j + 1, 3, 0.25);
            assert!((p.value - exact).abs() < 1e-12 * exact);
        }
        assert!((pairs[0].value - 9.372583002030478).abs() < 1e-10);
    }

    #[test]
    fn continuum_limits() {
        let g = build_grid(-0.5, 0.5, 511).unwrap();
        let pairs = eigen_weighted(&g, &vec![1.0; 511], 3).unwrap();
        for (p, exact) in pairs.iter().zip([9.8696, 39.4784, 88.8264]) {
            assert!((p.value - exact).abs() < 1e-3 * exact, "{} vs {exact}", p.value);
        }
    }

    #[test]
    fn closed_form_agreement() {
        for n in [3usize, 17, 128, 511, 1024] {
            let g = build_grid(0.0, 1.0, n).unwrap();
            let k = 10.min(n);
            let vals = eigenvalues_weighted(&g, &vec![1.0; n], k).unwrap();
            for (j, v) in vals.iter().enumerate() {
                let exact = closed_form(j + 1, n, g.h());
                assert!((v - exact).abs() <= 1e-10 * exact, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn vectors_are_normalized_and_signed() {
        let g = build_grid(-0.5, 0.5, 101).unwrap();
        let m = g.sample(|x| 1.0 + 0.5 * x);
        let pairs = eigen_weighted(&g, &m, DEFAULT_EIGEN_COUNT).unwrap();
        for w in pairs.windows(2) {
            assert!(w[0].value < w[1].value);
        }
        for p in &pairs {
            assert!((sup_norm(&p.vector) - 1.0).abs() < 1e-12);
            assert!(p.vector[0] > 0.0);
        }
        assert!(pairs[0].vector.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn weight_scaling() {
        let g = build_grid(-0.5, 0.5, 63).unwrap();
        let m = g.sample(|x| 2.0 + x.sin());
        let m3: Vec<f64> = m.iter().map(|v| 3.0 * v).collect();
        let p = eigen_weighted(&g, &m, 4).unwrap();
        let q = eigen_weighted(&g, &m3, 4).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a.value / 3.0 - b.value).abs() < 1e-10 * a.value);
            for (x, y) in a.vector.iter().zip(&b.vector) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = build_grid(-0.5, 0.5, 5).unwrap();
        assert!(matches!(
            eigen_weighted(&g, &[1.0, 1.0, 0.0, 1.0, 1.0], 2),
            Err(EigenError::NonPositiveWeight { node: 2, .. })
        ));
        assert!(matches!(
            eigen_weighted(&g, &[1.0; 5], 6),
            Err(EigenError::TooManyEigenpairs { .. })
        ));
    }
}
