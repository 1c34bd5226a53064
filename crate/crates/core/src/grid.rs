//! Uniform 1D mesh with Dirichlet-eliminated interior nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::BandedMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid domain: need a < b and n >= 3 (got a={a}, b={b}, n={n})")]
    InvalidDomain { a: f64, b: f64, n: usize },
}

/// Interior nodes `x_i = a + i h`, `i = 1..=n`, with `h = (b - a)/(n + 1)`.
/// Boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, GridError> {
        if !(a < b) || n < 3 || !a.is_finite() || !b.is_finite() {
            return Err(GridError::InvalidDomain { a, b, n });
        }
        Ok(Self {
            a,
            b,
            n,
            h: (b - a) / (n as f64 + 1.0),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node `i` for `i` in `0..n` (zero-based interior index).
    pub fn node(&self, i: usize) -> f64 {
        self.a + (i as f64 + 1.0) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.node(i))).collect()
    }

    /// Index map of the reflection `x -> a + b - x`.
    pub fn reflect_index(&self, i: usize) -> usize {
        self.n - 1 - i
    }

    pub fn reflect(&self, field: &[f64]) -> Vec<f64> {
        field.iter().rev().copied().collect()
    }
}

/// Builds the grid; see [`Grid::new`].
pub fn build_grid(a: f64, b: f64, n: usize) -> Result<Grid, GridError> {
    Grid::new(a, b, n)
}

/// Second-order central difference matrix for `-Δ` with zero Dirichlet data.
pub fn discrete_laplacian(grid: &Grid) -> BandedMatrix {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut a = BandedMatrix::zeros(n, 1, 1);
    for i in 0..n {
        a.set(i, i, 2.0 * inv_h2);
        if i > 0 {
            a.set(i, i - 1, -inv_h2);
        }
        if i + 1 < n {
            a.set(i, i + 1, -inv_h2);
        }
    }
    a
}

/// Applies the discrete `-Δ` without assembling a matrix.
pub fn apply_laplacian(grid: &Grid, x: &[f64]) -> Vec<f64> {
    let n = grid.n();
    debug_assert_eq!(x.len(), n);
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] } else { 0.0 };
            (2.0 * x[i] - left - right) * inv_h2
        })
        .collect()
}

/// Discrete L² norm (rectangle rule with the implicit zero boundary) and sup norm.
pub fn norms(field: &[f64], grid: &Grid) -> (f64, f64) {
    debug_assert_eq!(field.len(), grid.n());
    (l2_norm(field, grid), sup_norm(field))
}

pub fn l2_norm(field: &[f64], grid: &Grid) -> f64 {
    (grid.h() * field.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn sup_norm(field: &[f64]) -> f64 {
    field.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_node_grid() {
        let g = build_grid(-0.5, 0.5, 3).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.nodes(), vec![-0.25, 0.0, 0.25]);
    }

    #[test]
    fn fine_grid_spacing() {
        let g = build_grid(-0.5, 0.5, 511).unwrap();
        assert_eq!(g.h(), 1.0 / 512.0);
        assert!((g.node(0) - (-0.5 + 1.0 / 512.0)).abs() < 1e-15);
        assert!((g.node(510) - (0.5 - 1.0 / 512.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(matches!(
            build_grid(0.5, -0.5, 10),
            Err(GridError::InvalidDomain { .. })
        ));
        assert!(build_grid(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn laplacian_entries() {
        let g = build_grid(-0.5, 0.5, 3).unwrap();
        let a = discrete_laplacian(&g);
        assert_eq!(a.get(0, 0), 32.0);
        assert_eq!(a.get(1, 0), -16.0);
        assert_eq!(a.get(1, 2), -16.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![16.0, 0.0, 16.0]);
        assert_eq!(apply_laplacian(&g, &[1.0, 1.0, 1.0]), vec![16.0, 0.0, 16.0]);
    }

    #[test]
    fn laplacian_is_spd() {
        for n in [3, 64, 512] {
            let g = build_grid(-0.5, 0.5, n).unwrap();
            assert!(discrete_laplacian(&g).cholesky().is_ok(), "n = {n}");
        }
    }

    #[test]
    fn norm_values() {
        let g = build_grid(-0.5, 0.5, 3).unwrap();
        assert_eq!(norms(&[0.0; 3], &g), (0.0, 0.0));
        let (l2, sup) = norms(&[1.0; 3], &g);
        assert!((l2 - 0.75_f64.sqrt()).abs() < 1e-15);
        assert_eq!(sup, 1.0);

        let g = build_grid(-0.5, 0.5, 511).unwrap();
        let s = g.sample(|x| (std::f64::consts::PI * (x + 0.5)).sin());
        let (l2, _) = norms(&s, &g);
        assert!((l2 - 0.5_f64.sqrt()).abs() < 1e-4);
    }
}
