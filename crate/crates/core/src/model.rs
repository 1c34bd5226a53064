//! Parameters, variable transforms and discrete residuals of the stationary
//! SKT system
//!
//! ```text
//! Δ[(1 + αv)u] + u(λm − b₁u − c₁v) = 0,
//! Δ[(1 + αu)v] + v(λm − b₂u − c₂v) = 0,   u = v = 0 on ∂Ω,
//! ```
//!
//! in physical variables `(u, v)` and in the semilinear variables
//! `w = u − v`, `z = (ε + v)u` with `ε = 1/α`. Unknown vectors handed to the
//! solvers interleave the two fields, `[w₀, z₀, w₁, z₁, …]`, which keeps the
//! Jacobian pentadiagonal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::BandedMatrix;
use crate::grid::{apply_laplacian, sup_norm, Grid};
use crate::newton::NonlinearSystem;

/// Smallest admissible recovery discriminant `(w − ε)² + 4z`.
pub const DISCRIMINANT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative discriminant {value:e} at node {node}")]
    NegativeDiscriminant { node: usize, value: f64 },
    #[error("discriminant {value:e} at node {node} is below the floor {DISCRIMINANT_FLOOR:e}")]
    DegenerateDiscriminant { node: usize, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Coefficients of the system together with the sampled resource weight `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub eps: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub m: Vec<f64>,
    pub lambda: f64,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        b1: f64,
        b2: f64,
        c1: f64,
        c2: f64,
        m: Vec<f64>,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(ModelError::InvalidParams(format!("alpha must be >= 0, got {alpha}")));
        }
        for (name, v) in [("b1", b1), ("b2", b2), ("c1", c1), ("c2", c2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(ModelError::InvalidParams("m must be nonnegative and finite".into()));
        }
        if !m.iter().any(|v| *v > 0.0) {
            return Err(ModelError::InvalidParams("m must not vanish identically".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidParams(format!("lambda must be > 0, got {lambda}")));
        }
        let eps = if alpha > 0.0 { 1.0 / alpha } else { f64::INFINITY };
        Ok(Self {
            alpha,
            eps,
            b1,
            b2,
            c1,
            c2,
            m,
            lambda,
        })
    }

    /// Constant weight `m ≡ value` on `grid`.
    pub fn constant_weight(grid: &Grid, value: f64) -> Vec<f64> {
        vec![value; grid.n()]
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            eps: if alpha > 0.0 { 1.0 / alpha } else { f64::INFINITY },
            ..self.clone()
        }
    }

    /// Scaled-variable copy with `ε` set directly (`ε = 0` gives the limit).
    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            alpha: if eps > 0.0 { 1.0 / eps } else { f64::INFINITY },
            ..self.clone()
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<(), ModelError> {
        if self.m.len() != grid.n() {
            return Err(ModelError::LengthMismatch {
                expected: grid.n(),
                got: self.m.len(),
            });
        }
        Ok(())
    }

    /// Weight vector restricted to positive values, as required by the
    /// eigenvalue routines.
    pub fn m_is_positive(&self) -> bool {
        self.m.iter().all(|v| *v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUV {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl StateUV {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn is_positive(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| *x > 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateWZ {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl StateWZ {
    pub fn zeros(n: usize) -> Self {
        Self {
            w: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Interleaved unknown vector `[w₀, z₀, w₁, z₁, …]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.w.iter().zip(&self.z).flat_map(|(w, z)| [*w, *z]).collect()
    }

    pub fn from_vec(x: &[f64]) -> Self {
        Self {
            w: x.iter().step_by(2).copied().collect(),
            z: x.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    /// Scaled variables `(W, Z) = (αw, α²z)`.
    pub fn scaled(&self, alpha: f64) -> StateWZ {
        StateWZ {
            w: self.w.iter().map(|v| alpha * v).collect(),
            z: self.z.iter().map(|v| alpha * alpha * v).collect(),
        }
    }

    /// Inverse of [`StateWZ::scaled`].
    pub fn unscaled(&self, alpha: f64) -> StateWZ {
        StateWZ {
            w: self.w.iter().map(|v| v / alpha).collect(),
            z: self.z.iter().map(|v| v / (alpha * alpha)).collect(),
        }
    }
}

fn discriminant(w: f64, z: f64, eps: f64) -> f64 {
    (w - eps) * (w - eps) + 4.0 * z
}

/// Smallest recovery discriminant over the nodes.
pub fn min_discriminant(state: &StateWZ, eps: f64) -> f64 {
    state
        .w
        .iter()
        .zip(&state.z)
        .map(|(w, z)| discriminant(*w, *z, eps))
        .fold(f64::INFINITY, f64::min)
}

/// Recovers `(u, v)` from `(w, z)`.
pub fn uv_from_wz(state: &StateWZ, eps: f64) -> Result<StateUV, ModelError> {
    let n = state.len();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (i, (w, z)) in state.w.iter().zip(&state.z).enumerate() {
        let d = discriminant(*w, *z, eps);
        if !(d >= 0.0) {
            return Err(ModelError::NegativeDiscriminant { node: i, value: d });
        }
        let r = d.sqrt();
        u.push(0.5 * (r + w - eps));
        v.push(0.5 * (r - w - eps));
    }
    Ok(StateUV { u, v })
}

pub fn wz_from_uv(state: &StateUV, eps: f64) -> StateWZ {
    StateWZ {
        w: state.u.iter().zip(&state.v).map(|(u, v)| u - v).collect(),
        z: state.u.iter().zip(&state.v).map(|(u, v)| (eps + v) * u).collect(),
    }
}

/// Residual of the physical system; `−A` realizes `Δ`.
pub fn residual_uv(p: &ModelParams, s: &StateUV, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let flux_u: Vec<f64> = (0..n).map(|i| (1.0 + p.alpha * s.v[i]) * s.u[i]).collect();
    let flux_v: Vec<f64> = (0..n).map(|i| (1.0 + p.alpha * s.u[i]) * s.v[i]).collect();
    let au = apply_laplacian(grid, &flux_u);
    let av = apply_laplacian(grid, &flux_v);
    let r1 = (0..n)
        .map(|i| {
            let (u, v) = (s.u[i], s.v[i]);
            -au[i] + u * (p.lambda * p.m[i] - p.b1 * u - p.c1 * v)
        })
        .collect();
    let r2 = (0..n)
        .map(|i| {
            let (u, v) = (s.u[i], s.v[i]);
            -av[i] + v * (p.lambda * p.m[i] - p.b2 * u - p.c2 * v)
        })
        .collect();
    (r1, r2)
}

/// Residual of the diffusion-parameter form
/// `Δ[(d + αv)u] + u(m − b₁u − c₁v) = 0` (and its partner), `λ` unused.
pub fn residual_d_uv(p: &ModelParams, d: f64, s: &StateUV, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let flux_u: Vec<f64> = (0..n).map(|i| (d + p.alpha * s.v[i]) * s.u[i]).collect();
    let flux_v: Vec<f64> = (0..n).map(|i| (d + p.alpha * s.u[i]) * s.v[i]).collect();
    let au = apply_laplacian(grid, &flux_u);
    let av = apply_laplacian(grid, &flux_v);
    let r1 = (0..n)
        .map(|i| -au[i] + s.u[i] * (p.m[i] - p.b1 * s.u[i] - p.c1 * s.v[i]))
        .collect();
    let r2 = (0..n)
        .map(|i| -av[i] + s.v[i] * (p.m[i] - p.b2 * s.u[i] - p.c2 * s.v[i]))
        .collect();
    (r1, r2)
}

/// Residual of the semilinear `(w, z)` system.
pub fn residual_wz(p: &ModelParams, s: &StateWZ, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let uv = uv_from_wz(s, p.eps)?;
    let aw = apply_laplacian(grid, &s.w);
    let az = apply_laplacian(grid, &s.z);
    let n = grid.n();
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    for i in 0..n {
        let (u, v) = (uv.u[i], uv.v[i]);
        let lm = p.lambda * p.m[i];
        r1.push(-aw[i] + lm * s.w[i] - u * (p.b1 * u + p.c1 * v) + v * (p.b2 * u + p.c2 * v));
        r2.push(-az[i] + p.eps * u * (lm - p.b1 * u - p.c1 * v));
    }
    Ok((r1, r2))
}

struct Recovery {
    u: f64,
    v: f64,
    u_w: f64,
    u_z: f64,
    v_w: f64,
    v_z: f64,
}

fn recovery(w: f64, z: f64, eps: f64, node: usize) -> Result<Recovery, ModelError> {
    let d = discriminant(w, z, eps);
    if !(d >= DISCRIMINANT_FLOOR) {
        return Err(ModelError::DegenerateDiscriminant { node, value: d });
    }
    let r = d.sqrt();
    let t = (w - eps) / r;
    Ok(Recovery {
        u: 0.5 * (r + w - eps),
        v: 0.5 * (r - w - eps),
        u_w: 0.5 * (t + 1.0),
        u_z: 1.0 / r,
        v_w: 0.5 * (t - 1.0),
        v_z: 1.0 / r,
    })
}

fn laplacian_blocks(grid: &Grid) -> BandedMatrix {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut j = BandedMatrix::zeros(2 * n, 2, 2);
    for i in 0..n {
        for c in 0..2 {
            let r = 2 * i + c;
            j.set(r, r, -2.0 * inv_h2);
            if i > 0 {
                j.set(r, r - 2, inv_h2);
            }
            if i + 1 < n {
                j.set(r, r + 2, inv_h2);
            }
        }
    }
    j
}

/// Analytic Jacobian of [`residual_wz`] in interleaved ordering.
pub fn jacobian_wz(p: &ModelParams, s: &StateWZ, grid: &Grid) -> Result<BandedMatrix, ModelError> {
    let mut j = laplacian_blocks(grid);
    for i in 0..grid.n() {
        let rc = recovery(s.w[i], s.z[i], p.eps, i)?;
        let (u, v) = (rc.u, rc.v);
        let lm = p.lambda * p.m[i];
        let f1u = -(2.0 * p.b1 * u + (p.c1 - p.b2) * v);
        let f1v = (p.b2 - p.c1) * u + 2.0 * p.c2 * v;
        let f2u = p.eps * (lm - 2.0 * p.b1 * u - p.c1 * v);
        let f2v = -p.eps * p.c1 * u;
        let (rw, rz) = (2 * i, 2 * i + 1);
        j.add(rw, rw, lm + f1u * rc.u_w + f1v * rc.v_w);
        j.add(rw, rz, f1u * rc.u_z + f1v * rc.v_z);
        j.add(rz, rw, f2u * rc.u_w + f2v * rc.v_w);
        j.add(rz, rz, f2u * rc.u_z + f2v * rc.v_z);
    }
    Ok(j)
}

/// Derivative of the interleaved `(w, z)` residual with respect to `λ`.
pub fn lambda_derivative_wz(p: &ModelParams, s: &StateWZ) -> Result<Vec<f64>, ModelError> {
    let uv = uv_from_wz(s, p.eps)?;
    Ok((0..s.len())
        .flat_map(|i| [p.m[i] * s.w[i], p.eps * p.m[i] * uv.u[i]])
        .collect())
}

/// Residual of the scaled system in `(W, Z) = (αw, α²z)`:
///
/// ```text
/// ΔW + λmW − ε{U(b₁U + c₁V) − V(b₂U + c₂V)} = 0,
/// ΔZ + λmU − εU(b₁U + c₁V) = 0,
/// ```
///
/// with `(U, V)` recovered through `√((1 − W)² + 4Z)`. `p.eps` may be zero.
pub fn residual_scaled_wz(
    p: &ModelParams,
    s: &StateWZ,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let big_uv = uv_from_wz(s, 1.0)?;
    let aw = apply_laplacian(grid, &s.w);
    let az = apply_laplacian(grid, &s.z);
    let n = grid.n();
    let eps = p.eps;
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    for i in 0..n {
        let (u, v) = (big_uv.u[i], big_uv.v[i]);
        let lm = p.lambda * p.m[i];
        r1.push(-aw[i] + lm * s.w[i] - eps * (u * (p.b1 * u + p.c1 * v) - v * (p.b2 * u + p.c2 * v)));
        r2.push(-az[i] + lm * u - eps * u * (p.b1 * u + p.c1 * v));
    }
    Ok((r1, r2))
}

/// Jacobian of [`residual_scaled_wz`], assembled from the coefficient table
/// `h₁₁ = 2b₁U + (c₁ − b₂)V`, `h₁₂ = (c₁ − b₂)U − 2c₂V`, `h₂₁ = 2b₁U + c₁V`,
/// `h₂₂ = c₁U` and the recovery derivatives `U_W, U_Z, V_W, V_Z`.
pub fn jacobian_scaled_wz(p: &ModelParams, s: &StateWZ, grid: &Grid) -> Result<BandedMatrix, ModelError> {
    let mut j = laplacian_blocks(grid);
    let eps = p.eps;
    for i in 0..grid.n() {
        let rc = recovery(s.w[i], s.z[i], 1.0, i)?;
        let (u, v) = (rc.u, rc.v);
        let lm = p.lambda * p.m[i];
        let h11 = 2.0 * p.b1 * u + (p.c1 - p.b2) * v;
        let h12 = (p.c1 - p.b2) * u - 2.0 * p.c2 * v;
        let h21 = 2.0 * p.b1 * u + p.c1 * v;
        let h22 = p.c1 * u;
        let (rw, rz) = (2 * i, 2 * i + 1);
        j.add(rw, rw, lm - eps * (h11 * rc.u_w + h12 * rc.v_w));
        j.add(rw, rz, -eps * (h11 * rc.u_z + h12 * rc.v_z));
        j.add(rz, rw, lm * rc.u_w - eps * (h21 * rc.u_w + h22 * rc.v_w));
        j.add(rz, rz, lm * rc.u_z - eps * (h21 * rc.u_z + h22 * rc.v_z));
    }
    Ok(j)
}

/// Residual of the `ε = 0` limit in scaled variables:
/// `ΔW + λmW = 0`, `ΔZ + (λm/2)(√((1 − W)² + 4Z) − 1 + W) = 0`.
pub fn residual_limit_wz(
    p: &ModelParams,
    s: &StateWZ,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    residual_scaled_wz(&p.with_eps(0.0), s, grid)
}

/// Largest magnitude among the individual terms of the `(w, z)` residual,
/// counting the unassembled difference stencil.
/// Used to set scale-aware Newton tolerances.
pub fn term_scale(p: &ModelParams, s: &StateWZ, grid: &Grid) -> Result<f64, ModelError> {
    let uv = uv_from_wz(s, p.eps)?;
    // the difference stencil sums entries of size 2|x|/h², which sets the
    // roundoff floor even when A·x itself is small
    let stencil = 4.0 / (grid.h() * grid.h());
    let mut t = stencil * sup_norm(&s.w).max(sup_norm(&s.z));
    for i in 0..grid.n() {
        let (u, v) = (uv.u[i], uv.v[i]);
        let lm = p.lambda * p.m[i];
        t = t
            .max((lm * s.w[i]).abs())
            .max((u * (p.b1 * u + p.c1 * v)).abs())
            .max((v * (p.b2 * u + p.c2 * v)).abs())
            .max((p.eps * u * lm).abs());
    }
    Ok(t)
}

/// L² a-priori bounds `‖u‖₂ ≤ λ‖m‖₂/b₁`, `‖v‖₂ ≤ λ‖m‖₂/c₂`.
pub fn a_priori_l2_bounds(p: &ModelParams, grid: &Grid) -> (f64, f64) {
    let m2 = crate::grid::l2_norm(&p.m, grid);
    (p.lambda * m2 / p.b1, p.lambda * m2 / p.c2)
}

/// Nodewise bounds `(1 + αv)u ≤ M₁`, `(1 + αu)v ≤ M₂` with
/// `M₁ = λ²‖A⁻¹m²‖∞/(4b₁)` and `M₂ = λ²‖A⁻¹m²‖∞/(4c₂)`.
pub fn product_bounds(p: &ModelParams, grid: &Grid) -> (f64, f64) {
    let a = crate::grid::discrete_laplacian(grid);
    let m2: Vec<f64> = p.m.iter().map(|v| v * v).collect();
    let e = a
        .cholesky()
        .map(|c| c.solve(&m2))
        .expect("discrete Laplacian is positive definite");
    let s = sup_norm(&e) * p.lambda * p.lambda / 4.0;
    (s / p.b1, s / p.c2)
}

/// The `(w, z)` system at fixed parameters as a Newton problem.
#[derive(Debug, Clone)]
pub struct SktSystem<'a> {
    pub params: &'a ModelParams,
    pub grid: &'a Grid,
}

impl<'a> SktSystem<'a> {
    pub fn new(params: &'a ModelParams, grid: &'a Grid) -> Self {
        Self { params, grid }
    }
}

impl NonlinearSystem for SktSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.grid.n()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let (r1, r2) = residual_wz(self.params, &StateWZ::from_vec(x), self.grid)?;
        Ok(r1.into_iter().zip(r2).flat_map(|(a, b)| [a, b]).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError> {
        jacobian_wz(self.params, &StateWZ::from_vec(x), self.grid)
    }

    fn admissible(&self, x: &[f64]) -> bool {
        min_discriminant(&StateWZ::from_vec(x), self.params.eps) >= DISCRIMINANT_FLOOR
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::newton::fd_jacobian_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params_81(grid: &Grid, lambda: f64) -> ModelParams {
        ModelParams::new(20.0, 3.0, 2.0, 2.0, 1.0, vec![1.0; grid.n()], lambda).unwrap()
    }

    fn random_uv(n: usize, rng: &mut impl Rng) -> StateUV {
        StateUV {
            u: (0..n).map(|_| rng.random_range(0.01..2.0)).collect(),
            v: (0..n).map(|_| rng.random_range(0.01..2.0)).collect(),
        }
    }

    #[test]
    fn transform_examples() {
        let s = uv_from_wz(&StateWZ { w: vec![0.0], z: vec![0.0] }, 1.0).unwrap();
        assert_eq!((s.u[0], s.v[0]), (0.0, 0.0));
        let s = uv_from_wz(&StateWZ { w: vec![1.0], z: vec![3.0] }, 0.5).unwrap();
        assert_eq!((s.u[0], s.v[0]), (2.0, 1.0));
        assert!(matches!(
            uv_from_wz(&StateWZ { w: vec![0.0], z: vec![-1.0] }, 0.0),
            Err(ModelError::NegativeDiscriminant { node: 0, .. })
        ));
        let s = wz_from_uv(&StateUV { u: vec![2.0], v: vec![1.0] }, 0.5);
        assert_eq!((s.w[0], s.z[0]), (1.0, 3.0));
        let s = wz_from_uv(&StateUV::zeros(4), 0.05);
        assert!(s.w.iter().chain(&s.z).all(|v| *v == 0.0));
    }

    #[test]
    fn params_validation() {
        let g = build_grid(-0.5, 0.5, 5).unwrap();
        assert!(ModelParams::new(20.0, 0.0, 2.0, 2.0, 1.0, vec![1.0; 5], 10.0).is_err());
        assert!(ModelParams::new(20.0, 3.0, 2.0, 2.0, 1.0, vec![0.0; 5], 10.0).is_err());
        assert!(ModelParams::new(-1.0, 3.0, 2.0, 2.0, 1.0, vec![1.0; 5], 10.0).is_err());
        let p = params_81(&g, 10.0);
        assert!((p.eps * p.alpha - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_state_residuals() {
        let g = build_grid(-0.5, 0.5, 9).unwrap();
        let p = params_81(&g, 20.0);
        let (r1, r2) = residual_uv(&p, &StateUV::zeros(9), &g);
        assert!(r1.iter().chain(&r2).all(|v| *v == 0.0));
        let (r1, r2) = residual_wz(&p, &StateWZ::zeros(9), &g).unwrap();
        assert!(r1.iter().chain(&r2).all(|v| *v == 0.0));
        let (r1, r2) = residual_limit_wz(&p, &StateWZ::zeros(9), &g).unwrap();
        assert!(r1.iter().chain(&r2).all(|v| *v == 0.0));
    }

    #[test]
    fn generic_point_is_finite_and_nonzero() {
        let g = build_grid(-0.5, 0.5, 31).unwrap();
        let p = params_81(&g, 20.0);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let (r1, r2) = residual_uv(&p, &random_uv(31, &mut rng), &g);
        assert!(r1.iter().chain(&r2).all(|v| v.is_finite()));
        assert!(sup_norm(&r1) > 1e-3);
    }

    #[test]
    fn residual_equivalence_identity() {
        let g = build_grid(-0.5, 0.5, 41).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for trial in 0..20 {
            let alpha = [0.5, 20.0, 300.0][trial % 3];
            let p = ModelParams::new(alpha, 3.0, 2.0, 2.0, 1.0, vec![1.0; 41], 37.0).unwrap();
            let uv = random_uv(41, &mut rng);
            let wz = wz_from_uv(&uv, p.eps);
            let (a1, a2) = residual_uv(&p, &uv, &g);
            let (b1, b2) = residual_wz(&p, &wz, &g).unwrap();
            let scale = sup_norm(&a1).max(sup_norm(&a2)).max(1.0) * alpha.max(1.0);
            for i in 0..41 {
                assert!((b1[i] - (a1[i] - a2[i])).abs() < 1e-10 * scale);
                assert!((b2[i] - p.eps * a1[i]).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = build_grid(-0.5, 0.5, 15).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let p = params_81(&g, rng.random_range(5.0..90.0));
            let wz = wz_from_uv(&random_uv(15, &mut rng), p.eps);
            let sys = SktSystem::new(&p, &g);
            let err = fd_jacobian_check(&sys, &wz.to_vec());
            assert!(err < 1e-5, "fd error {err}");
        }
    }

    #[test]
    fn scaled_jacobian_agrees_with_unscaled() {
        let g = build_grid(-0.5, 0.5, 11).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let p = params_81(&g, 33.0);
        let uv = random_uv(11, &mut rng);
        let wz = wz_from_uv(&uv, p.eps);
        let big = wz.scaled(p.alpha);
        let j = jacobian_wz(&p, &wz, &g).unwrap();
        let js = jacobian_scaled_wz(&p, &big, &g).unwrap();
        let e = p.eps;
        let row_scale = [e, e * e];
        for r in 0..22usize {
            for c in r.saturating_sub(2)..(r + 3).min(22) {
                let expect = j.get(r, c) * row_scale[c % 2] / row_scale[r % 2];
                let got = js.get(r, c);
                assert!((got - expect).abs() <= 1e-10 * (1.0 + expect.abs()), "({r},{c}) {got} vs {expect}");
            }
        }
        // residuals: r_wz = diag(ε, ε²) G
        let (a1, a2) = residual_wz(&p, &wz, &g).unwrap();
        let (b1, b2) = residual_scaled_wz(&p, &big, &g).unwrap();
        for i in 0..11 {
            assert!((a1[i] - e * b1[i]).abs() < 1e-10 * (1.0 + a1[i].abs()));
            assert!((a2[i] - e * e * b2[i]).abs() < 1e-10 * (1.0 + a2[i].abs()));
        }
    }

    #[test]
    fn trivial_state_jacobian_is_two_copies() {
        // −A + λM on both diagonal blocks, no coupling
        let g = build_grid(-0.5, 0.5, 7).unwrap();
        let p = params_81(&g, 12.0);
        let j = jacobian_wz(&p, &StateWZ::zeros(7), &g).unwrap();
        for i in 0..7 {
            assert!((j.get(2 * i, 2 * i) - j.get(2 * i + 1, 2 * i + 1)).abs() < 1e-9);
            assert_eq!(j.get(2 * i, 2 * i + 1), 0.0);
            assert!(j.get(2 * i + 1, 2 * i).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_commutes_with_reflection() {
        let g = build_grid(-0.5, 0.5, 21).unwrap();
        let p = ModelParams::new(20.0, 2.0, 1.0, 1.0, 2.0, vec![1.0; 21], 30.0).unwrap();
        let u = g.sample(|x| 0.3 * (0.25 - x * x) + 0.01);
        let wz = wz_from_uv(&StateUV { u: u.clone(), v: u }, p.eps);
        let j = jacobian_wz(&p, &wz, &g).unwrap();
        let n2 = 42;
        let perm = |r: usize| 2 * g.reflect_index(r / 2) + r % 2;
        for r in 0..n2 {
            for c in 0..n2 {
                assert!((j.get(r, c) - j.get(perm(r), perm(c))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_discriminant_rejected() {
        let g = build_grid(-0.5, 0.5, 3).unwrap();
        let p = params_81(&g, 12.0);
        let s = StateWZ { w: vec![p.eps; 3], z: vec![0.0; 3] };
        assert!(matches!(
            jacobian_wz(&p, &s, &g),
            Err(ModelError::DegenerateDiscriminant { .. })
        ));
    }

    proptest! {
        #[test]
        fn transform_round_trip(us in proptest::collection::vec(1e-3f64..5.0, 8),
                                vs in proptest::collection::vec(1e-3f64..5.0, 8),
                                alpha in 0.5f64..1e4) {
            let uv = StateUV { u: us, v: vs };
            let eps = 1.0 / alpha;
            let back = uv_from_wz(&wz_from_uv(&uv, eps), eps).unwrap();
            for i in 0..8 {
                prop_assert!((back.u[i] - uv.u[i]).abs() <= 1e-12 * (1.0 + uv.u[i]));
                prop_assert!((back.v[i] - uv.v[i]).abs() <= 1e-12 * (1.0 + uv.v[i]));
            }
            let wz = wz_from_uv(&uv, eps);
            let again = wz_from_uv(&uv_from_wz(&wz, eps).unwrap(), eps);
            for i in 0..8 {
                prop_assert!((again.w[i] - wz.w[i]).abs() <= 1e-12 * (1.0 + wz.w[i].abs()));
                prop_assert!((again.z[i] - wz.z[i]).abs() <= 1e-12 * (1.0 + wz.z[i].abs()));
            }
        }
    }
}
