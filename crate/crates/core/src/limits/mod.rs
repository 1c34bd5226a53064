//! Solvers for the problems reached in the full cross-diffusion limit and
//! in the large-`λ` limit of the small-coexistence curve.
//!
//! All grid problems have the semilinear form `A x = g(x)` with `A` the
//! discrete `-Δ`; they share [`Semilinear`] and the Newton wrapper in this
//! module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::BandedMatrix;
use crate::eigen::EigenError;
use crate::grid::{apply_laplacian, discrete_laplacian, sup_norm, Grid};
use crate::model::ModelError;
use crate::newton::{newton_solve, NewtonConfig, NewtonError, NonlinearSystem};

mod ls2;
mod ode;
mod scalar;
mod shooting;
mod sublinear;
mod zj;

pub use ls2::{grid_solve_ls2, grid_solve_ls2_from, ls2_predictor, ls2_residual, Reaction};
pub use ode::{Dopri5, OdeStats};
pub use scalar::{limit_u, solve_logistic, solve_logistic_from, solve_z0, solve_z0_from, u_from_z, u_limit_residual};
pub use shooting::{shoot_ls2, ShootingSolution};
pub use sublinear::{solve_sublinear, solve_sublinear_traced, MonotoneRun, SublinearKind};
pub use zj::{solve_zj, solve_zj_from, zj_sandwich, SandwichReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("no positive solution at λ = {lambda} (threshold {threshold})")]
    NoPositiveSolution { lambda: f64, threshold: f64 },
    #[error("no solution with {j} nodal domains at λ = {lambda} (branch starts at {threshold})")]
    NoSolutionInClass { j: usize, lambda: f64, threshold: f64 },
    #[error("monotone iteration stalled after {sweeps} sweeps (gap {gap:e})")]
    IterationStall { sweeps: usize, gap: f64 },
    #[error("slope bisection failed: {0}")]
    BisectionFailure(String),
    #[error("sandwich bound violated at node {node} for s = {s}")]
    SandwichViolation { node: usize, s: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Newton failure: {0}")]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitKind {
    Z0,
    Zeta0,
    Psi,
    Theta,
    U,
    Zj,
    /// Signed solution of the segregation limit equation.
    Ls2,
}

/// A nodal field produced by one of the limit solvers; `param` is `λ` or `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitField {
    pub kind: LimitKind,
    pub param: f64,
    pub values: Vec<f64>,
}

impl LimitField {
    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0)
    }

    /// Number of strict sign changes between consecutive nonzero entries.
    pub fn sign_changes(&self) -> usize {
        sign_changes(&self.values)
    }
}

/// Branch label: the sign of the initial slope `w'(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Coefficients of the segregation limit equation
/// `w'' + λ m w − b₁ w₊² + c₂ w₋² = 0` on `(−ℓ, ℓ)` with constant `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ls2Coeffs {
    pub b1: f64,
    pub c2: f64,
    pub m: f64,
    pub ell: f64,
}

impl Ls2Coeffs {
    /// `j`-th Dirichlet eigenvalue `(jπ/2ℓ)²/m` of the continuous problem.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let k = j as f64 * std::f64::consts::PI / (2.0 * self.ell);
        k * k / self.m
    }

    fn validate(&self) -> Result<(), LimitError> {
        let ok = [self.b1, self.c2, self.m, self.ell].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(LimitError::InvalidInput(format!("coefficients must be positive: {self:?}")))
        }
    }
}

pub(crate) fn sign_changes(x: &[f64]) -> usize {
    let mut last = 0.0;
    let mut count = 0;
    for v in x.iter().filter(|v| **v != 0.0) {
        if last * v < 0.0 {
            count += 1;
        }
        last = *v;
    }
    count
}

pub(crate) fn check_weight(grid: &Grid, m: &[f64]) -> Result<(), LimitError> {
    if m.len() != grid.n() {
        return Err(LimitError::InvalidInput(format!(
            "weight has {} entries, grid has {} nodes",
            m.len(),
            grid.n()
        )));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(LimitError::InvalidInput("weight must be finite and nonnegative".into()));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Err(LimitError::InvalidInput("weight vanishes identically".into()));
    }
    Ok(())
}

/// `A x = g(i, xᵢ)` with Jacobian `A − diag(∂g/∂x)`.
pub(crate) struct Semilinear<'a, G, D, P> {
    pub grid: &'a Grid,
    pub source: G,
    pub slope: D,
    pub admissible: P,
}

impl<G, D, P> NonlinearSystem for Semilinear<'_, G, D, P>
where
    G: Fn(usize, f64) -> f64,
    D: Fn(usize, f64) -> f64,
    P: Fn(&[f64]) -> bool,
{
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut r = apply_laplacian(self.grid, x);
        for (i, ri) in r.iter_mut().enumerate() {
            let g = (self.source)(i, x[i]);
            if !g.is_finite() {
                return Err(ModelError::NegativeDiscriminant { node: i, value: x[i] });
            }
            *ri -= g;
        }
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError> {
        let mut a = discrete_laplacian(self.grid);
        for (i, xi) in x.iter().enumerate() {
            a.add(i, i, -(self.slope)(i, *xi));
        }
        Ok(a)
    }

    fn admissible(&self, x: &[f64]) -> bool {
        (self.admissible)(x)
    }
}

/// Size of the terms cancelled in `A x − g(x)`; sets the attainable residual.
fn term_scale<G: Fn(usize, f64) -> f64>(grid: &Grid, x: &[f64], source: &G) -> f64 {
    let stencil = 4.0 / (grid.h() * grid.h()) * sup_norm(x);
    x.iter()
        .enumerate()
        .map(|(i, v)| source(i, *v).abs())
        .fold(stencil, f64::max)
}

/// Newton on a [`Semilinear`] problem, with the residual target set relative
/// to the size of the solution and polished once more at the end.
pub(crate) fn solve_semilinear<G, D, P>(sys: &Semilinear<'_, G, D, P>, x0: &[f64]) -> Result<Vec<f64>, NewtonError>
where
    G: Fn(usize, f64) -> f64,
    D: Fn(usize, f64) -> f64,
    P: Fn(&[f64]) -> bool,
{
    let tol = |x: &[f64]| {
        let s = term_scale(sys.grid, x, &sys.source);
        (1e-12 * s).min(1e-10).max(2.5e-16 * s).max(1e-300)
    };
    let loose = NewtonConfig::default().with_tol(1e-9 * term_scale(sys.grid, x0, &sys.source).max(1e-300));
    let rough = newton_solve(sys, x0, &loose)?;
    let target = tol(&rough.final_state);
    let cfg = NewtonConfig::default().with_tol(target);
    match newton_solve(sys, &rough.final_state, &cfg) {
        Ok(r) => Ok(r.final_state),
        // already at the roundoff floor of the stencil
        Err(_) if rough.final_residual <= target.max(1e-12 * term_scale(sys.grid, &rough.final_state, &sys.source)) => {
            Ok(rough.final_state)
        }
        Err(e) => Err(e),
    }
}

/// Predictor `t·φ₁` for a branch bifurcating from zero at the principal
/// eigenvalue, where the nonlinearity is `λ m x − q x² + O(x³)`.
pub(crate) fn principal_predictor(lam1: f64, lambda: f64, phi: &[f64], m: &[f64], q: &[f64]) -> Vec<f64> {
    let mphi2: f64 = phi.iter().zip(m).map(|(f, w)| w * f * f).sum();
    let qphi3: f64 = phi.iter().zip(q).map(|(f, w)| w * f * f * f).sum();
    let t = (lambda - lam1) * mphi2 / qphi3;
    phi.iter().map(|f| t * f).collect()
}

/// Natural continuation in `λ` from just above the onset `lam1` up to
/// `target`, with steps geometric in `λ − lam1`. The first predictor scales
/// the start linearly in the distance to onset, later ones are secants.
pub(crate) fn continue_in_lambda(
    lam1: f64,
    target: f64,
    start: impl Fn(f64) -> Vec<f64>,
    solve: impl Fn(f64, &[f64]) -> Result<Vec<f64>, LimitError>,
) -> Result<Vec<f64>, LimitError> {
    let mut mu = (0.02 * lam1).min(target - lam1);
    let mut x = solve(lam1 + mu, &start(lam1 + mu))?;
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut ratio: f64 = 1.25;
    let goal = target - lam1;
    while mu < goal {
        let next = if mu * ratio >= goal { goal } else { mu * ratio };
        let guess: Vec<f64> = match &prev {
            Some((mp, xp)) => {
                let t = (next - mu) / (mu - mp);
                x.iter().zip(xp).map(|(a, b)| a + t * (a - b)).collect()
            }
            None => x.iter().map(|v| v * next / mu).collect(),
        };
        let lam = if next == goal { target } else { lam1 + next };
        match solve(lam, &guess) {
            Ok(y) => {
                prev = Some((mu, std::mem::replace(&mut x, y)));
                mu = next;
                ratio = (ratio * ratio).min(1.5);
            }
            Err(e) => {
                ratio = ratio.sqrt();
                if ratio < 1.0 + 1e-6 {
                    return Err(e);
                }
            }
        }
    }
    Ok(x)
}
