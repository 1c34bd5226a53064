//! Pseudo-arclength continuation of `(w, z)` solution branches in `λ`,
//! eigenvalue monitoring, bifurcation localization and branch switching.

mod detect;
mod dmode;
mod switch;

pub use dmode::{from_d_mode, to_d_mode, verify_d_point};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::{BandedError, BandedLu, BandedMatrix};
use crate::eigen::{eigen_weighted, EigenError, DEFAULT_EIGEN_COUNT};
use crate::grid::{norms, sup_norm, Grid};
use crate::limits::solve_z0;
use crate::model::{
    jacobian_wz, lambda_derivative_wz, min_discriminant, residual_wz, term_scale, uv_from_wz,
    ModelError, ModelParams, SktSystem, StateUV, StateWZ, DISCRIMINANT_FLOOR,
};
use crate::newton::{newton_core, newton_solve, NewtonConfig, NewtonError};
use crate::spectrum::{smallest_magnitude_eigenvalues, SpectrumError};

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("seed failure: {0}")]
    SeedFailure(String),
    #[error("step failure at parameter {param} after {halvings} halvings (last ds {ds:e})")]
    StepFailure { param: f64, ds: f64, halvings: usize },
    #[error("branch switch failure: {0}")]
    SwitchFailure(String),
    #[error("trace of branch {} interrupted after {} points: {source}", partial.id, partial.points.len())]
    TraceInterrupted {
        partial: Box<Branch>,
        #[source]
        source: Box<ContinuationError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Linear(#[from] BandedError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub ds_max: f64,
    pub max_halvings: usize,
    pub max_points: usize,
    /// Bisection stops once the bracket is this narrow in the parameter.
    pub loc_tol: f64,
    pub eig_count: usize,
    pub monitor_eigs: bool,
    /// Corrector iteration count at or below which `ds` is doubled.
    pub fast_iters: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds: 0.1,
            ds_max: 0.5,
            max_halvings: 8,
            max_points: 5000,
            loc_tol: 1e-4,
            eig_count: DEFAULT_EIGEN_COUNT,
            monitor_eigs: true,
            fast_iters: 3,
            newton_tol: 1e-10,
            newton_max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eig {
    pub re: f64,
    pub im: f64,
}

impl Eig {
    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2_u: f64,
    pub l2_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamMode {
    Lambda,
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub param: f64,
    pub state: StateWZ,
    pub uv: StateUV,
    pub norms: Norms,
    /// Unit extended tangent, interleaved state followed by the parameter.
    pub tangent: Vec<f64>,
    /// Smallest-magnitude Jacobian eigenvalues, ascending in modulus.
    pub eigs: Vec<Eig>,
    pub det_sign: i8,
    pub arclength: f64,
    pub residual: f64,
    #[serde(skip)]
    pub(crate) eig_basis: Vec<Vec<f64>>,
}

impl BranchPoint {
    pub fn is_positive(&self) -> bool {
        self.uv.is_positive()
    }

    /// Scaled variables `(αw, α²z)`.
    pub fn scaled_state(&self, alpha: f64) -> StateWZ {
        self.state.scaled(alpha)
    }

    pub fn extended(&self) -> Vec<f64> {
        let mut x = self.state.to_vec();
        x.push(self.param);
        x
    }

    pub fn smallest_eig(&self) -> Option<Eig> {
        self.eigs.first().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BifurcationKind {
    SimpleFromTrivial,
    Pitchfork,
    Fold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRecord {
    pub param_at: f64,
    /// Null vector of the Jacobian, interleaved, sup-normalized.
    pub kernel: Vec<f64>,
    pub kind: BifurcationKind,
    pub localization_width: f64,
    /// Net number of eigenvalues that moved to the left half-plane.
    pub crossing_count: i32,
    /// Index of the branch point preceding the crossing.
    pub after_index: usize,
    /// Converged point inside the final bracket.
    pub point: BranchPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRef {
    pub branch: String,
    pub param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    WindowExit,
    MaxPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub mode: ParamMode,
    pub parent: Option<ParentRef>,
    pub points: Vec<BranchPoint>,
    pub bifurcations: Vec<BifurcationRecord>,
    /// First point index at which positivity of `(u, v)` is lost.
    pub first_nonpositive: Option<usize>,
    pub termination: Option<Termination>,
}

impl Branch {
    pub fn new(id: impl Into<String>, mode: ParamMode) -> Self {
        Self {
            id: id.into(),
            mode,
            parent: None,
            points: Vec::new(),
            bifurcations: Vec::new(),
            first_nonpositive: None,
            termination: None,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    fn push(&mut self, pt: BranchPoint) {
        if self.first_nonpositive.is_none() && !pt.is_positive() && sup_norm(&pt.state.z) > 0.0 {
            self.first_nonpositive = Some(self.points.len());
        }
        self.points.push(pt);
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub point: BranchPoint,
    pub ds_used: f64,
    pub ds_next: f64,
    pub iterations: usize,
}

/// Residual tolerance relative to the size of the terms being cancelled,
/// never tighter than a couple of ulps of that size.
fn scaled_tolerance(tol: f64, scale: f64) -> f64 {
    tol.min(1e-12 * scale).max(2.5e-16 * scale).max(1e-20)
}

pub(crate) fn wdot(h: f64, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() - 1;
    h * a[..n].iter().zip(&b[..n]).map(|(x, y)| x * y).sum::<f64>() + a[n] * b[n]
}

pub(crate) fn wnorm(h: f64, a: &[f64]) -> f64 {
    wdot(h, a, a).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `[J f; cᵀ d] [x; y] = [r; s]` by block elimination with one step
/// of iterative refinement.
fn bordered_solve(
    jac: &BandedMatrix,
    lu: &BandedLu,
    f: &[f64],
    c: &[f64],
    d: f64,
    r: &[f64],
    s: f64,
) -> Result<(Vec<f64>, f64), BandedError> {
    let q = lu.solve(f)?;
    let denom = d - dot(c, &q);
    let solve = |r: &[f64], s: f64| -> Result<(Vec<f64>, f64), BandedError> {
        let y = lu.solve(r)?;
        let yl = (s - dot(c, &y)) / denom;
        let x: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a - b * yl).collect();
        Ok((x, yl))
    };
    let (mut x, mut y) = solve(r, s)?;
    let jx = jac.matvec(&x);
    let rr: Vec<f64> = (0..r.len()).map(|i| r[i] - jx[i] - f[i] * y).collect();
    let rs = s - dot(c, &x) - d * y;
    let (dx, dy) = solve(&rr, rs)?;
    x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
    y += dy;
    if !denom.is_finite() || denom == 0.0 || x.iter().any(|v| !v.is_finite()) {
        return Err(BandedError::SingularMatrix {
            column: r.len(),
            pivot: denom,
            scale: 1.0,
        });
    }
    Ok((x, y))
}

/// Continuation driver for the `(w, z)` system with `λ` as parameter.
#[derive(Debug, Clone)]
pub struct Tracer {
    /// Template parameters; the `lambda` field is overwritten per point.
    pub params: ModelParams,
    pub grid: Grid,
    pub cfg: ContinuationConfig,
}

pub(crate) struct Corrected {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl Tracer {
    pub fn new(params: ModelParams, grid: Grid, cfg: ContinuationConfig) -> Result<Self, ModelError> {
        params.check_grid(&grid)?;
        Ok(Self { params, grid, cfg })
    }

    fn at(&self, lambda: f64) -> ModelParams {
        self.params.with_lambda(lambda)
    }

    fn min_step(&self) -> f64 {
        self.cfg.ds.abs() * 0.5f64.powi(self.cfg.max_halvings as i32)
    }

    fn n2(&self) -> usize {
        2 * self.grid.n()
    }

    fn tolerance(&self, x: &[f64]) -> f64 {
        let n2 = self.n2();
        let p = self.at(x[n2]);
        let scale = term_scale(&p, &StateWZ::from_vec(&x[..n2]), &self.grid).unwrap_or(1.0);
        scaled_tolerance(self.cfg.newton_tol, scale)
    }

    fn residual_ext(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let n2 = self.n2();
        let p = self.at(x[n2]);
        let (r1, r2) = residual_wz(&p, &StateWZ::from_vec(&x[..n2]), &self.grid)?;
        Ok(r1.into_iter().zip(r2).flat_map(|(a, b)| [a, b]).collect())
    }

    fn jac_ext(&self, x: &[f64]) -> Result<(BandedMatrix, Vec<f64>), ModelError> {
        let n2 = self.n2();
        let p = self.at(x[n2]);
        let s = StateWZ::from_vec(&x[..n2]);
        Ok((jacobian_wz(&p, &s, &self.grid)?, lambda_derivative_wz(&p, &s)?))
    }

    fn admissible_ext(&self, x: &[f64]) -> bool {
        let n2 = self.n2();
        x[n2] > 0.0 && min_discriminant(&StateWZ::from_vec(&x[..n2]), self.params.eps) >= DISCRIMINANT_FLOOR
    }

    /// Newton on `F(x, λ) = 0`, `⟨t, X − X₀⟩ = σ` from `pred`.
    pub(crate) fn correct(
        &self,
        pred: Vec<f64>,
        t: &[f64],
        x0: &[f64],
        sigma: f64,
    ) -> Result<Corrected, ContinuationError> {
        let h = self.grid.h();
        let n2 = self.n2();
        let tol = self.tolerance(&pred);
        let cfg = NewtonConfig {
            tol_residual: tol,
            max_iter: self.cfg.newton_max_iter,
            ..NewtonConfig::default()
        };
        let c: Vec<f64> = t[..n2].iter().map(|v| h * v).collect();
        let d = t[n2];
        let cons_scale = 1e-12 * (1.0 + sigma.abs() + wnorm(h, x0));
        let out = newton_core(
            pred,
            &cfg,
            |x| {
                let mut r = self.residual_ext(x)?;
                let diff: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
                let nres = wdot(h, t, &diff) - sigma;
                r.push(if nres.abs() <= cons_scale { 0.0 } else { nres });
                Ok(r)
            },
            |x, r, iter| {
                let (j, fl) = self.jac_ext(x)?;
                let sing = |source| NewtonError::SingularJacobian { iteration: iter, source };
                let lu = j.lu().map_err(sing)?;
                let (dx, dl) = bordered_solve(&j, &lu, &fl, &c, d, &r[..n2], r[n2]).map_err(sing)?;
                let mut out = dx;
                out.push(dl);
                Ok(out)
            },
            |x| self.admissible_ext(x),
        )?;
        Ok(Corrected {
            x: out.x,
            iterations: out.iterations,
            residual: out.residual,
        })
    }

    /// Tangent at `x` oriented consistently with `prev` (`⟨τ, prev⟩ > 0`).
    pub(crate) fn tangent(&self, x: &[f64], prev: &[f64]) -> Result<Vec<f64>, ContinuationError> {
        let h = self.grid.h();
        let n2 = self.n2();
        let (j, fl) = self.jac_ext(x)?;
        let lu = j.lu()?;
        let c: Vec<f64> = prev[..n2].iter().map(|v| h * v).collect();
        let (tx, tl) = bordered_solve(&j, &lu, &fl, &c, prev[n2], &vec![0.0; n2], 1.0)?;
        let mut t = tx;
        t.push(tl);
        let nrm = wnorm(h, &t);
        t.iter_mut().for_each(|v| *v /= nrm);
        Ok(t)
    }

    /// Builds a branch point from a converged extended vector.
    pub(crate) fn make_point(
        &self,
        x: &[f64],
        tangent: Vec<f64>,
        arclength: f64,
        warm: Option<&[Vec<f64>]>,
    ) -> Result<BranchPoint, ContinuationError> {
        let n2 = self.n2();
        let lambda = x[n2];
        let p = self.at(lambda);
        let state = StateWZ::from_vec(&x[..n2]);
        let uv = uv_from_wz(&state, p.eps)?;
        let (l2_u, sup_u) = norms(&uv.u, &self.grid);
        let (l2_v, sup_v) = norms(&uv.v, &self.grid);
        let residual = sup_norm(&self.residual_ext(x)?);
        let j = jacobian_wz(&p, &state, &self.grid)?;
        let (det_sign, eigs, eig_basis) = match j.lu() {
            Ok(lu) => {
                if self.cfg.monitor_eigs {
                    let sp = smallest_magnitude_eigenvalues(&j, &lu, self.cfg.eig_count, warm)?;
                    let eigs = sp.values.iter().map(|c| Eig { re: c.re, im: c.im }).collect();
                    (lu.det_sign(), eigs, sp.basis)
                } else {
                    (lu.det_sign(), Vec::new(), Vec::new())
                }
            }
            Err(_) => (0, Vec::new(), Vec::new()),
        };
        Ok(BranchPoint {
            param: lambda,
            state,
            uv,
            norms: Norms { l2_u, l2_v, sup_u, sup_v },
            tangent,
            eigs,
            det_sign,
            arclength,
            residual,
            eig_basis,
        })
    }

    /// Converged point on the trivial branch at `lambda`, tangent along `+λ`.
    pub fn trivial_point(&self, lambda: f64) -> Result<BranchPoint, ContinuationError> {
        let mut x = vec![0.0; self.n2() + 1];
        x[self.n2()] = lambda;
        let mut t = vec![0.0; self.n2() + 1];
        t[self.n2()] = 1.0;
        self.make_point(&x, t, 0.0, None)
    }

    /// Converged point from a state at fixed `lambda`, tangent oriented
    /// toward increasing `λ` unless `reverse`.
    pub fn point_from_state(
        &self,
        state: &StateWZ,
        lambda: f64,
        reverse: bool,
    ) -> Result<BranchPoint, ContinuationError> {
        let p = self.at(lambda);
        let sys = SktSystem::new(&p, &self.grid);
        let tol = scaled_tolerance(self.cfg.newton_tol, term_scale(&p, state, &self.grid)?);
        let rep = newton_solve(
            &sys,
            &state.to_vec(),
            &NewtonConfig {
                tol_residual: tol,
                ..NewtonConfig::default()
            },
        )?;
        let mut x = rep.final_state;
        x.push(lambda);
        let mut e = vec![0.0; x.len()];
        e[self.n2()] = if reverse { -1.0 } else { 1.0 };
        let t = self.tangent(&x, &e)?;
        self.make_point(&x, t, 0.0, None)
    }

    /// First nontrivial point on the coexistence branch bifurcating from the
    /// trivial solution at the principal eigenvalue.
    pub fn seed_primary_branch(
        &self,
        amplitude: f64,
        window: (f64, f64),
    ) -> Result<BranchPoint, ContinuationError> {
        if !(amplitude > 0.0) {
            return Err(ContinuationError::SeedFailure(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        let pairs = eigen_weighted(&self.grid, &self.params.m, 1)?;
        let (lam1, phi) = (pairs[0].value, &pairs[0].vector);
        let lambda = (lam1 * (1.0 + amplitude)).min(window.1);
        let mphi2: f64 = phi.iter().zip(&self.params.m).map(|(f, m)| m * f * f).sum();
        let mphi3: f64 = phi.iter().zip(&self.params.m).map(|(f, m)| m * f * f * f).sum();
        let t = amplitude / (1.0 + amplitude) * mphi2 / mphi3;
        let eps = self.params.eps;
        let pred = StateWZ {
            w: vec![0.0; self.grid.n()],
            z: phi.iter().map(|f| eps * eps * t * f).collect(),
        };
        let pred_size = sup_norm(&pred.z);
        let pt = self
            .point_from_state(&pred, lambda, false)
            .map_err(|e| ContinuationError::SeedFailure(format!("Newton failed at λ = {lambda}: {e}")))?;
        if sup_norm(&pt.state.z) <= 1e-6 * pred_size {
            return Err(ContinuationError::SeedFailure(format!(
                "collapsed to the trivial solution at λ = {lambda} (principal eigenvalue {lam1})"
            )));
        }
        if !pt.is_positive() {
            return Err(ContinuationError::SeedFailure(format!(
                "seed at λ = {lambda} is not a positive solution"
            )));
        }
        Ok(pt)
    }

    /// Point on the small-coexistence part of the coexistence continuum at
    /// `lambda`, started from the limit profile `w = 0`, `z = Z₀(λ)/α²`.
    /// Traced downward by default, toward the secondary bifurcations.
    pub fn seed_small_coexistence(&self, lambda: f64, reverse: bool) -> Result<BranchPoint, ContinuationError> {
        let z0 = solve_z0(lambda, &self.grid, &self.params.m)
            .map_err(|e| ContinuationError::SeedFailure(format!("no limit profile at λ = {lambda}: {e}")))?;
        let eps2 = self.params.eps * self.params.eps;
        let guess = StateWZ {
            w: vec![0.0; self.grid.n()],
            z: z0.values.iter().map(|v| eps2 * v).collect(),
        };
        let pt = self
            .point_from_state(&guess, lambda, reverse)
            .map_err(|e| ContinuationError::SeedFailure(format!("Newton failed at λ = {lambda}: {e}")))?;
        if !pt.is_positive() {
            return Err(ContinuationError::SeedFailure(format!(
                "seed at λ = {lambda} is not a positive solution"
            )));
        }
        Ok(pt)
    }

    /// One predictor-corrector step with adaptive step length.
    pub fn arclength_step(&self, pt: &BranchPoint, ds: f64) -> Result<StepOutcome, ContinuationError> {
        if ds == 0.0 {
            return Err(ContinuationError::StepFailure {
                param: pt.param,
                ds,
                halvings: 0,
            });
        }
        let h = self.grid.h();
        let x0 = pt.extended();
        let mut ds = ds;
        for halvings in 0..=self.cfg.max_halvings {
            let pred: Vec<f64> = x0.iter().zip(&pt.tangent).map(|(a, t)| a + ds * t).collect();
            let attempt = self.correct(pred, &pt.tangent, &x0, ds).and_then(|c| {
                let t = self.tangent(&c.x, &pt.tangent)?;
                Ok((c, t))
            });
            if let Ok((c, t)) = attempt {
                // reject steps that turn sharply: likely a jump to another branch
                if wdot(h, &t, &pt.tangent) > 0.8 {
                    let warm = (!pt.eig_basis.is_empty()).then_some(pt.eig_basis.as_slice());
                    let point = self.make_point(&c.x, t, pt.arclength + ds.abs(), warm)?;
                    let grow = c.iterations <= self.cfg.fast_iters && halvings == 0;
                    let next = if grow { 2.0 * ds } else { ds };
                    let next = next.signum() * next.abs().min(self.cfg.ds_max);
                    return Ok(StepOutcome {
                        point,
                        ds_used: ds,
                        ds_next: next,
                        iterations: c.iterations,
                    });
                }
            }
            if halvings == self.cfg.max_halvings {
                break;
            }
            ds *= 0.5;
        }
        Err(ContinuationError::StepFailure {
            param: pt.param,
            ds,
            halvings: self.cfg.max_halvings,
        })
    }

    /// Traces from `seed` while the parameter stays inside `window`.
    pub fn trace_branch(
        &self,
        id: &str,
        seed: BranchPoint,
        window: (f64, f64),
    ) -> Result<Branch, ContinuationError> {
        let mut branch = Branch::new(id, ParamMode::Lambda);
        let mut ds = self.cfg.ds.min(self.cfg.ds_max);
        branch.push(seed);
        while branch.points.len() < self.cfg.max_points {
            let last = branch.points.last().expect("nonempty");
            let step = match self.arclength_step(last, ds) {
                Ok(s) => s,
                Err(e) => {
                    return Err(ContinuationError::TraceInterrupted {
                        partial: Box::new(branch),
                        source: Box::new(e),
                    })
                }
            };
            ds = step.ds_next;
            let inside = step.point.param >= window.0 && step.point.param <= window.1;
            if self.cfg.monitor_eigs {
                let k = branch.points.len() - 1;
                match self.detect_and_localize(&branch.points[k], &step.point, step.ds_used) {
                    // a crossing that bisection cannot bracket usually means the
                    // step hopped onto a nearby branch: retry shorter
                    Ok(Some(rec))
                        if rec.localization_width > self.cfg.loc_tol
                            && step.ds_used.abs() > self.min_step() =>
                    {
                        ds = 0.25 * step.ds_used;
                        continue;
                    }
                    Ok(Some(mut rec)) => {
                        if rec.point.param >= window.0 && rec.point.param <= window.1 {
                            rec.after_index = k;
                            branch.bifurcations.push(rec);
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        return Err(ContinuationError::TraceInterrupted {
                            partial: Box::new(branch),
                            source: Box::new(e),
                        })
                    }
                }
            }
            if !inside {
                branch.termination = Some(Termination::WindowExit);
                return Ok(branch);
            }
            branch.push(step.point);
        }
        branch.termination = Some(Termination::MaxPoints);
        Ok(branch)
    }

    /// Converged point on `branch` at parameter `target`, by Newton at fixed
    /// parameter from the linear interpolant of the bracketing points.
    pub fn point_at_param(&self, branch: &Branch, target: f64) -> Result<BranchPoint, ContinuationError> {
        let pts = &branch.points;
        let k = (1..pts.len())
            .find(|&i| (pts[i - 1].param - target) * (pts[i].param - target) <= 0.0)
            .ok_or_else(|| {
                ContinuationError::SeedFailure(format!("parameter {target} not covered by branch {}", branch.id))
            })?;
        let (a, b) = (&pts[k - 1], &pts[k]);
        let th = if b.param == a.param {
            0.0
        } else {
            (target - a.param) / (b.param - a.param)
        };
        let xa = a.state.to_vec();
        let xb = b.state.to_vec();
        let guess: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p + th * (q - p)).collect();
        let reverse = b.tangent[self.n2()] < 0.0;
        self.point_from_state(&StateWZ::from_vec(&guess), target, reverse)
    }
}
