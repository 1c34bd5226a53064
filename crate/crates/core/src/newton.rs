//! Damped Newton iteration on banded systems.

use thiserror::Error;

use crate::banded::{BandedError, BandedMatrix};
use crate::grid::sup_norm;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("line search failed at iteration {iteration} (residual {residual:e})")]
    LineSearchFailure { iteration: usize, residual: f64 },
    #[error("singular Jacobian at iteration {iteration}: {source}")]
    SingularJacobian {
        iteration: usize,
        #[source]
        source: BandedError,
    },
    #[error(transparent)]
    Evaluation(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Stop when `‖F‖∞` falls below this.
    pub tol_residual: f64,
    /// Relative step size below which the iteration is considered stalled.
    pub tol_step: f64,
    pub max_iter: usize,
    /// Backtracking factor in `(0, 1)`.
    pub damping: f64,
    pub min_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            tol_step: 1e-12,
            max_iter: 50,
            damping: 0.5,
            min_step: 1e-4,
        }
    }
}

impl NewtonConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_residual = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_state: Vec<f64>,
    /// Sign of the Jacobian determinant at the final state.
    pub det_sign: i8,
    pub residual_history: Vec<f64>,
}

pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError>;
    fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError>;
    /// States outside the domain of definition are never accepted as iterates.
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

pub(crate) struct CoreOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Newton loop parameterized by the residual, the correction solve
/// (`J δ = F`) and the admissibility test.
pub(crate) fn newton_core(
    x0: Vec<f64>,
    cfg: &NewtonConfig,
    mut residual: impl FnMut(&[f64]) -> Result<Vec<f64>, ModelError>,
    mut correction: impl FnMut(&[f64], &[f64], usize) -> Result<Vec<f64>, NewtonError>,
    admissible: impl Fn(&[f64]) -> bool,
) -> Result<CoreOutcome, NewtonError> {
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut rn = sup_norm(&r);
    let mut history = vec![rn];
    for iter in 0..cfg.max_iter {
        if rn <= cfg.tol_residual {
            return Ok(CoreOutcome {
                x,
                iterations: iter,
                residual: rn,
                history,
            });
        }
        let delta = correction(&x, &r, iter)?;
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            if trial.iter().all(|v| v.is_finite()) && admissible(&trial) {
                if let Ok(rt) = residual(&trial) {
                    let rtn = sup_norm(&rt);
                    if rtn.is_finite() && rtn <= (1.0 - 1e-4 * t) * rn {
                        break Some((trial, rt, rtn));
                    }
                }
            }
            t *= cfg.damping;
            if t < cfg.min_step {
                break None;
            }
        };
        let Some((trial, rt, rtn)) = accepted else {
            return Err(NewtonError::LineSearchFailure {
                iteration: iter,
                residual: rn,
            });
        };
        let step = t * sup_norm(&delta);
        x = trial;
        r = rt;
        rn = rtn;
        history.push(rn);
        if rn > cfg.tol_residual && step <= cfg.tol_step * sup_norm(&x) {
            return Err(NewtonError::MaxIterExceeded {
                iterations: iter + 1,
                residual: rn,
            });
        }
    }
    if rn <= cfg.tol_residual {
        return Ok(CoreOutcome {
            x,
            iterations: cfg.max_iter,
            residual: rn,
            history,
        });
    }
    Err(NewtonError::MaxIterExceeded {
        iterations: cfg.max_iter,
        residual: rn,
    })
}

/// Solves `F(x) = 0` from `x0` with Armijo backtracking on `‖F‖∞`.
pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    cfg: &NewtonConfig,
) -> Result<NewtonReport, NewtonError> {
    let out = newton_core(
        x0.to_vec(),
        cfg,
        |x| sys.residual(x),
        |x, r, iter| {
            let j = sys.jacobian(x)?;
            let lu = j
                .lu()
                .map_err(|source| NewtonError::SingularJacobian { iteration: iter, source })?;
            lu.solve(r)
                .map_err(|source| NewtonError::SingularJacobian { iteration: iter, source })
        },
        |x| sys.admissible(x),
    )?;
    let det_sign = match sys.jacobian(&out.x).map(|j| j.lu()) {
        Ok(Ok(lu)) => lu.det_sign(),
        _ => 0,
    };
    Ok(NewtonReport {
        converged: true,
        iterations: out.iterations,
        final_residual: out.residual,
        final_state: out.x,
        det_sign,
        residual_history: out.history,
    })
}

/// Largest column-relative discrepancy between the analytic Jacobian and
/// central differences. Values near degenerate states can be large.
pub fn fd_jacobian_check<S: NonlinearSystem + ?Sized>(sys: &S, x: &[f64]) -> f64 {
    let Ok(j) = sys.jacobian(x) else {
        return f64::INFINITY;
    };
    let n = x.len();
    let xs = sup_norm(x);
    let mut worst = 0.0_f64;
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = 1e-6 * x[c].abs().max(1e-2 * xs).max(1e-10);
        xp[c] = x[c] + h;
        let fp = sys.residual(&xp);
        xp[c] = x[c] - h;
        let fm = sys.residual(&xp);
        xp[c] = x[c];
        let (Ok(fp), Ok(fm)) = (fp, fm) else {
            return f64::INFINITY;
        };
        let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let an: Vec<f64> = (0..n).map(|r| j.get(r, c)).collect();
        let scale = sup_norm(&fd).max(sup_norm(&an));
        if scale == 0.0 {
            continue;
        }
        let err = fd.iter().zip(&an).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, discrete_laplacian};

    struct Linear {
        a: BandedMatrix,
        b: Vec<f64>,
    }

    impl NonlinearSystem for Linear {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
            Ok(self.a.matvec(x).iter().zip(&self.b).map(|(p, q)| p - q).collect())
        }
        fn jacobian(&self, _x: &[f64]) -> Result<BandedMatrix, ModelError> {
            Ok(self.a.clone())
        }
    }

    /// `x² = 2` componentwise.
    struct Sqrt2;

    impl NonlinearSystem for Sqrt2 {
        fn dim(&self) -> usize {
            3
        }
        fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
            Ok(x.iter().map(|v| v * v - 2.0).collect())
        }
        fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError> {
            let mut j = BandedMatrix::zeros(3, 0, 0);
            for (i, v) in x.iter().enumerate() {
                j.set(i, i, 2.0 * v);
            }
            Ok(j)
        }
    }

    #[test]
    fn linear_system_in_one_step() {
        let g = build_grid(-0.5, 0.5, 20).unwrap();
        let sys = Linear {
            a: discrete_laplacian(&g),
            b: vec![1.0; 20],
        };
        let rep = newton_solve(&sys, &vec![0.0; 20], &NewtonConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.final_residual < 1e-10);
        assert_eq!(rep.det_sign, 1);
    }

    #[test]
    fn already_converged_takes_zero_steps() {
        let sys = Sqrt2;
        let x = vec![2f64.sqrt(); 3];
        let rep = newton_solve(&sys, &x, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn quadratic_convergence() {
        let rep = newton_solve(&Sqrt2, &[1.0, 3.0, 10.0], &NewtonConfig::default()).unwrap();
        for v in &rep.final_state {
            assert!((v - 2f64.sqrt()).abs() < 1e-12);
        }
        let h = &rep.residual_history;
        // last few ratios show r_{k+1} ≲ C r_k²
        let k = h.len() - 1;
        assert!(h[k - 1] <= 10.0 * h[k - 2] * h[k - 2] + 1e-15);
    }

    #[test]
    fn singular_jacobian_reported() {
        let err = newton_solve(&Sqrt2, &[0.0, 1.0, 1.0], &NewtonConfig::default()).unwrap_err();
        assert!(matches!(err, NewtonError::SingularJacobian { iteration: 0, .. }));
    }

    #[test]
    fn max_iter_reported() {
        let cfg = NewtonConfig {
            max_iter: 2,
            ..NewtonConfig::default()
        };
        let err = newton_solve(&Sqrt2, &[100.0, 1.0, 1.0], &cfg).unwrap_err();
        assert!(matches!(err, NewtonError::MaxIterExceeded { iterations: 2, .. }));
    }

    /// `x² + 1 = 0` has no real root; backtracking cannot reduce the residual
    /// below its minimum at `x = 0`.
    struct NoRoot;

    impl NonlinearSystem for NoRoot {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
            Ok(vec![x[0] * x[0] + 1.0])
        }
        fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError> {
            let mut j = BandedMatrix::zeros(1, 0, 0);
            j.set(0, 0, 2.0 * x[0]);
            Ok(j)
        }
    }

    #[test]
    fn line_search_failure_reported() {
        let cfg = NewtonConfig {
            max_iter: 200,
            ..NewtonConfig::default()
        };
        let err = newton_solve(&NoRoot, &[1e-3], &cfg).unwrap_err();
        assert!(matches!(
            err,
            NewtonError::LineSearchFailure { .. } | NewtonError::MaxIterExceeded { .. }
        ));
    }

    #[test]
    fn fd_check_detects_wrong_jacobian() {
        struct Wrong;
        impl NonlinearSystem for Wrong {
            fn dim(&self) -> usize {
                2
            }
            fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
                Ok(vec![x[0] * x[0], x[1]])
            }
            fn jacobian(&self, x: &[f64]) -> Result<BandedMatrix, ModelError> {
                let mut j = BandedMatrix::zeros(2, 0, 0);
                j.set(0, 0, x[0]);
                j.set(1, 1, 1.0);
                Ok(j)
            }
        }
        assert!(fd_jacobian_check(&Wrong, &[1.0, 1.0]) > 0.1);
        assert!(fd_jacobian_check(&Sqrt2, &[1.0, 2.0, 3.0]) < 1e-8);
    }
}
