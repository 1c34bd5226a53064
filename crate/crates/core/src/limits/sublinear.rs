//! `−Δq = m√q`, solved by monotone iteration from an ordered sub/super
//! pair and polished by Newton. `ζ₀ = q` and `Ψ = √q`.

use serde::{Deserialize, Serialize};

use super::{check_weight, solve_semilinear, LimitError, LimitField, LimitKind, Semilinear};
use crate::eigen::eigen_weighted;
use crate::grid::{discrete_laplacian, sup_norm, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SublinearKind {
    Zeta0,
    Psi,
}

/// Outcome of the monotone iteration with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneRun {
    pub field: LimitField,
    pub sweeps: usize,
    /// Lower iterates never decreased, upper never increased, and the lower
    /// stayed below the upper at every sweep.
    pub ordered: bool,
    pub final_gap: f64,
}

const MAX_SWEEPS: usize = 10_000;
const GAP_TOL: f64 = 1e-10;

/// Like [`solve_sublinear`], also reporting the sweep history checks.
pub fn solve_sublinear_traced(kind: SublinearKind, grid: &Grid, m: &[f64]) -> Result<MonotoneRun, LimitError> {
    check_weight(grid, m)?;
    let pair = eigen_weighted(grid, m, 1)?.remove(0);
    let chol = discrete_laplacian(grid)
        .cholesky()
        .map_err(|e| LimitError::InvalidInput(e.to_string()))?;
    let picard = |q: &[f64]| -> Vec<f64> {
        let rhs: Vec<f64> = q.iter().zip(m).map(|(v, w)| w * v.max(0.0).sqrt()).collect();
        chol.solve(&rhs)
    };

    // c φ² is a subsolution when 2λ₁√c ≤ 1; e_max·A⁻¹m is a supersolution
    let c = 1.0 / (16.0 * pair.value * pair.value);
    let mut lower: Vec<f64> = pair.vector.iter().map(|f| c * f * f).collect();
    let e = chol.solve(m);
    let e_max = sup_norm(&e);
    let mut upper: Vec<f64> = e.iter().map(|v| e_max * v).collect();

    let slack = |q: &[f64]| 1e-13 * sup_norm(q);
    let mut ordered = lower.iter().zip(&upper).all(|(a, b)| a <= b);
    let mut gap = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let next_lower = picard(&lower);
        let next_upper = picard(&upper);
        let (sl, su) = (slack(&next_lower), slack(&next_upper));
        ordered &= next_lower.iter().zip(&lower).all(|(a, b)| *a >= b - sl);
        ordered &= next_upper.iter().zip(&upper).all(|(a, b)| *a <= b + su);
        ordered &= next_lower.iter().zip(&next_upper).all(|(a, b)| *a <= b + su);
        lower = next_lower;
        upper = next_upper;
        sweeps += 1;
        gap = upper.iter().zip(&lower).map(|(a, b)| a - b).fold(0.0, f64::max) / sup_norm(&upper);
        if gap <= GAP_TOL {
            break;
        }
    }
    if gap > GAP_TOL {
        return Err(LimitError::IterationStall { sweeps, gap });
    }

    let sys = Semilinear {
        grid,
        source: |i: usize, q: f64| m[i] * q.sqrt(),
        slope: |i: usize, q: f64| 0.5 * m[i] / q.sqrt(),
        admissible: |x: &[f64]| x.iter().all(|q| *q > 0.0),
    };
    let mid: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let q = solve_semilinear(&sys, &mid)?;
    let field = match kind {
        SublinearKind::Zeta0 => LimitField {
            kind: LimitKind::Zeta0,
            param: 0.0,
            values: q,
        },
        SublinearKind::Psi => LimitField {
            kind: LimitKind::Psi,
            param: 0.0,
            values: q.iter().map(|v| v.sqrt()).collect(),
        },
    };
    Ok(MonotoneRun {
        field,
        sweeps,
        ordered,
        final_gap: gap,
    })
}

/// The positive solution `ζ₀` of `−Δζ₀ = m√ζ₀`, or `Ψ` with `−ΔΨ² = mΨ`.
pub fn solve_sublinear(kind: SublinearKind, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    solve_sublinear_traced(kind, grid, m).map(|r| r.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_laplacian, build_grid};

    #[test]
    fn psi_is_root_of_zeta() {
        let g = build_grid(-0.5, 0.5, 255).unwrap();
        let m = vec![1.0; 255];
        let z = solve_sublinear(SublinearKind::Zeta0, &g, &m).unwrap();
        let p = solve_sublinear(SublinearKind::Psi, &g, &m).unwrap();
        for (a, b) in z.values.iter().zip(&p.values) {
            assert!((a.sqrt() - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zeta_solves_equation() {
        let g = build_grid(-0.5, 0.5, 255).unwrap();
        let m: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.5 * x).collect();
        let z = solve_sublinear(SublinearKind::Zeta0, &g, &m).unwrap();
        let r = apply_laplacian(&g, &z.values);
        let res = r
            .iter()
            .zip(z.values.iter().zip(&m))
            .map(|(a, (q, w))| (a - w * q.sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(res < 1e-9, "{res:e}");
        assert!(z.is_positive());
    }

    #[test]
    fn weight_scaling() {
        let g = build_grid(-0.5, 0.5, 127).unwrap();
        let m = vec![1.0; 127];
        let m4 = vec![4.0; 127];
        let a = solve_sublinear(SublinearKind::Zeta0, &g, &m).unwrap();
        let b = solve_sublinear(SublinearKind::Zeta0, &g, &m4).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((16.0 * x - y).abs() < 1e-10 * y.max(1e-3));
        }
    }

    #[test]
    fn zero_weight_rejected() {
        let g = build_grid(-0.5, 0.5, 31).unwrap();
        assert!(matches!(
            solve_sublinear(SublinearKind::Zeta0, &g, &[0.0; 31]),
            Err(LimitError::InvalidInput(_))
        ));
    }

    #[test]
    fn monotone_iterates_stay_ordered() {
        let g = build_grid(-0.5, 0.5, 127).unwrap();
        let m: Vec<f64> = g.nodes().iter().map(|x| 2.0 - x).collect();
        let run = solve_sublinear_traced(SublinearKind::Zeta0, &g, &m).unwrap();
        assert!(run.ordered);
        assert!(run.final_gap <= 1e-10);
        assert!(run.sweeps < 200);
    }
}
