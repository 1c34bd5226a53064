//! Finite-difference counterpart of the shooter:
//! `A w = λ m w − b₁ w₊² + c₂ w₋²` with `j − 1` sign changes.

use super::{
    check_weight, continue_in_lambda, sign_changes, solve_semilinear, LimitError, LimitField, LimitKind, Semilinear,
    Sign,
};
use crate::eigen::eigen_weighted;
use crate::grid::{apply_laplacian, sup_norm, Grid};

/// Reaction coefficients of the segregation limit equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reaction {
    pub b1: f64,
    pub c2: f64,
}

fn react(r: Reaction, w: f64) -> f64 {
    if w > 0.0 {
        -r.b1 * w * w
    } else {
        r.c2 * w * w
    }
}

/// Residual `A w − λ m w + b₁ w₊² − c₂ w₋²`.
pub fn ls2_residual(r: Reaction, lambda: f64, grid: &Grid, m: &[f64], w: &[f64]) -> Vec<f64> {
    apply_laplacian(grid, w)
        .iter()
        .zip(w.iter().zip(m))
        .map(|(a, (v, mi))| a - lambda * mi * v - react(r, *v))
        .collect()
}

fn mode(j: usize, grid: &Grid, m: &[f64], sign: Sign) -> Result<(f64, Vec<f64>), LimitError> {
    if j == 0 {
        return Err(LimitError::InvalidInput("mode index starts at 1".into()));
    }
    let pair = eigen_weighted(grid, m, j)?.remove(j - 1);
    let phi = pair.vector.iter().map(|f| sign.factor() * f).collect();
    Ok((pair.value, phi))
}

/// Bifurcation predictor `s·Φ` with
/// `s = (λ − λ_j) Σ mΦ² / Σ (b₁Φ₊³ + c₂Φ₋³)`, `Φ = ±Φ_j`.
pub fn ls2_predictor(r: Reaction, lambda: f64, j: usize, sign: Sign, grid: &Grid, m: &[f64]) -> Result<Vec<f64>, LimitError> {
    let (lam_j, phi) = mode(j, grid, m, sign)?;
    Ok(predict(r, lambda, lam_j, &phi, m))
}

fn predict(r: Reaction, lambda: f64, lam_j: f64, phi: &[f64], m: &[f64]) -> Vec<f64> {
    let mphi2: f64 = phi.iter().zip(m).map(|(f, w)| w * f * f).sum();
    let cubic: f64 = phi
        .iter()
        .map(|f| if *f > 0.0 { r.b1 * f.powi(3) } else { -r.c2 * f.powi(3) })
        .sum();
    let s = (lambda - lam_j) * mphi2 / cubic;
    phi.iter().map(|f| s * f).collect()
}

fn newton(r: Reaction, lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<Vec<f64>, LimitError> {
    let sys = Semilinear {
        grid,
        source: |i: usize, w: f64| lambda * m[i] * w + react(r, w),
        // one-sided at exact zeros, where both parts vanish
        slope: |i: usize, w: f64| lambda * m[i] - 2.0 * r.b1 * w.max(0.0) - 2.0 * r.c2 * (-w).max(0.0),
        admissible: |_: &[f64]| true,
    };
    Ok(solve_semilinear(&sys, guess)?)
}

fn field(lambda: f64, values: Vec<f64>) -> LimitField {
    LimitField {
        kind: LimitKind::Ls2,
        param: lambda,
        values,
    }
}

/// Newton from `guess` only; no class check.
pub fn grid_solve_ls2_from(r: Reaction, lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    Ok(field(lambda, newton(r, lambda, grid, m, guess)?))
}

/// Grid solution with `j − 1` sign changes whose first nonzero value has the
/// sign `sign`. At or below the discrete `λ_j` Newton from the predictor is
/// returned as is (it collapses onto `w = 0`).
pub fn grid_solve_ls2(r: Reaction, lambda: f64, j: usize, sign: Sign, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam_j, phi) = mode(j, grid, m, sign)?;
    if lambda <= lam_j {
        let small: Vec<f64> = phi.iter().map(|f| 1e-3 * f).collect();
        return Ok(field(lambda, newton(r, lambda, grid, m, &small)?));
    }
    let in_class = |w: &[f64]| {
        let first = w.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0);
        sign_changes(w) == j - 1 && first * sign.factor() > 0.0 && sup_norm(w) > 0.0
    };
    let attempt = |lam: f64, g: &[f64]| {
        let w = newton(r, lam, grid, m, g)?;
        if in_class(&w) {
            Ok(w)
        } else {
            Err(LimitError::NoSolutionInClass { j, lambda: lam, threshold: lam_j })
        }
    };
    let start = |lam: f64| predict(r, lam, lam_j, &phi, m);
    let values = match attempt(lambda, &start(lambda)) {
        Ok(w) => w,
        Err(_) => continue_in_lambda(lam_j, lambda, start, attempt)?,
    };
    Ok(field(lambda, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn solves_with_right_nodal_pattern() {
        let g = build_grid(-0.5, 0.5, 255).unwrap();
        let m = vec![1.0; 255];
        let r = Reaction { b1: 3.0, c2: 1.0 };
        for (j, lam) in [(2, 43.0673), (3, 91.5836), (2, 300.0)] {
            for sign in [Sign::Plus, Sign::Minus] {
                let w = grid_solve_ls2(r, lam, j, sign, &g, &m).unwrap();
                assert_eq!(w.sign_changes(), j - 1);
                assert!(w.values[0] * sign.factor() > 0.0);
                let res = sup_norm(&ls2_residual(r, lam, &g, &m, &w.values));
                assert!(res < 1e-8, "{res:e}");
            }
        }
    }

    #[test]
    fn collapses_below_onset() {
        let g = build_grid(-0.5, 0.5, 127).unwrap();
        let m = vec![1.0; 127];
        let r = Reaction { b1: 3.0, c2: 1.0 };
        let w = grid_solve_ls2(r, 35.0, 2, Sign::Plus, &g, &m).unwrap();
        assert!(sup_norm(&w.values) < 1e-12);
    }

    #[test]
    fn odd_when_coefficients_match() {
        let g = build_grid(-0.5, 0.5, 127).unwrap();
        let m = vec![1.0; 127];
        let r = Reaction { b1: 2.0, c2: 2.0 };
        let w = grid_solve_ls2(r, 60.0, 2, Sign::Plus, &g, &m).unwrap();
        let refl = g.reflect(&w.values);
        for (a, b) in w.values.iter().zip(&refl) {
            assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn predictor_amplitude_grows_from_onset() {
        let g = build_grid(-0.5, 0.5, 63).unwrap();
        let m = vec![1.0; 63];
        let r = Reaction { b1: 1.0, c2: 1.0 };
        let a = ls2_predictor(r, 40.0, 2, Sign::Plus, &g, &m).unwrap();
        let b = ls2_predictor(r, 45.0, 2, Sign::Plus, &g, &m).unwrap();
        assert!(sup_norm(&a) < sup_norm(&b));
        assert!(a[0] > 0.0);
    }
}
