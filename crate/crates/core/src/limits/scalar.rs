//! The scalar limit curve `−ΔZ = (λm/2)(√(4Z+1) − 1)`, its profile
//! `U = (√(4Z+1) − 1)/2`, and the logistic equation `−Δθ = θ(λm − θ)`.

use super::{
    check_weight, continue_in_lambda, principal_predictor, solve_semilinear, LimitError, LimitField, LimitKind,
    Semilinear,
};
use crate::eigen::eigen_weighted;
use crate::grid::{apply_laplacian, discrete_laplacian, sup_norm, Grid};

const COLLAPSE_FLOOR: f64 = 1e-12;

fn principal(grid: &Grid, m: &[f64]) -> Result<(f64, Vec<f64>), LimitError> {
    let pair = eigen_weighted(grid, m, 1)?.remove(0);
    Ok((pair.value, pair.vector))
}

fn z0_newton(lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<Vec<f64>, LimitError> {
    let sys = Semilinear {
        grid,
        source: |i: usize, z: f64| 0.5 * lambda * m[i] * ((4.0 * z + 1.0).sqrt() - 1.0),
        slope: |i: usize, z: f64| lambda * m[i] / (4.0 * z + 1.0).sqrt(),
        admissible: |x: &[f64]| x.iter().all(|z| 4.0 * z + 1.0 > 0.0),
    };
    Ok(solve_semilinear(&sys, guess)?)
}

/// Rejects sign changes and the zero solution Newton may collapse onto.
fn positive_or(x: Vec<f64>, lambda: f64, lam1: f64) -> Result<Vec<f64>, LimitError> {
    if x.iter().all(|v| *v > 0.0) && sup_norm(&x) > COLLAPSE_FLOOR {
        Ok(x)
    } else {
        Err(LimitError::NoPositiveSolution { lambda, threshold: lam1 })
    }
}

/// Positive solution of the scalar limit equation at `lambda`, reached from
/// `guess` by Newton alone.
pub fn solve_z0_from(lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam1, _) = principal(grid, m)?;
    if lambda <= lam1 {
        return Err(LimitError::NoPositiveSolution { lambda, threshold: lam1 });
    }
    let values = positive_or(z0_newton(lambda, grid, m, guess)?, lambda, lam1)?;
    Ok(LimitField { kind: LimitKind::Z0, param: lambda, values })
}

/// The unique positive solution `Z₀(λ)`; exists exactly for `λ > λ₁(m)`.
pub fn solve_z0(lambda: f64, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam1, phi) = principal(grid, m)?;
    if lambda <= lam1 {
        return Err(LimitError::NoPositiveSolution { lambda, threshold: lam1 });
    }
    // the nonlinearity is concave and below λm√Z, so λ² e_max A⁻¹m lies above
    // Z₀ and Newton descends monotonically from it
    let e = discrete_laplacian(grid)
        .cholesky()
        .map_err(|e| LimitError::InvalidInput(e.to_string()))?
        .solve(m);
    let e_max = sup_norm(&e);
    let upper: Vec<f64> = e.iter().map(|v| lambda * lambda * e_max * v).collect();
    let start = |lam: f64| {
        let q: Vec<f64> = m.iter().map(|w| lam * w).collect();
        principal_predictor(lam1, lam, &phi, m, &q)
    };
    let attempt = |lam: f64, g: &[f64]| z0_newton(lam, grid, m, g).and_then(|x| positive_or(x, lam, lam1));
    let values = match attempt(lambda, &upper) {
        Ok(x) => x,
        Err(_) => continue_in_lambda(lam1, lambda, start, attempt)?,
    };
    Ok(LimitField { kind: LimitKind::Z0, param: lambda, values })
}

/// Nodewise `U = (√(4Z+1) − 1)/2`.
pub fn u_from_z(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| 0.5 * ((4.0 * v + 1.0).sqrt() - 1.0)).collect()
}

/// Limit profile `U(λ)` of the scaled small-coexistence solutions.
pub fn limit_u(lambda: f64, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    let z = solve_z0(lambda, grid, m)?;
    Ok(LimitField {
        kind: LimitKind::U,
        param: lambda,
        values: u_from_z(&z.values),
    })
}

/// Residual of `Δ[(1+U)U] + λmU = 0` on the grid.
pub fn u_limit_residual(lambda: f64, grid: &Grid, m: &[f64], u: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = u.iter().map(|v| (1.0 + v) * v).collect();
    apply_laplacian(grid, &q)
        .iter()
        .zip(u.iter().zip(m))
        .map(|(a, (v, w))| -a + lambda * w * v)
        .collect()
}

fn logistic_newton(lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<Vec<f64>, LimitError> {
    let sys = Semilinear {
        grid,
        source: |i: usize, t: f64| t * (lambda * m[i] - t),
        slope: |i: usize, t: f64| lambda * m[i] - 2.0 * t,
        admissible: |_: &[f64]| true,
    };
    Ok(solve_semilinear(&sys, guess)?)
}

/// Positive logistic solution at `lambda` from `guess`, Newton only.
pub fn solve_logistic_from(lambda: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam1, _) = principal(grid, m)?;
    if lambda <= lam1 {
        return Err(LimitError::NoPositiveSolution { lambda, threshold: lam1 });
    }
    let values = positive_or(logistic_newton(lambda, grid, m, guess)?, lambda, lam1)?;
    Ok(LimitField { kind: LimitKind::Theta, param: lambda, values })
}

/// The unique positive solution `θ_λ` of the logistic equation.
pub fn solve_logistic(lambda: f64, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam1, phi) = principal(grid, m)?;
    if lambda <= lam1 {
        return Err(LimitError::NoPositiveSolution { lambda, threshold: lam1 });
    }
    let ones = vec![1.0; m.len()];
    let start = |lam: f64| principal_predictor(lam1, lam, &phi, m, &ones);
    let attempt = |lam: f64, g: &[f64]| logistic_newton(lam, grid, m, g).and_then(|x| positive_or(x, lam, lam1));
    // the constant λ max m is a supersolution
    let upper = vec![lambda * sup_norm(m); m.len()];
    let values = match attempt(lambda, &upper) {
        Ok(x) => x,
        Err(_) => continue_in_lambda(lam1, lambda, start, attempt)?,
    };
    Ok(LimitField { kind: LimitKind::Theta, param: lambda, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::{residual_uv, ModelParams, StateUV};

    fn setup(n: usize) -> (Grid, Vec<f64>, f64) {
        let g = build_grid(-0.5, 0.5, n).unwrap();
        let m = vec![1.0; n];
        let lam1 = principal(&g, &m).unwrap().0;
        (g, m, lam1)
    }

    #[test]
    fn z0_needs_lambda_above_threshold() {
        let (g, m, lam1) = setup(127);
        assert!(matches!(
            solve_z0(0.9 * lam1, &g, &m),
            Err(LimitError::NoPositiveSolution { .. })
        ));
        assert!(solve_z0(lam1, &g, &m).is_err());
    }

    #[test]
    fn z0_solves_its_equation() {
        let (g, m, lam1) = setup(255);
        for lam in [1.05 * lam1, 2.0 * lam1, 20.0, 300.0, 1e4] {
            let z = solve_z0(lam, &g, &m).unwrap();
            assert!(z.is_positive());
            let r = apply_laplacian(&g, &z.values);
            let res = r
                .iter()
                .zip(&z.values)
                .map(|(a, v)| (a - 0.5 * lam * ((4.0 * v + 1.0).sqrt() - 1.0)).abs())
                .fold(0.0, f64::max);
            let scale = 4.0 / (g.h() * g.h()) * sup_norm(&z.values);
            assert!(res <= 1e-12 * scale, "λ = {lam}: residual {res:e}");
        }
    }

    #[test]
    fn z0_grows_with_lambda() {
        let (g, m, _) = setup(127);
        let a = solve_z0(15.0, &g, &m).unwrap();
        let b = solve_z0(16.0, &g, &m).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x < y));
    }

    #[test]
    fn z0_unique_from_several_guesses() {
        let (g, m, _) = setup(127);
        let lam = 2.0 * std::f64::consts::PI.powi(2);
        let base = solve_z0(lam, &g, &m).unwrap();
        let nodes = g.nodes();
        // Newton from far below may fall onto the zero solution instead
        let guesses: Vec<Vec<f64>> = vec![
            nodes.iter().map(|x| 3.0 * (std::f64::consts::PI * (x + 0.5)).sin()).collect(),
            nodes.iter().map(|x| 12.0 * (0.25 - x * x)).collect(),
            vec![5.0; 127],
            base.values.iter().zip(&nodes).map(|(v, x)| v * (1.0 + 0.3 * (9.0 * x).sin())).collect(),
            base.values.iter().map(|v| 1.5 * v).collect(),
        ];
        for guess in guesses {
            let z = solve_z0_from(lam, &g, &m, &guess).unwrap();
            let d = z.values.iter().zip(&base.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-8, "distance {d:e}");
        }
    }

    #[test]
    fn z0_regression_anchor_at_twice_threshold() {
        // the center value is stable under grid refinement to O(h²)
        let (g1, m1, l1) = setup(511);
        let (g2, m2, l2) = setup(1023);
        let z1 = solve_z0(2.0 * l1, &g1, &m1).unwrap();
        let z2 = solve_z0(2.0 * l2, &g2, &m2).unwrap();
        let (c1, c2) = (z1.values[255], z2.values[511]);
        assert!(c1 > 0.0 && (c1 - c2).abs() < 1e-4 * c1, "{c1} vs {c2}");
    }

    #[test]
    fn u_solves_its_equation() {
        let (g, m, _) = setup(255);
        let u = limit_u(20.0, &g, &m).unwrap();
        let r = u_limit_residual(20.0, &g, &m, &u.values);
        assert!(sup_norm(&r) < 1e-8, "{:e}", sup_norm(&r));
        assert_eq!(u_from_z(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_bounds_and_threshold() {
        let (g, m, lam1) = setup(127);
        assert!(matches!(
            solve_logistic(0.5 * lam1, &g, &m),
            Err(LimitError::NoPositiveSolution { .. })
        ));
        let lam = 2.0 * lam1;
        let t = solve_logistic(lam, &g, &m).unwrap();
        assert!(t.values.iter().all(|v| *v > 0.0 && *v < lam));
    }

    #[test]
    fn logistic_gives_semitrivial_state() {
        let (g, m, lam1) = setup(127);
        let lam = 2.0 * lam1;
        let t = solve_logistic(lam, &g, &m).unwrap();
        let b1 = 3.0;
        let p = ModelParams::new(20.0, b1, 2.0, 2.0, 1.0, m.clone(), lam).unwrap();
        let s = StateUV {
            u: t.values.iter().map(|v| v / b1).collect(),
            v: vec![0.0; 127],
        };
        let (r1, r2) = residual_uv(&p, &s, &g);
        let scale = 4.0 / (g.h() * g.h()) * sup_norm(&s.u);
        assert!(sup_norm(&r1) < 1e-12 * scale);
        assert_eq!(sup_norm(&r2), 0.0);
    }

    #[test]
    fn logistic_unique_from_several_guesses() {
        let (g, m, _) = setup(127);
        let base = solve_logistic(30.0, &g, &m).unwrap();
        for c in [25.0, 30.0, 45.0, 60.0, 200.0] {
            let guess: Vec<f64> = g.nodes().iter().map(|x| c * (0.25 - x * x) * 4.0).collect();
            let t = solve_logistic_from(30.0, &g, &m, &guess).unwrap();
            let d = t.values.iter().zip(&base.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-8);
        }
    }
}
