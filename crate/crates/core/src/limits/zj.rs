//! The family `−ΔZ = (λ_j m/2) h(Z, 1 − sΦ_j)`, `h(Z, ξ) = √(4Z + ξ²) − ξ`,
//! continued in `s` from `Z_j(0) = Z₀(λ_j)`, with the comparison bounds
//! `(1+|s|)² Z₀(λ_j/(1+|s|)) < Z_j(s) < (1−|s|)² Z₀(λ_j/(1−|s|))`.

use super::{check_weight, solve_semilinear, solve_z0, LimitError, LimitField, LimitKind, Semilinear};
use crate::eigen::eigen_weighted;
use crate::grid::Grid;

const MAX_DS: f64 = 0.02;

fn mode(j: usize, grid: &Grid, m: &[f64]) -> Result<(f64, Vec<f64>), LimitError> {
    if j == 0 {
        return Err(LimitError::InvalidInput("mode index starts at 1".into()));
    }
    let pair = eigen_weighted(grid, m, j)?.remove(j - 1);
    Ok((pair.value, pair.vector))
}

fn zj_newton(lam_j: f64, phi: &[f64], s: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<Vec<f64>, LimitError> {
    let xi: Vec<f64> = phi.iter().map(|f| 1.0 - s * f).collect();
    let sys = Semilinear {
        grid,
        source: |i: usize, z: f64| 0.5 * lam_j * m[i] * ((4.0 * z + xi[i] * xi[i]).sqrt() - xi[i]),
        slope: |i: usize, z: f64| lam_j * m[i] / (4.0 * z + xi[i] * xi[i]).sqrt(),
        admissible: |x: &[f64]| x.iter().zip(&xi).all(|(z, e)| 4.0 * z + e * e > 0.0),
    };
    let z = solve_semilinear(&sys, guess)?;
    if z.iter().all(|v| *v > 0.0) {
        Ok(z)
    } else {
        Err(LimitError::NoPositiveSolution {
            lambda: lam_j,
            threshold: f64::NAN,
        })
    }
}

/// `Z_j(s)` by Newton from `guess`.
pub fn solve_zj_from(j: usize, s: f64, grid: &Grid, m: &[f64], guess: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    let (lam_j, phi) = mode(j, grid, m)?;
    Ok(LimitField {
        kind: LimitKind::Zj,
        param: s,
        values: zj_newton(lam_j, &phi, s, grid, m, guess)?,
    })
}

/// `Z_j(s)` by continuation in `s` from `Z₀(λ_j)`.
pub fn solve_zj(j: usize, s: f64, grid: &Grid, m: &[f64]) -> Result<LimitField, LimitError> {
    check_weight(grid, m)?;
    if !(s.abs() < 1.0) {
        return Err(LimitError::InvalidInput(format!("|s| must be below 1, got {s}")));
    }
    let (lam_j, phi) = mode(j, grid, m)?;
    let mut z = solve_z0(lam_j, grid, m)?.values;
    let steps = (s.abs() / MAX_DS).ceil() as usize;
    for k in 1..=steps {
        let sk = s * k as f64 / steps as f64;
        z = zj_newton(lam_j, &phi, sk, grid, m, &z)?;
    }
    Ok(LimitField {
        kind: LimitKind::Zj,
        param: s,
        values: z,
    })
}

/// Margins of the comparison bounds at one `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub s: f64,
    /// `min(Z_j − lower)` over nodes.
    pub lower_margin: f64,
    /// `min(upper − Z_j)` over nodes.
    pub upper_margin: f64,
    pub first_violation: Option<usize>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn check(&self) -> Result<(), LimitError> {
        match self.first_violation {
            None => Ok(()),
            Some(node) => Err(LimitError::SandwichViolation { node, s: self.s }),
        }
    }
}

/// Evaluates the comparison bounds for `field = Z_j(s)`. Below the existence
/// threshold the lower bound is the zero solution.
pub fn zj_sandwich(j: usize, field: &LimitField, grid: &Grid, m: &[f64]) -> Result<SandwichReport, LimitError> {
    let (lam_j, _) = mode(j, grid, m)?;
    let a = field.param.abs();
    let lower = match solve_z0(lam_j / (1.0 + a), grid, m) {
        Ok(z) => z.values.iter().map(|v| (1.0 + a) * (1.0 + a) * v).collect(),
        Err(LimitError::NoPositiveSolution { .. }) => vec![0.0; grid.n()],
        Err(e) => return Err(e),
    };
    let upper: Vec<f64> = solve_z0(lam_j / (1.0 - a), grid, m)?
        .values
        .iter()
        .map(|v| (1.0 - a) * (1.0 - a) * v)
        .collect();
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    let mut first_violation = None;
    for (i, z) in field.values.iter().enumerate() {
        let (dl, du) = (z - lower[i], upper[i] - z);
        lower_margin = lower_margin.min(dl);
        upper_margin = upper_margin.min(du);
        if (dl <= 0.0 || du <= 0.0) && first_violation.is_none() {
            first_violation = Some(i);
        }
    }
    Ok(SandwichReport {
        s: field.param,
        lower_margin,
        upper_margin,
        first_violation,
    })
}
