//! Shooting for sign-changing solutions of
//! `w'' + λ m w − b₁ w₊² + c₂ w₋² = 0`, `w(−ℓ) = w(ℓ) = 0`, constant `m`.
//!
//! Each positive or negative hump of this autonomous equation lasts longer
//! the larger its energy, so the position of the `j`-th zero increases with
//! the initial slope; bisection on the slope therefore finds the unique
//! solution with `j − 1` interior zeros and a given initial sign.

use serde::{Deserialize, Serialize};

use super::{Dopri5, LimitError, Ls2Coeffs, Sign};
use crate::grid::{build_grid, sup_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub lambda: f64,
    pub j: usize,
    pub sign: Sign,
    /// Initial slope `w'(−ℓ)`.
    pub slope0: f64,
    /// Interior sign changes.
    pub zeros: usize,
    /// Sign of `w'(0)`; zero when `|w'(0)|` is at roundoff level.
    pub sign_at_center: i8,
    /// Interior grid nodes of `(−ℓ, ℓ)` and the samples of `w` there.
    pub nodes: Vec<f64>,
    pub w: Vec<f64>,
    /// `w(ℓ)` reached by the accepted slope.
    pub end_value: f64,
    /// Smallest `|w'|` at an interior zero relative to `max |w'|`.
    pub crossing_slope_ratio: f64,
}

impl ShootingSolution {
    /// Positive and negative parts `(w₊, w₋)`.
    pub fn parts(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.w.iter().map(|v| v.max(0.0)).collect(),
            self.w.iter().map(|v| (-v).max(0.0)).collect(),
        )
    }
}

struct Run {
    zeros: usize,
    end: f64,
    samples: Vec<f64>,
    center_slope: f64,
    crossing_slope: f64,
    max_slope: f64,
}

fn integrate(c: &Ls2Coeffs, lambda: f64, slope: f64, stops: &[f64]) -> Result<Run, String> {
    let lm = lambda * c.m;
    let rhs = |_: f64, y: &[f64; 2]| {
        let w = y[0];
        let react = if w > 0.0 { c.b1 * w * w } else { -c.c2 * w * w };
        [y[1], -lm * w + react]
    };
    let ode = Dopri5::default();
    let mut zeros = 0;
    let mut prev: Option<[f64; 2]> = None;
    let mut samples = Vec::with_capacity(stops.len());
    let mut center_slope = f64::NAN;
    let mut crossing_slope = f64::INFINITY;
    let mut max_slope = 0.0_f64;
    let ell = c.ell;
    let (end, _) = ode.integrate(rhs, -ell, [0.0, slope], ell, stops, |t, y, _, at_stop| {
        max_slope = max_slope.max(y[1].abs());
        if let Some(yp) = prev {
            // a zero landing exactly on ℓ is the boundary condition, not a crossing
            let crossed = yp[0] * y[0] < 0.0 || (y[0] == 0.0 && yp[0] != 0.0 && t < ell);
            if crossed {
                zeros += 1;
                let th = yp[0] / (yp[0] - y[0]);
                crossing_slope = crossing_slope.min((yp[1] + th * (y[1] - yp[1])).abs());
            }
        }
        prev = Some(*y);
        if at_stop && t < ell {
            if t == 0.0 {
                center_slope = y[1];
            }
            samples.push(y[0]);
        }
    })?;
    Ok(Run {
        zeros,
        end: end[0],
        samples,
        center_slope,
        crossing_slope,
        max_slope,
    })
}

/// Solution with `j − 1` interior zeros and initial slope of sign `sign`,
/// sampled at the `n` interior nodes of a uniform grid on `(−ℓ, ℓ)`.
pub fn shoot_ls2(c: &Ls2Coeffs, lambda: f64, j: usize, sign: Sign, n: usize) -> Result<ShootingSolution, LimitError> {
    c.validate()?;
    if j == 0 {
        return Err(LimitError::InvalidInput("mode index starts at 1".into()));
    }
    let threshold = c.eigenvalue(j);
    if !(lambda > threshold) {
        return Err(LimitError::NoSolutionInClass { j, lambda, threshold });
    }
    let grid = build_grid(-c.ell, c.ell, n).map_err(|e| LimitError::InvalidInput(e.to_string()))?;
    let nodes = grid.nodes();
    let mut stops = nodes.clone();
    // x = 0 is sampled for the slope there even when it is not a node
    let inserted = match nodes.binary_search_by(|x| x.total_cmp(&0.0)) {
        Ok(_) => None,
        Err(pos) => {
            stops.insert(pos, 0.0);
            Some(pos)
        }
    };

    // humps stay bounded below the saddle energy (λm)³/(6κ²) of each sign
    let lm = lambda * c.m;
    let first = if sign == Sign::Plus { c.b1 } else { c.c2 };
    let kappa = if j == 1 { first } else { c.b1.max(c.c2) };
    let slope_max = (lm.powi(3) / 3.0).sqrt() / kappa;
    let run = |s: f64| integrate(c, lambda, sign.factor() * s, &stops).map_err(LimitError::BisectionFailure);

    let mut lo = 1e-8 * slope_max;
    let mut hi = slope_max * (1.0 - 1e-9);
    let r_lo = run(lo)?;
    if r_lo.zeros < j {
        return Err(LimitError::BisectionFailure(format!(
            "small initial slope gives {} zeros, expected at least {j}",
            r_lo.zeros
        )));
    }
    let r_hi = run(hi)?;
    if r_hi.zeros >= j {
        return Err(LimitError::BisectionFailure(format!(
            "slope bound {hi:e} still gives {} zeros",
            r_hi.zeros
        )));
    }
    let (mut best_lo, mut best_hi) = (r_lo, r_hi);
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = run(mid)?;
        if r.zeros >= j {
            lo = mid;
            best_lo = r;
        } else {
            hi = mid;
            best_hi = r;
        }
    }
    // the lower end may carry a zero at ℓ itself
    let (slope, r) = if best_hi.end.abs() <= best_lo.end.abs() && best_hi.zeros == j - 1 {
        (hi, best_hi)
    } else {
        (lo, best_lo)
    };
    let zeros = if r.zeros >= j { j - 1 } else { r.zeros };
    if zeros != j - 1 {
        return Err(LimitError::BisectionFailure(format!("converged with {} interior zeros", r.zeros)));
    }
    let mut w = r.samples;
    if let Some(pos) = inserted {
        w.remove(pos);
    }
    let scale = sup_norm(&w).max(1.0);
    if r.end.abs() > 1e-8 * scale {
        return Err(LimitError::BisectionFailure(format!("end value {:e} after bisection", r.end)));
    }
    let center = r.center_slope;
    let sign_at_center = if center.abs() <= 1e-8 * r.max_slope {
        0
    } else if center > 0.0 {
        1
    } else {
        -1
    };
    Ok(ShootingSolution {
        lambda,
        j,
        sign,
        slope0: sign.factor() * slope,
        zeros,
        sign_at_center,
        nodes,
        w,
        end_value: r.end,
        crossing_slope_ratio: if j == 1 { 1.0 } else { r.crossing_slope / r.max_slope },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn coeffs() -> Ls2Coeffs {
        Ls2Coeffs { b1: 3.0, c2: 1.0, m: 1.0, ell: 0.5 }
    }

    #[test]
    fn below_branch_start_rejected() {
        let c = coeffs();
        let lam2 = c.eigenvalue(2);
        assert!(matches!(
            shoot_ls2(&c, 0.9 * lam2, 2, Sign::Plus, 63),
            Err(LimitError::NoSolutionInClass { j: 2, .. })
        ));
    }

    #[test]
    fn near_onset_looks_like_second_mode() {
        let c = coeffs();
        let lam = 1.01 * c.eigenvalue(2);
        let s = shoot_ls2(&c, lam, 2, Sign::Plus, 127).unwrap();
        assert_eq!(s.zeros, 1);
        let amp = sup_norm(&s.w);
        let shape: Vec<f64> = s.nodes.iter().map(|x| (2.0 * PI * (x + 0.5) / 1.0).sin()).collect();
        let d = s.w.iter().zip(&shape).map(|(a, b)| (a / amp - b).abs()).fold(0.0, f64::max);
        assert!(d < 0.05, "shape deviation {d}");
        assert!(s.end_value.abs() < 1e-10);
    }

    #[test]
    fn minus_branch_is_reflection_for_even_mode() {
        let c = coeffs();
        let lam = 43.0673;
        let p = shoot_ls2(&c, lam, 2, Sign::Plus, 255).unwrap();
        let m = shoot_ls2(&c, lam, 2, Sign::Minus, 255).unwrap();
        let n = p.w.len();
        for i in 0..n {
            assert!((m.w[i] - p.w[n - 1 - i]).abs() < 1e-8);
        }
    }

    #[test]
    fn zeros_are_simple() {
        let c = coeffs();
        for (j, lam) in [(2, 43.0673), (3, 91.5836), (3, 200.0)] {
            for sign in [Sign::Plus, Sign::Minus] {
                let s = shoot_ls2(&c, lam, j, sign, 255).unwrap();
                assert_eq!(s.zeros, j - 1);
                assert!(s.crossing_slope_ratio >= 1e-6);
            }
        }
    }

    #[test]
    fn odd_mode_is_symmetric() {
        let c = coeffs();
        let s = shoot_ls2(&c, 91.5836, 3, Sign::Plus, 255).unwrap();
        assert_eq!(s.sign_at_center, 0);
        let n = s.w.len();
        for i in 0..n {
            assert!((s.w[i] - s.w[n - 1 - i]).abs() < 1e-8);
        }
    }

    #[test]
    fn principal_mode_is_positive() {
        let c = coeffs();
        let s = shoot_ls2(&c, 20.0, 1, Sign::Plus, 63).unwrap();
        assert!(s.w.iter().all(|v| *v > 0.0));
        let s = shoot_ls2(&c, 20.0, 1, Sign::Minus, 63).unwrap();
        assert!(s.w.iter().all(|v| *v < 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn nodal_pattern_matches_index(j in 1usize..5, over in 1.05f64..4.0, b1 in 0.5f64..4.0, c2 in 0.5f64..4.0, plus in any::<bool>()) {
            let c = Ls2Coeffs { b1, c2, m: 1.0, ell: 0.5 };
            let sign = if plus { Sign::Plus } else { Sign::Minus };
            let s = shoot_ls2(&c, over * c.eigenvalue(j), j, sign, 127).unwrap();
            prop_assert_eq!(s.zeros, j - 1);
            prop_assert_eq!(crate::limits::sign_changes(&s.w), j - 1);
            let first = s.w.iter().find(|v| **v != 0.0).copied().unwrap();
            prop_assert!(first * sign.factor() > 0.0);
        }
    }
}
