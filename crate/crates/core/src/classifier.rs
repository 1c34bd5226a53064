//! Sweeps in the cross-diffusion strength `α` at fixed `λ`, and the
//! classification of the limit of a solution family as small coexistence
//! (`α(u, v) → (U, U)`) or complete segregation (`(u, v) → (w₊, w₋)`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::{BranchPoint, ContinuationConfig, ContinuationError, Tracer};
use crate::eigen::{eigen_weighted, EigenError};
use crate::grid::{sup_norm, Grid};
use crate::limits::{grid_solve_ls2, limit_u, shoot_ls2, LimitError, Ls2Coeffs, Reaction, Sign};
use crate::model::{uv_from_wz, wz_from_uv, ModelError, ModelParams, StateWZ};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid sweep input: {0}")]
    InvalidInput(String),
    #[error("classification needs at least 3 values of alpha, got {got}")]
    TooFewAlphas { got: usize },
    #[error("rate fit needs at least 4 positive values, got {got}")]
    TooFewValues { got: usize },
    #[error("metric spans only {decades:.3} decades")]
    DegenerateFit { decades: f64 },
    #[error("re-convergence failed at alpha = {alpha}: {source}")]
    SweepBroken {
        alpha: f64,
        partial: Box<SweepReport>,
        #[source]
        source: ContinuationError,
    },
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// How the state is carried from one `α` to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarmStart {
    /// Keep the scaled `(αw, α²z)`, which stay regular on the coexistence branch.
    Coexistence,
    /// Keep `(u, v)`, which converge to the segregated profiles.
    Segregation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Allowed variation factor of `α‖u‖∞` over the top decade of `α`.
    pub amplitude_factor: f64,
    /// Bound on `‖αu − αv‖∞ / ‖αu‖∞` at the largest `α`.
    pub symmetry: f64,
    /// Bound on `‖uv‖∞ / (‖u‖∞‖v‖∞)` at the largest `α`.
    pub product: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            amplitude_factor: 2.0,
            symmetry: 0.1,
            product: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub warm_start: WarmStart,
    /// Index of the sign-changing limit profile to compare with, if any.
    pub mode: Option<usize>,
    /// Largest ratio between consecutive solves; requested `α` values further
    /// apart are bridged by log-spaced substeps.
    pub max_ratio: f64,
    pub thresholds: Thresholds,
    pub continuation: ContinuationConfig,
}

impl SweepOptions {
    pub fn new(warm_start: WarmStart) -> Self {
        Self {
            warm_start,
            mode: None,
            max_ratio: 1.5,
            thresholds: Thresholds::default(),
            continuation: ContinuationConfig::default(),
        }
    }

    pub fn with_mode(mut self, j: usize) -> Self {
        self.mode = Some(j);
        self
    }
}

/// Per-`α` diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub alpha: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    /// `‖uv‖∞`.
    pub product: f64,
    /// `‖αu − αv‖∞`.
    pub scaled_gap: f64,
    /// `α‖u‖∞`.
    pub scaled_amplitude: f64,
    /// `‖αu − U‖∞`.
    pub dist_to_limit_u: f64,
    /// `‖u − w₊‖∞ + ‖v − w₋‖∞`, when a profile index was given.
    pub dist_to_segregation: Option<f64>,
}

impl SweepMetrics {
    fn normalized_product(&self) -> f64 {
        self.product / (self.sup_u * self.sup_v)
    }

    fn is_finite(&self) -> bool {
        [
            self.sup_u,
            self.sup_v,
            self.product,
            self.scaled_gap,
            self.scaled_amplitude,
            self.dist_to_limit_u,
        ]
        .iter()
        .chain(self.dist_to_segregation.iter())
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    SmallCoexistence,
    CompleteSegregation,
    Undetermined,
}

/// Which metric to fit a decay rate to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMetric {
    Product,
    ScaledGap,
    DistToLimitU,
    DistToSegregation,
}

impl SweepMetric {
    fn of(self, m: &SweepMetrics) -> Option<f64> {
        match self {
            Self::Product => Some(m.product),
            Self::ScaledGap => Some(m.scaled_gap),
            Self::DistToLimitU => Some(m.dist_to_limit_u),
            Self::DistToSegregation => m.dist_to_segregation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub points: Vec<BranchPoint>,
    pub metrics: Vec<SweepMetrics>,
    pub verdict: Verdict,
    pub fitted_rate: Option<f64>,
    pub thresholds: Thresholds,
    /// `‖U‖∞`, for relative distances.
    pub limit_u_sup: f64,
    /// Sign of the first hump of the segregated profile, when one was used.
    pub profile_sign: Option<Sign>,
    pub notes: Vec<String>,
}

const FAMILY_NOTE: &str = "the classification assumes the whole computed family converges; the limit theory only guarantees convergence along a subsequence";

impl SweepReport {
    fn empty(lambda: f64, thresholds: Thresholds) -> Self {
        Self {
            lambda,
            alphas: Vec::new(),
            points: Vec::new(),
            metrics: Vec::new(),
            verdict: Verdict::Undetermined,
            fitted_rate: None,
            thresholds,
            limit_u_sup: 0.0,
            profile_sign: None,
            notes: vec![FAMILY_NOTE.to_string()],
        }
    }

    /// `max(‖u‖∞/‖v‖∞, ‖v‖∞/‖u‖∞)` over the sweep; a single `δ` with
    /// `δ < ‖u‖∞/‖v‖∞ < 1/δ` exists iff this is finite.
    pub fn amplitude_ratio_spread(&self) -> f64 {
        self.metrics
            .iter()
            .map(|m| (m.sup_u / m.sup_v).max(m.sup_v / m.sup_u))
            .fold(1.0, f64::max)
    }

    fn finish(&mut self, warm: WarmStart) {
        if self.metrics.len() >= 3 {
            self.verdict = classify(self).unwrap_or(Verdict::Undetermined);
        }
        let metric = match (warm, self.metrics.iter().all(|m| m.dist_to_segregation.is_some())) {
            (WarmStart::Coexistence, _) => SweepMetric::DistToLimitU,
            (WarmStart::Segregation, true) => SweepMetric::DistToSegregation,
            (WarmStart::Segregation, false) => SweepMetric::Product,
        };
        match fit_rate(self, metric) {
            Ok(p) => self.fitted_rate = Some(p),
            Err(e) => self.notes.push(format!("no rate fitted: {e}")),
        }
    }
}

/// Limit profiles a sweep is measured against.
struct Targets {
    u: Vec<f64>,
    segregated: Option<(Vec<f64>, Vec<f64>, Sign)>,
}

fn constant(m: &[f64]) -> Option<f64> {
    let first = *m.first()?;
    m.iter().all(|v| *v == first).then_some(first)
}

fn first_sign(w: &[f64]) -> Sign {
    match w.iter().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => Sign::Minus,
        _ => Sign::Plus,
    }
}

fn targets(p: &ModelParams, grid: &Grid, lambda: f64, seed: &BranchPoint, j: Option<usize>) -> Result<Targets, ClassifierError> {
    let u = limit_u(lambda, grid, &p.m)?.values;
    let segregated = match j {
        None => None,
        Some(j) => {
            let sign = first_sign(&seed.state.w);
            let w = match (constant(&p.m), grid.a() + grid.b() == 0.0) {
                (Some(m), true) => {
                    let c = Ls2Coeffs {
                        b1: p.b1,
                        c2: p.c2,
                        m,
                        ell: grid.b(),
                    };
                    shoot_ls2(&c, lambda, j, sign, grid.n())?.w
                }
                // shooting needs a constant weight on a symmetric interval
                _ => grid_solve_ls2(Reaction { b1: p.b1, c2: p.c2 }, lambda, j, sign, grid, &p.m)?.values,
            };
            let plus = w.iter().map(|v| v.max(0.0)).collect();
            let minus = w.iter().map(|v| (-v).max(0.0)).collect();
            Some((plus, minus, sign))
        }
    };
    Ok(Targets { u, segregated })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn measure(alpha: f64, pt: &BranchPoint, t: &Targets) -> SweepMetrics {
    let (u, v) = (&pt.uv.u, &pt.uv.v);
    let product = u.iter().zip(v).map(|(a, b)| (a * b).abs()).fold(0.0, f64::max);
    let scaled_u: Vec<f64> = u.iter().map(|x| alpha * x).collect();
    let scaled_gap = u.iter().zip(v).map(|(a, b)| alpha * (a - b).abs()).fold(0.0, f64::max);
    SweepMetrics {
        alpha,
        sup_u: sup_norm(u),
        sup_v: sup_norm(v),
        product,
        scaled_gap,
        scaled_amplitude: sup_norm(&scaled_u),
        dist_to_limit_u: max_diff(&scaled_u, &t.u),
        dist_to_segregation: t
            .segregated
            .as_ref()
            .map(|(plus, minus, _)| max_diff(u, plus) + max_diff(v, minus)),
    }
}

fn carry(state: &StateWZ, from: f64, to: f64, warm: WarmStart) -> Result<StateWZ, ModelError> {
    Ok(match warm {
        WarmStart::Coexistence => state.scaled(from).unscaled(to),
        WarmStart::Segregation => wz_from_uv(&uv_from_wz(state, 1.0 / from)?, 1.0 / to),
    })
}

fn check_lambda(p: &ModelParams, grid: &Grid, lambda: f64) -> Result<f64, ClassifierError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(ClassifierError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let k = 8.min(grid.n());
    let eigs = eigen_weighted(grid, &p.m, k)?;
    for (i, e) in eigs.iter().enumerate().skip(1) {
        if (lambda - e.value).abs() <= 1e-6 * e.value {
            return Err(ClassifierError::InvalidInput(format!(
                "lambda = {lambda} coincides with eigenvalue {} = {}",
                i + 1,
                e.value
            )));
        }
    }
    Ok(eigs[0].value)
}

/// Re-converges the branch through `seed` (a converged point at `params.alpha`
/// and `lambda`) at each of the ascending `alphas`, warm-starting from the
/// previous value. Below the principal eigenvalue no positive solution exists
/// and an empty report is returned with a note; `seed` may then be `None`.
pub fn alpha_sweep(
    params: &ModelParams,
    grid: &Grid,
    lambda: f64,
    alphas: &[f64],
    seed: Option<&BranchPoint>,
    opts: &SweepOptions,
) -> Result<SweepReport, ClassifierError> {
    params.check_grid(grid)?;
    let lam1 = check_lambda(params, grid, lambda)?;
    let mut report = SweepReport::empty(lambda, opts.thresholds);
    if lambda <= lam1 {
        report.notes.push(format!(
            "NoPositiveSolution: lambda = {lambda} does not exceed the principal eigenvalue {lam1}"
        ));
        return Ok(report);
    }
    let seed = seed.ok_or_else(|| ClassifierError::InvalidInput("a seed point is required above the principal eigenvalue".into()))?;
    if alphas.is_empty() || alphas.windows(2).any(|w| !(w[1] > w[0])) || !alphas.iter().all(|a| a.is_finite()) {
        return Err(ClassifierError::InvalidInput("alphas must be finite and strictly increasing".into()));
    }
    if !(alphas[0] >= params.alpha) {
        return Err(ClassifierError::InvalidInput(format!(
            "the seed is converged at alpha = {}, above the first requested value {}",
            params.alpha, alphas[0]
        )));
    }
    if (seed.param - lambda).abs() > 1e-12 * lambda {
        return Err(ClassifierError::InvalidInput(format!(
            "seed is at lambda = {}, not {lambda}",
            seed.param
        )));
    }
    if !(opts.max_ratio > 1.0) {
        return Err(ClassifierError::InvalidInput("max_ratio must exceed 1".into()));
    }
    let t = targets(params, grid, lambda, seed, opts.mode)?;
    report.limit_u_sup = sup_norm(&t.u);
    report.profile_sign = t.segregated.as_ref().map(|s| s.2);

    let solve = |alpha: f64, guess: &StateWZ| -> Result<BranchPoint, ContinuationError> {
        let tracer = Tracer::new(params.with_alpha(alpha).with_lambda(lambda), grid.clone(), opts.continuation.clone())?;
        tracer.point_from_state(guess, lambda, false)
    };
    let mut alpha = params.alpha;
    let mut state = seed.state.clone();
    for &target in alphas {
        while alpha < target {
            let mut ratio = opts.max_ratio.min(target / alpha);
            let mut halvings = 0;
            let next = loop {
                let next = if ratio >= target / alpha { target } else { alpha * ratio };
                match carry(&state, alpha, next, opts.warm_start)
                    .map_err(ContinuationError::from)
                    .and_then(|g| solve(next, &g))
                {
                    Ok(pt) => break Ok((next, pt)),
                    Err(e) if halvings >= 6 => break Err(e),
                    Err(_) => {
                        ratio = ratio.sqrt();
                        halvings += 1;
                    }
                }
            };
            match next {
                Ok((a, pt)) => {
                    alpha = a;
                    state = pt.state.clone();
                    if alpha == target {
                        report.alphas.push(alpha);
                        report.metrics.push(measure(alpha, &pt, &t));
                        report.points.push(pt);
                    }
                }
                Err(source) => {
                    report.finish(opts.warm_start);
                    return Err(ClassifierError::SweepBroken {
                        alpha,
                        partial: Box::new(report),
                        source,
                    });
                }
            }
        }
        if alpha == target && report.alphas.last() != Some(&target) {
            // the first requested value coincides with the seed's own alpha
            let pt = solve(alpha, &state).map_err(|source| ClassifierError::SweepBroken {
                alpha,
                partial: Box::new(report.clone()),
                source,
            })?;
            report.alphas.push(alpha);
            report.metrics.push(measure(alpha, &pt, &t));
            report.points.push(pt);
        }
    }
    if let Some(bad) = report.metrics.iter().find(|m| !m.is_finite()) {
        report.notes.push(format!("non-finite metrics at alpha = {}", bad.alpha));
    }
    report.finish(opts.warm_start);
    Ok(report)
}

/// Decision rule on the computed sweep.
pub fn classify(report: &SweepReport) -> Result<Verdict, ClassifierError> {
    let ms = &report.metrics;
    if ms.len() < 3 {
        return Err(ClassifierError::TooFewAlphas { got: ms.len() });
    }
    let th = report.thresholds;
    let last = ms[ms.len() - 1];
    let top: Vec<f64> = ms
        .iter()
        .filter(|m| m.alpha >= last.alpha / 10.0)
        .map(|m| m.scaled_amplitude)
        .collect();
    let (lo, hi) = top.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), v| (l.min(*v), h.max(*v)));
    if lo > 0.0 && hi < th.amplitude_factor * lo && last.scaled_gap < th.symmetry * last.scaled_amplitude {
        return Ok(Verdict::SmallCoexistence);
    }
    let decreasing = ms.windows(2).all(|w| w[1].normalized_product() < w[0].normalized_product());
    if last.normalized_product() < th.product && decreasing {
        return Ok(Verdict::CompleteSegregation);
    }
    Ok(Verdict::Undetermined)
}

/// Exponent `p` of a least-squares fit `metric ≈ C α^(−p)` in log–log scale.
pub fn fit_rate(report: &SweepReport, metric: SweepMetric) -> Result<f64, ClassifierError> {
    let pts: Vec<(f64, f64)> = report
        .metrics
        .iter()
        .filter_map(|m| metric.of(m).map(|v| (m.alpha, v)))
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|(a, v)| (a.ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(ClassifierError::TooFewValues { got: pts.len() });
    }
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, y)| (l.min(*y), h.max(*y)));
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < 1.0 {
        return Err(ClassifierError::DegenerateFit { decades });
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(-sxy / sxx)
}
