use super::{wdot, BifurcationKind, BifurcationRecord, BranchPoint, ContinuationError, Eig, Tracer};
use crate::grid::sup_norm;
use crate::model::{jacobian_wz, StateWZ};
use crate::spectrum::near_null_vector;

/// Number of eigenvalues with modulus below `r`, and how many of those have
/// negative real part.
fn band_counts(eigs: &[Eig], r: f64) -> (usize, usize) {
    let inside: Vec<&Eig> = eigs.iter().filter(|e| e.norm() < r).collect();
    (inside.len(), inside.iter().filter(|e| e.re < 0.0).count())
}

/// Radius separating the small eigenvalues of both endpoints in the same
/// way: equal counts below it on both sides, chosen in the widest relative
/// gap of the combined moduli.
fn common_radius(a: &[Eig], b: &[Eig]) -> Option<f64> {
    let top = |e: &[Eig]| e.iter().map(Eig::norm).fold(0.0, f64::max);
    let r_max = top(a).min(top(b));
    let mut mags: Vec<f64> = a.iter().chain(b).map(Eig::norm).filter(|m| *m < r_max).collect();
    mags.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    let mut best: Option<(f64, f64)> = None;
    for i in 0..mags.len() {
        let lo = mags[i];
        let hi = mags.get(i + 1).copied().unwrap_or(r_max);
        if hi <= lo {
            continue;
        }
        let r = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if band_counts(a, r).0 != band_counts(b, r).0 {
            continue;
        }
        let score = hi / lo.max(1e-300);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, r));
        }
    }
    best.map(|(_, r)| r)
}

#[derive(Clone, Copy)]
enum Indicator {
    Band(f64),
    Det,
}

impl Indicator {
    fn value(&self, p: &BranchPoint) -> i64 {
        match *self {
            Indicator::Band(r) => band_counts(&p.eigs, r).1 as i64,
            Indicator::Det => p.det_sign as i64,
        }
    }
}

impl Tracer {
    /// Checks the segment `prev → cur` (reached with arclength step `ds`)
    /// for eigenvalues crossing zero and localizes the crossing by bisection
    /// in arclength.
    pub fn detect_and_localize(
        &self,
        prev: &BranchPoint,
        cur: &BranchPoint,
        ds: f64,
    ) -> Result<Option<BifurcationRecord>, ContinuationError> {
        if prev.eigs.is_empty() || cur.eigs.is_empty() {
            return Ok(None);
        }
        let radius = common_radius(&prev.eigs, &cur.eigs);
        let (indicator, count) = match radius {
            Some(r) => {
                let na = band_counts(&prev.eigs, r).1 as i32;
                let nb = band_counts(&cur.eigs, r).1 as i32;
                (Indicator::Band(r), nb - na)
            }
            None => (Indicator::Det, 0),
        };
        let det_flip = prev.det_sign != 0 && cur.det_sign != 0 && prev.det_sign != cur.det_sign;
        let indicator = if count == 0 && det_flip { Indicator::Det } else { indicator };
        if count == 0 && !det_flip {
            return Ok(None);
        }
        let count = if count == 0 { 1 } else { count };

        let n2 = 2 * self.grid.n();
        let fold = prev.tangent[n2] * cur.tangent[n2] < 0.0;
        let left_val = indicator.value(prev);
        let mut gap = ds;
        let mut lo_pt = prev.clone();
        let mut hi_pt = cur.clone();
        for _ in 0..60 {
            if (hi_pt.param - lo_pt.param).abs() <= self.cfg.loc_tol || gap.abs() < 1e-14 {
                break;
            }
            // predict from the end farther from the singular point, where the
            // corrector basin is widest; reject jumps onto a crossing branch
            let half = 0.5 * gap;
            let near = |p: &BranchPoint| p.smallest_eig().map_or(0.0, |e| e.norm());
            let order = if near(&lo_pt) >= near(&hi_pt) {
                [(&lo_pt, half), (&hi_pt, -half)]
            } else {
                [(&hi_pt, -half), (&lo_pt, half)]
            };
            let (pmin, pmax) = (lo_pt.param.min(hi_pt.param), lo_pt.param.max(hi_pt.param));
            let slack = 1e-9 * (1.0 + pmax.abs());
            let found = order.iter().find_map(|(from, sigma)| {
                let pt = self.bisection_point(from, *sigma).ok()?;
                let aligned = wdot(self.grid.h(), &pt.tangent, &from.tangent) > 0.9;
                let inside = pt.param >= pmin - slack && pt.param <= pmax + slack;
                (aligned && (inside || fold)).then_some(pt)
            });
            let Some(pt) = found else { break };
            if indicator.value(&pt) == left_val {
                lo_pt = pt;
            } else {
                hi_pt = pt;
            }
            gap = half;
        }
        let (lo_param, hi_param) = (lo_pt.param, hi_pt.param);
        // the bracket end with the smaller leading eigenvalue is closer to singular
        let near = |p: &BranchPoint| p.smallest_eig().map_or(f64::INFINITY, |e| e.norm());
        let base = if near(&hi_pt) < near(&lo_pt) { hi_pt } else { lo_pt };

        let trivial = sup_norm(&base.state.w).max(sup_norm(&base.state.z)) == 0.0;
        let kind = if trivial {
            BifurcationKind::SimpleFromTrivial
        } else if fold {
            BifurcationKind::Fold
        } else {
            BifurcationKind::Pitchfork
        };
        let kernel = self.kernel_at(&base, trivial)?;
        Ok(Some(BifurcationRecord {
            param_at: base.param,
            kernel,
            kind,
            localization_width: (hi_param - lo_param).abs(),
            crossing_count: count,
            after_index: 0,
            point: base,
        }))
    }

    fn bisection_point(&self, from: &BranchPoint, sigma: f64) -> Result<BranchPoint, ContinuationError> {
        let x0 = from.extended();
        let pred: Vec<f64> = x0.iter().zip(&from.tangent).map(|(a, t)| a + sigma * t).collect();
        let c = self.correct(pred, &from.tangent, &x0, sigma)?;
        let t = self.tangent(&c.x, &from.tangent)?;
        let warm = (!from.eig_basis.is_empty()).then_some(from.eig_basis.as_slice());
        self.make_point(&c.x, t, from.arclength + sigma, warm)
    }

    /// Approximate null vector at `pt`, sup-normalized with a positive leading
    /// `w` entry (or `z` entry at the trivial state).
    fn kernel_at(&self, pt: &BranchPoint, trivial: bool) -> Result<Vec<f64>, ContinuationError> {
        let n = self.grid.n();
        let p = self.params.with_lambda(pt.param);
        let j = jacobian_wz(&p, &pt.state, &self.grid)?;
        // at the trivial state the kernel is two-dimensional; the coexistence
        // direction lives in the z block
        let start: Option<Vec<f64>> = trivial.then(|| (0..2 * n).map(|i| (i % 2) as f64).collect());
        let mut k = match j.lu() {
            Ok(lu) => near_null_vector(&lu, start.as_deref())?,
            Err(_) => {
                let mut shifted = j.clone();
                let bump = 1e-10 * j.norm_inf();
                for i in 0..2 * n {
                    shifted.add(i, i, bump);
                }
                near_null_vector(&shifted.lu()?, start.as_deref())?
            }
        };
        let s = sup_norm(&k);
        k.iter_mut().for_each(|v| *v /= s);
        let field = StateWZ::from_vec(&k);
        let lead = if trivial { &field.z } else { &field.w };
        let big = sup_norm(lead);
        let sign = lead
            .iter()
            .find(|v| v.abs() > 1e-3 * big)
            .map_or(1.0, |v| v.signum());
        k.iter_mut().for_each(|v| *v *= sign);
        Ok(k)
    }
}
