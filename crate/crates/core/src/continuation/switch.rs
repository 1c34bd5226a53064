use super::{wdot, wnorm, BifurcationKind, BifurcationRecord, BranchPoint, ContinuationError, Tracer};
use crate::grid::sup_norm;

impl Tracer {
    /// Default predictor amplitude for [`Tracer::switch_branch`].
    pub fn default_switch_delta(base: &BranchPoint) -> f64 {
        let s = sup_norm(&base.state.w).max(sup_norm(&base.state.z));
        (1e-2 * s).max(1e-3)
    }

    /// Corrects `base ± delta·kernel` onto the bifurcating branch, returning
    /// the `(+, −)` points. Each side retries twice with doubled amplitude.
    pub fn switch_branch(
        &self,
        rec: &BifurcationRecord,
        base: &BranchPoint,
        delta: f64,
    ) -> Result<(BranchPoint, BranchPoint), ContinuationError> {
        if rec.kind == BifurcationKind::Fold {
            return Err(ContinuationError::SwitchFailure("cannot switch at a fold".into()));
        }
        if !(delta > 0.0) {
            return Err(ContinuationError::SwitchFailure(format!(
                "predictor amplitude must be positive, got {delta}"
            )));
        }
        let upper = self.switch_side(rec, base, delta)?;
        let lower = self.switch_side(rec, base, -delta)?;
        Ok((upper, lower))
    }

    fn switch_side(
        &self,
        rec: &BifurcationRecord,
        base: &BranchPoint,
        delta: f64,
    ) -> Result<BranchPoint, ContinuationError> {
        let h = self.grid.h();
        let mut dir = rec.kernel.clone();
        dir.push(0.0);
        let dn = wnorm(h, &dir);
        dir.iter_mut().for_each(|v| *v /= dn);
        // component of the kernel direction transverse to the base branch
        let along = wdot(h, &dir, &base.tangent);
        let perp: Vec<f64> = dir.iter().zip(&base.tangent).map(|(d, t)| d - along * t).collect();
        let perp_norm = wnorm(h, &perp);
        let x0 = base.extended();
        let mut last_err = String::new();
        // the kernel is sup-normalized, so `delta` is in state units
        let mut step = delta * dn;
        for _ in 0..3 {
            let pred: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            match self.correct(pred, &dir, &x0, step) {
                Ok(c) => {
                    let diff: Vec<f64> = c.x.iter().zip(&x0).map(|(a, b)| a - b).collect();
                    let a = wdot(h, &diff, &base.tangent);
                    let off: Vec<f64> = diff.iter().zip(&base.tangent).map(|(d, t)| d - a * t).collect();
                    let dist = wnorm(h, &off);
                    let need = (10.0 * c.residual).max(0.1 * step.abs() * perp_norm);
                    if dist > need {
                        let sign = if step > 0.0 { 1.0 } else { -1.0 };
                        let orient: Vec<f64> = dir.iter().map(|v| sign * v).collect();
                        let t = self.tangent(&c.x, &orient)?;
                        let warm = (!base.eig_basis.is_empty()).then_some(base.eig_basis.as_slice());
                        let pt = self.make_point(&c.x, t, 0.0, warm)?;
                        return Ok(pt);
                    }
                    last_err = format!("fell back onto the base branch (offset {dist:e})");
                }
                Err(e) => last_err = e.to_string(),
            }
            step *= 2.0;
        }
        Err(ContinuationError::SwitchFailure(format!(
            "{} side at parameter {}: {last_err}",
            if delta > 0.0 { "upper" } else { "lower" },
            rec.param_at
        )))
    }
}
