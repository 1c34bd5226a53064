//! Reparameterization by the diffusion rate `d = 1/λ`, with
//! `(u, v) ↦ (u, v)/λ`; stored states map as `w ↦ w/λ`, `z ↦ z/λ²`.

use super::{wnorm, BifurcationRecord, Branch, BranchPoint, Norms, ParamMode};
use crate::grid::{sup_norm, Grid};
use crate::model::{residual_d_uv, ModelParams, StateUV, StateWZ};

fn scale_fields(s: &StateWZ, a: f64, b: f64) -> StateWZ {
    StateWZ {
        w: s.w.iter().map(|v| v * a).collect(),
        z: s.z.iter().map(|v| v * b).collect(),
    }
}

fn scale_uv(s: &StateUV, a: f64) -> StateUV {
    StateUV {
        u: s.u.iter().map(|v| v * a).collect(),
        v: s.v.iter().map(|v| v * a).collect(),
    }
}

fn scale_norms(n: &Norms, a: f64) -> Norms {
    Norms {
        l2_u: n.l2_u * a,
        l2_v: n.l2_v * a,
        sup_u: n.sup_u * a,
        sup_v: n.sup_v * a,
    }
}

/// Sup-norm of the diffusion-form residual at a `d`-mode point.
pub fn verify_d_point(params: &ModelParams, grid: &Grid, pt: &BranchPoint) -> f64 {
    let (r1, r2) = residual_d_uv(params, pt.param, &pt.uv, grid);
    sup_norm(&r1).max(sup_norm(&r2))
}

fn point_to_d(pt: &BranchPoint, params: &ModelParams, grid: &Grid) -> BranchPoint {
    let lam = pt.param;
    let n2 = pt.tangent.len() - 1;
    let dl = pt.tangent[n2];
    let mut t: Vec<f64> = (0..n2)
        .map(|i| {
            let (x, dx) = (if i % 2 == 0 { pt.state.w[i / 2] } else { pt.state.z[i / 2] }, pt.tangent[i]);
            if i % 2 == 0 {
                dx / lam - x * dl / (lam * lam)
            } else {
                dx / (lam * lam) - 2.0 * x * dl / (lam * lam * lam)
            }
        })
        .collect();
    t.push(-dl / (lam * lam));
    let nrm = wnorm(grid.h(), &t);
    t.iter_mut().for_each(|v| *v /= nrm);
    let mut out = BranchPoint {
        param: 1.0 / lam,
        state: scale_fields(&pt.state, 1.0 / lam, 1.0 / (lam * lam)),
        uv: scale_uv(&pt.uv, 1.0 / lam),
        norms: scale_norms(&pt.norms, 1.0 / lam),
        tangent: t,
        eigs: pt.eigs.clone(),
        det_sign: pt.det_sign,
        arclength: pt.arclength,
        residual: 0.0,
        eig_basis: Vec::new(),
    };
    out.residual = verify_d_point(params, grid, &out);
    out
}

fn point_from_d(pt: &BranchPoint, params: &ModelParams, grid: &Grid) -> BranchPoint {
    let lam = 1.0 / pt.param;
    let n2 = pt.tangent.len() - 1;
    let dlam = -pt.tangent[n2] * lam * lam;
    let mut t: Vec<f64> = (0..n2)
        .map(|i| {
            let (x, dx) = (if i % 2 == 0 { pt.state.w[i / 2] } else { pt.state.z[i / 2] }, pt.tangent[i]);
            if i % 2 == 0 {
                lam * dx + x * dlam
            } else {
                lam * lam * dx + 2.0 * lam * x * dlam
            }
        })
        .collect();
    t.push(dlam);
    let nrm = wnorm(grid.h(), &t);
    t.iter_mut().for_each(|v| *v /= nrm);
    let mut out = BranchPoint {
        param: lam,
        state: scale_fields(&pt.state, lam, lam * lam),
        uv: scale_uv(&pt.uv, lam),
        norms: scale_norms(&pt.norms, lam),
        tangent: t,
        eigs: pt.eigs.clone(),
        det_sign: pt.det_sign,
        arclength: pt.arclength,
        residual: 0.0,
        eig_basis: Vec::new(),
    };
    let p = params.with_lambda(lam);
    let (r1, r2) = crate::model::residual_uv(&p, &out.uv, grid);
    out.residual = sup_norm(&r1).max(sup_norm(&r2));
    out
}

fn map_record(
    rec: &BifurcationRecord,
    pt: BranchPoint,
    to_d: bool,
) -> BifurcationRecord {
    let lam = if to_d { rec.param_at } else { 1.0 / rec.param_at };
    let (a, b) = if to_d { (1.0 / lam, 1.0 / (lam * lam)) } else { (lam, lam * lam) };
    let mut kernel: Vec<f64> = rec
        .kernel
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v * a } else { v * b })
        .collect();
    let s = sup_norm(&kernel);
    if s > 0.0 {
        kernel.iter_mut().for_each(|v| *v /= s);
    }
    BifurcationRecord {
        param_at: pt.param,
        kernel,
        kind: rec.kind,
        localization_width: rec.localization_width * b,
        crossing_count: rec.crossing_count,
        after_index: rec.after_index,
        point: pt,
    }
}

/// Maps a `λ`-mode branch to the diffusion parameterization.
pub fn to_d_mode(branch: &Branch, params: &ModelParams, grid: &Grid) -> Branch {
    assert_eq!(branch.mode, ParamMode::Lambda, "branch is already in d-mode");
    Branch {
        id: branch.id.clone(),
        mode: ParamMode::D,
        parent: branch.parent.as_ref().map(|p| super::ParentRef {
            branch: p.branch.clone(),
            param: 1.0 / p.param,
        }),
        points: branch.points.iter().map(|p| point_to_d(p, params, grid)).collect(),
        bifurcations: branch
            .bifurcations
            .iter()
            .map(|r| map_record(r, point_to_d(&r.point, params, grid), true))
            .collect(),
        first_nonpositive: branch.first_nonpositive,
        termination: branch.termination,
    }
}

/// Inverse of [`to_d_mode`].
pub fn from_d_mode(branch: &Branch, params: &ModelParams, grid: &Grid) -> Branch {
    assert_eq!(branch.mode, ParamMode::D, "branch is not in d-mode");
    Branch {
        id: branch.id.clone(),
        mode: ParamMode::Lambda,
        parent: branch.parent.as_ref().map(|p| super::ParentRef {
            branch: p.branch.clone(),
            param: 1.0 / p.param,
        }),
        points: branch.points.iter().map(|p| point_from_d(p, params, grid)).collect(),
        bifurcations: branch
            .bifurcations
            .iter()
            .map(|r| map_record(r, point_from_d(&r.point, params, grid), false))
            .collect(),
        first_nonpositive: branch.first_nonpositive,
        termination: branch.termination,
    }
}
