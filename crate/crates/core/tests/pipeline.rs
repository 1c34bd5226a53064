use skt_core::classifier::{alpha_sweep, SweepOptions, Verdict, WarmStart};
use skt_core::continuation::{to_d_mode, BifurcationKind, ContinuationConfig, Tracer};
use skt_core::grid::{build_grid, sup_norm, Grid};
use skt_core::limits::{
    grid_solve_ls2, limit_u, shoot_ls2, solve_sublinear, solve_z0, Ls2Coeffs, Reaction, Sign, SublinearKind,
};
use skt_core::model::ModelParams;

fn setup(n: usize, b: (f64, f64), c: (f64, f64)) -> (Grid, ModelParams, Tracer) {
    let g = build_grid(-0.5, 0.5, n).unwrap();
    let p = ModelParams::new(20.0, b.0, b.1, c.0, c.1, vec![1.0; n], 10.0).unwrap();
    let t = Tracer::new(p.clone(), g.clone(), ContinuationConfig::default()).unwrap();
    (g, p, t)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn switched_sides_are_mirror_images_and_segregate() {
    let (g, p, t) = setup(127, (3.0, 2.0), (2.0, 1.0));
    let seed = t.seed_primary_branch(1e-2, (5.0, 45.0)).unwrap();
    let c = t.trace_branch("C", seed, (5.0, 45.0)).unwrap();
    let rec = c
        .bifurcations
        .iter()
        .find(|r| r.kind == BifurcationKind::Pitchfork)
        .expect("pitchfork on the coexistence branch");
    assert!((rec.param_at - 4.0 * std::f64::consts::PI.powi(2)).abs() < 0.05 * rec.param_at);
    let (up, lo) = t.switch_branch(rec, &rec.point, Tracer::default_switch_delta(&rec.point)).unwrap();
    let window = (rec.param_at - 1.0, 44.0);
    let bu = t.trace_branch("up", up, window).unwrap();
    let bl = t.trace_branch("lo", lo, window).unwrap();
    let a = t.point_at_param(&bu, 43.0).unwrap();
    let b = t.point_at_param(&bl, 43.0).unwrap();
    assert!(max_diff(&a.uv.u, &g.reflect(&b.uv.u)) < 1e-6);
    assert!(max_diff(&a.uv.v, &g.reflect(&b.uv.v)) < 1e-6);

    let opts = SweepOptions::new(WarmStart::Segregation).with_mode(2);
    let r = alpha_sweep(&p.with_lambda(43.0), &g, 43.0, &[20.0, 100.0, 1e3, 1e4], Some(&a), &opts).unwrap();
    assert_eq!(r.verdict, Verdict::CompleteSegregation);
    let last = r.metrics.last().unwrap();
    assert!(last.dist_to_segregation.unwrap() < 0.1 * last.sup_u.max(last.sup_v));
    assert!(r.amplitude_ratio_spread() < 10.0);
}

#[test]
fn diffusion_parameter_records() {
    let (g, p, t) = setup(127, (1.0, 2.0), (1.0, 1.0));
    let trivial = t.trace_branch("0", t.trivial_point(8.0).unwrap(), (8.0, 12.0)).unwrap();
    let d = to_d_mode(&trivial, &p, &g);
    let d1 = d.bifurcations[0].param_at;
    assert!((d1 - 1.0 / std::f64::consts::PI.powi(2)).abs() < 0.01 * d1);
    // decreasing λ is increasing d
    for w in d.points.windows(2) {
        assert!(w[1].param < w[0].param);
    }
}

#[test]
fn limit_ratios_converge_with_lambda() {
    let g = build_grid(-0.5, 0.5, 127).unwrap();
    let m = vec![1.0; 127];
    let psi = solve_sublinear(SublinearKind::Psi, &g, &m).unwrap();
    let zeta = solve_sublinear(SublinearKind::Zeta0, &g, &m).unwrap();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for lam in [1e2, 1e3, 1e4] {
        let u: Vec<f64> = limit_u(lam, &g, &m).unwrap().values.iter().map(|v| v / lam).collect();
        let z: Vec<f64> = solve_z0(lam, &g, &m).unwrap().values.iter().map(|v| v / (lam * lam)).collect();
        let eu = max_diff(&u, &psi.values) / sup_norm(&psi.values);
        let ez = max_diff(&z, &zeta.values) / sup_norm(&zeta.values);
        assert!(eu < prev.0 && ez < prev.1, "λ = {lam}: {eu} {ez}");
        prev = (eu, ez);
    }
    assert!(prev.0 < 0.02 && prev.1 < 0.02);
}

#[test]
fn shooting_and_grid_profiles_converge_together() {
    let c = Ls2Coeffs { b1: 3.0, c2: 1.0, m: 1.0, ell: 0.5 };
    let r = Reaction { b1: 3.0, c2: 1.0 };
    for sign in [Sign::Plus, Sign::Minus] {
        let gaps: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let g = build_grid(-0.5, 0.5, n).unwrap();
                let s = shoot_ls2(&c, 60.0, 2, sign, n).unwrap();
                let w = grid_solve_ls2(r, 60.0, 2, sign, &g, &vec![1.0; n]).unwrap();
                max_diff(&s.w, &w.values)
            })
            .collect();
        for w in gaps.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.7..2.3).contains(&order), "{gaps:?}");
        }
    }
}
