//! Subcommand implementations behind the `skt` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use skt_core::classifier::{alpha_sweep, ClassifierError};
use skt_core::continuation::{
    from_d_mode, to_d_mode, BifurcationKind, Branch, ContinuationError, ParamMode, ParentRef, Tracer,
};
use skt_core::eigen::eigenvalues_weighted;
use skt_core::grid::{sup_norm, Grid};
use skt_core::limits::{
    limit_u, shoot_ls2, solve_logistic, solve_sublinear, solve_z0, solve_zj, Ls2Coeffs, Sign, SublinearKind,
};
use skt_core::model::{residual_wz, term_scale, ModelParams};

use crate::config::{load_config, parse_window, ConfigError, Mode, RunConfig, WeightSpec};
use crate::io::{read_profile, read_sidecar, write_branch, write_json, write_profile, write_text, IoError, Sidecar};
use crate::manifest::Manifest;
use crate::svg::{self, Series, PALETTE};

/// Relative residual a stored point must meet on reload.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "skt", version, about = "Steady states of a cross-diffusion competition system on an interval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace the trivial and coexistence branches over a window.
    Trace(TraceArgs),
    /// Switch onto the branches through a recorded pitchfork.
    Switch(SwitchArgs),
    /// Follow a solution in alpha and classify the limit.
    Sweep(SweepArgs),
    /// Solve the limiting scalar problems at one lambda.
    Limits(LimitsArgs),
    /// Shoot the sign-changing segregation profile.
    Shoot(ShootArgs),
    /// Weighted Dirichlet eigenvalues of the discrete operator.
    Eigs(EigsArgs),
    /// Render SVG diagrams and profiles.
    Plot(PlotArgs),
    /// Re-check stored solutions against the discrete equations.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Common,
    /// `lo:hi`, in lambda or d according to the configured mode.
    #[arg(long)]
    pub window: Option<String>,
    /// Also trace the small-coexistence piece down from the window's top.
    #[arg(long)]
    pub small: bool,
}

#[derive(Debug, Args)]
pub struct SwitchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub branch: PathBuf,
    /// Index into the branch's bifurcation records.
    #[arg(long)]
    pub record: usize,
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Branch providing the starting solution at the sweep's lambda.
    #[arg(long)]
    pub branch: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub lambda: f64,
    /// Also solve the shifted problem for this mode index...
    #[arg(long, requires = "s")]
    pub zj: Option<usize>,
    /// ...at this shift.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ShootArgs {
    /// Reads b1, c2, a constant m and the interval from here when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub j: usize,
    /// `+` or `-`: sign of the initial slope.
    #[arg(long, value_parser = parse_sign, allow_hyphen_values = true)]
    pub sign: Sign,
    #[arg(long, default_value_t = 3.0)]
    pub b1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Half-length of the interval.
    #[arg(long, default_value_t = 0.5)]
    pub ell: f64,
    #[arg(long, default_value_t = 511)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct EigsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 6)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Directory of branch files.
    #[arg(long, group = "source", required_unless_present = "profile")]
    pub diagram: Option<PathBuf>,
    /// A branch file or a profile table.
    #[arg(long, group = "source")]
    pub profile: Option<PathBuf>,
    /// Parameter of the branch point to draw; required for branch files.
    #[arg(long)]
    pub at: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub branch: Vec<PathBuf>,
}

fn parse_sign(s: &str) -> Result<Sign, String> {
    match s {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        _ => Err(format!("expected + or -, got `{s}`")),
    }
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let input = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some() || matches!(e.downcast_ref::<IoError>(), Some(IoError::SchemaMismatch { .. }))
    });
    if input {
        2
    } else {
        1
    }
}

struct Loaded {
    cfg: RunConfig,
    bytes: Vec<u8>,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded> {
    let path = common.config.display().to_string();
    let bytes = fs::read(&common.config).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    let cfg = load_config(&path)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok(Loaded { cfg, bytes, out })
}

fn tracer(cfg: &RunConfig, lambda: f64) -> Result<(Grid, ModelParams, Tracer)> {
    let grid = cfg.grid()?;
    let params = cfg.params(lambda)?;
    let t = Tracer::new(params.clone(), grid.clone(), cfg.continuation())?;
    Ok((grid, params, t))
}

fn domain(cfg: &RunConfig) -> (f64, f64) {
    (cfg.domain.a, cfg.domain.b)
}

fn window(cfg: &RunConfig, flag: Option<&str>) -> Result<(f64, f64)> {
    let w = flag.map(parse_window).transpose()?;
    Ok(cfg.lambda_window(w)?)
}

/// Stores `branch` in the configured parameterization.
fn store(dir: &Path, cfg: &RunConfig, params: &ModelParams, grid: &Grid, branch: &Branch) -> Result<PathBuf> {
    let out = match cfg.model.mode {
        Mode::Lambda => branch.clone(),
        Mode::D => to_d_mode(branch, params, grid),
    };
    let path = write_branch(dir, &out, domain(cfg))?;
    summarize(&out);
    Ok(path)
}

fn summarize(b: &Branch) {
    let name = if b.mode == ParamMode::D { "d" } else { "lambda" };
    let (lo, hi) = b.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.param), h.max(p.param)));
    println!("branch {}: {} points, {name} in [{lo:.6}, {hi:.6}]", b.id, b.points.len());
    for (k, r) in b.bifurcations.iter().enumerate() {
        println!("  record {k}: {:?} at {name} = {:.8} (width {:.1e})", r.kind, r.param_at, r.localization_width);
    }
}

/// Traces, storing a partial branch before reporting an interruption.
fn trace_and_store(
    t: &Tracer,
    id: &str,
    seed: skt_core::continuation::BranchPoint,
    win: (f64, f64),
    parent: Option<ParentRef>,
    ctx: (&Path, &RunConfig, &mut Vec<String>),
) -> Result<Branch> {
    let (dir, cfg, outputs) = ctx;
    match t.trace_branch(id, seed, win) {
        Ok(mut b) => {
            b.parent = parent;
            outputs.push(store(dir, cfg, &t.params, &t.grid, &b)?.display().to_string());
            Ok(b)
        }
        Err(ContinuationError::TraceInterrupted { mut partial, source }) => {
            partial.parent = parent;
            outputs.push(store(dir, cfg, &t.params, &t.grid, &partial)?.display().to_string());
            Err(anyhow!(ContinuationError::TraceInterrupted { partial, source }))
        }
        Err(e) => Err(e.into()),
    }
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trace(a) => trace(a),
        Command::Switch(a) => switch(a),
        Command::Sweep(a) => sweep(a),
        Command::Limits(a) => limits(a),
        Command::Shoot(a) => shoot(a),
        Command::Eigs(a) => eigs(a),
        Command::Plot(a) => plot(a),
        Command::Verify(a) => verify(a),
    }
}

fn trace(a: TraceArgs) -> Result<()> {
    let l = load(&a.common)?;
    let mut manifest = Manifest::start(argv(), Some(&l.bytes));
    let win = window(&l.cfg, a.window.as_deref())?;
    let (_, _, t) = tracer(&l.cfg, win.0)?;
    let mut outputs = Vec::new();
    let trivial = trace_and_store(&t, "trivial", t.trivial_point(win.0)?, win, None, (&l.out, &l.cfg, &mut outputs));
    let primary = t
        .seed_primary_branch(l.cfg.continuation.seed_amplitude, win)
        .map_err(anyhow::Error::from)
        .and_then(|seed| trace_and_store(&t, "C", seed, win, None, (&l.out, &l.cfg, &mut outputs)));
    let small = if a.small {
        Some(
            t.seed_small_coexistence(win.1, false)
                .map_err(anyhow::Error::from)
                .and_then(|seed| trace_and_store(&t, "C-small", seed, win, None, (&l.out, &l.cfg, &mut outputs))),
        )
    } else {
        None
    };
    manifest.outputs = outputs;
    manifest.finish(&l.out)?;
    trivial.context("tracing the trivial branch")?;
    primary.context("tracing the coexistence branch")?;
    if let Some(s) = small {
        s.context("tracing the small-coexistence piece")?;
    }
    Ok(())
}

/// Loads a branch and returns it in the lambda parameterization.
fn load_lambda_branch(path: &Path, params: &ModelParams, grid: &Grid) -> Result<Branch> {
    let side = read_sidecar(path)?;
    let b = side.branch;
    let n = b.points.first().map_or(0, |p| p.uv.u.len());
    if n != grid.n() {
        return Err(ConfigError::Validation(format!(
            "{} holds states with {n} nodes, the configuration has {}",
            path.display(),
            grid.n()
        ))
        .into());
    }
    Ok(match b.mode {
        ParamMode::Lambda => b,
        ParamMode::D => from_d_mode(&b, params, grid),
    })
}

fn switch(a: SwitchArgs) -> Result<()> {
    let l = load(&a.common)?;
    let mut manifest = Manifest::start(argv(), Some(&l.bytes));
    let win = window(&l.cfg, a.window.as_deref())?;
    let (grid, params, t) = tracer(&l.cfg, win.0)?;
    let parent = load_lambda_branch(&a.branch, &params, &grid)?;
    let rec = parent.bifurcations.get(a.record).ok_or_else(|| {
        ConfigError::Validation(format!("{} has {} records, asked for {}", parent.id, parent.bifurcations.len(), a.record))
    })?;
    if rec.kind == BifurcationKind::Fold {
        bail!("record {} of {} is a fold; nothing to switch onto", a.record, parent.id);
    }
    let (up, lo) = t.switch_branch(rec, &rec.point, Tracer::default_switch_delta(&rec.point))?;
    let from = Some(ParentRef { branch: parent.id.clone(), param: rec.param_at });
    let mut outputs = Vec::new();
    let mut result = Ok(());
    for (side, seed) in [("up", up), ("lo", lo)] {
        let id = format!("{}-r{}-{side}", parent.id, a.record);
        if let Err(e) = trace_and_store(&t, &id, seed, win, from.clone(), (&l.out, &l.cfg, &mut outputs)) {
            result = result.and(Err(e));
        }
    }
    manifest.outputs = outputs;
    manifest.finish(&l.out)?;
    result
}

fn sweep(a: SweepArgs) -> Result<()> {
    let l = load(&a.common)?;
    let mut manifest = Manifest::start(argv(), Some(&l.bytes));
    let s = l.cfg.sweep.clone().ok_or_else(|| ConfigError::Validation("the configuration has no [sweep] table".into()))?;
    let opts = l.cfg.sweep_options().expect("sweep table present");
    let (grid, params, t) = tracer(&l.cfg, s.lambda)?;
    let seed = match &a.branch {
        Some(p) => {
            let b = load_lambda_branch(p, &params, &grid)?;
            Some(t.point_at_param(&b, s.lambda)?)
        }
        None => None,
    };
    let result = alpha_sweep(&params, &grid, s.lambda, &s.alphas, seed.as_ref(), &opts);
    let (report, err) = match result {
        Ok(r) => (r, None),
        Err(ClassifierError::SweepBroken { alpha, partial, source }) => {
            (*partial, Some(anyhow!("sweep broke at alpha = {alpha}: {source}")))
        }
        Err(ClassifierError::Limit(e)) if seed.is_none() => {
            return Err(anyhow!(e).context("a starting branch (--branch) is needed above the principal eigenvalue"))
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = String::from("# skt-sweep v1.0.0\nalpha,sup_u,sup_v,product,scaled_gap,scaled_amplitude,dist_to_limit_u,dist_to_segregation\n");
    for m in &report.metrics {
        let cells = [m.alpha, m.sup_u, m.sup_v, m.product, m.scaled_gap, m.scaled_amplitude, m.dist_to_limit_u];
        let mut row: Vec<String> = cells.iter().map(|v| crate::io::fmt_f64(*v)).collect();
        row.push(m.dist_to_segregation.map(crate::io::fmt_f64).unwrap_or_default());
        table.push_str(&row.join(","));
        table.push('\n');
    }
    let csv = l.out.join("sweep.csv");
    let json = l.out.join("sweep.json");
    write_text(&csv, &table)?;
    write_json(&json, &report, "sweep report")?;
    println!("verdict: {:?}", report.verdict);
    if let Some(p) = report.fitted_rate {
        println!("fitted decay exponent: {p:.4}");
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    manifest.outputs = vec![csv.display().to_string(), json.display().to_string()];
    manifest.finish(&l.out)?;
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn limits(a: LimitsArgs) -> Result<()> {
    let l = load(&a.common)?;
    let mut manifest = Manifest::start(argv(), Some(&l.bytes));
    let grid = l.cfg.grid()?;
    let m = l.cfg.weight();
    let lam = a.lambda;
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(ConfigError::Validation(format!("--lambda must be positive, got {lam}")).into());
    }
    let z0 = solve_z0(lam, &grid, &m).context("limit profile Z0")?;
    let u = limit_u(lam, &grid, &m).context("limit profile U")?;
    let theta = solve_logistic(lam, &grid, &m).context("logistic solution")?;
    let psi = solve_sublinear(SublinearKind::Psi, &grid, &m).context("sublinear profile")?;
    let zeta = solve_sublinear(SublinearKind::Zeta0, &grid, &m).context("sublinear profile")?;
    let mut cols: Vec<(&str, &[f64])> = vec![
        ("z0", &z0.values),
        ("u", &u.values),
        ("theta", &theta.values),
        ("psi", &psi.values),
        ("zeta0", &zeta.values),
    ];
    let zj = match (a.zj, a.s) {
        (Some(j), Some(s)) => Some(solve_zj(j, s, &grid, &m).with_context(|| format!("shifted profile j = {j}, s = {s}"))?),
        _ => None,
    };
    if let Some(z) = &zj {
        cols.push(("zj", &z.values));
    }
    let path = l.out.join(format!("limits-{lam}.csv"));
    write_profile(&path, &grid.nodes(), &cols)?;
    println!("sup Z0 = {:.8}, sup U = {:.8}, sup theta = {:.8}", sup_norm(&z0.values), sup_norm(&u.values), sup_norm(&theta.values));
    manifest.outputs = vec![path.display().to_string()];
    manifest.finish(&l.out)?;
    Ok(())
}

fn shoot(a: ShootArgs) -> Result<()> {
    let mut coeffs = Ls2Coeffs { b1: a.b1, c2: a.c2, m: a.m, ell: a.ell };
    let mut n = a.n;
    let bytes = match &a.config {
        Some(p) => {
            let path = p.display().to_string();
            let bytes = fs::read(p).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            let cfg = load_config(&path)?;
            let m = match cfg.model.m {
                WeightSpec::Constant(c) => c,
                WeightSpec::Samples(_) => {
                    return Err(ConfigError::Validation("shooting needs a constant weight m".into()).into())
                }
            };
            if (cfg.domain.a + cfg.domain.b).abs() > 1e-14 * cfg.domain.b.abs().max(1.0) {
                return Err(ConfigError::Validation("shooting needs an interval symmetric about 0".into()).into());
            }
            coeffs = Ls2Coeffs { b1: cfg.model.b1, c2: cfg.model.c2, m, ell: cfg.domain.b };
            n = cfg.domain.n;
            Some(bytes)
        }
        None => None,
    };
    let mut manifest = Manifest::start(argv(), bytes.as_deref());
    let sol = shoot_ls2(&coeffs, a.lambda, a.j, a.sign, n)?;
    let (plus, minus) = sol.parts();
    let tag = if a.sign == Sign::Plus { "plus" } else { "minus" };
    let path = a.out.join(format!("profile-j{}-{tag}.csv", a.j));
    write_profile(&path, &sol.nodes, &[("w", &sol.w), ("w_plus", &plus), ("w_minus", &minus)])?;
    println!(
        "lambda = {}, j = {}, initial slope {:.10}, {} interior zeros",
        sol.lambda, sol.j, sol.slope0, sol.zeros
    );
    manifest.outputs = vec![path.display().to_string()];
    manifest.finish(&a.out)?;
    Ok(())
}

fn eigs(a: EigsArgs) -> Result<()> {
    let l = load(&a.common)?;
    let mut manifest = Manifest::start(argv(), Some(&l.bytes));
    let grid = l.cfg.grid()?;
    let vals = eigenvalues_weighted(&grid, &l.cfg.weight(), a.count)?;
    let mut s = String::from("# skt-eigs v1.0.0\nindex,lambda,d\n");
    for (k, v) in vals.iter().enumerate() {
        s.push_str(&format!("{},{},{}\n", k + 1, crate::io::fmt_f64(*v), crate::io::fmt_f64(1.0 / v)));
        println!("lambda_{} = {v:.8}  (d = {:.8})", k + 1, 1.0 / v);
    }
    let path = l.out.join("eigs.csv");
    write_text(&path, &s)?;
    manifest.outputs = vec![path.display().to_string()];
    manifest.finish(&l.out)?;
    Ok(())
}

fn is_sidecar(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else { return false };
    serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("format").and_then(|f| f.as_str()).map(|f| f == crate::io::SIDECAR_FORMAT))
        .unwrap_or(false)
}

fn nearest(side: &Sidecar, at: f64) -> Result<usize> {
    side.branch
        .points
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.param - at).abs().total_cmp(&(b.1.param - at).abs()))
        .map(|(k, _)| k)
        .ok_or_else(|| anyhow!(svg::SvgError::EmptyData))
}

fn plot(a: PlotArgs) -> Result<()> {
    let mut manifest = Manifest::start(argv(), None);
    let (svg_text, out) = if let Some(dir) = &a.diagram {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && is_sidecar(p))
            .collect();
        files.sort();
        let mut series = Vec::new();
        let mut mode = None;
        for (k, f) in files.iter().enumerate() {
            let b = read_sidecar(f)?.branch;
            if *mode.get_or_insert(b.mode) != b.mode {
                return Err(ConfigError::Validation("cannot mix lambda- and d-mode branches in one diagram".into()).into());
            }
            let mut s = Series::new(
                b.id.clone(),
                PALETTE[k % PALETTE.len()],
                b.points.iter().map(|p| p.param).collect(),
                b.points.iter().map(|p| p.norms.l2_u).collect(),
            );
            s.dashed = b.points.iter().all(|p| p.norms.l2_u == 0.0);
            series.push(s);
        }
        let label = if mode == Some(ParamMode::D) { "d" } else { "λ" };
        (svg::diagram(label, series)?, a.output.clone().unwrap_or_else(|| dir.join("diagram.svg")))
    } else {
        let path = a.profile.as_ref().expect("clap group");
        let out = a.output.clone().unwrap_or_else(|| path.with_extension("svg"));
        let text = if path.extension().is_some_and(|x| x == "csv") {
            let (names, cols) = read_profile(path)?;
            let series = names
                .iter()
                .zip(&cols)
                .skip(1)
                .enumerate()
                .map(|(k, (n, c))| Series::new(n.clone(), PALETTE[k % PALETTE.len()], cols[0].clone(), c.clone()))
                .collect();
            svg::render(&svg::Plot { title: names.join(" ").replacen("x ", "", 1), x_label: "x".into(), y_label: "value".into(), series })?
        } else {
            let at = a.at.ok_or_else(|| ConfigError::Validation("--at is required for branch files".into()))?;
            let side = read_sidecar(path)?;
            let k = nearest(&side, at)?;
            let p = &side.branch.points[k];
            let name = if side.branch.mode == ParamMode::D { "d" } else { "λ" };
            svg::profile(&format!("{} at {name} = {:.6}", side.branch.id, p.param), &side.nodes(), &p.uv.u, &p.uv.v)?
        };
        (text, out)
    };
    write_text(&out, &svg_text)?;
    println!("wrote {}", out.display());
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.outputs = vec![out.display().to_string()];
    manifest.finish(&dir)?;
    Ok(())
}

/// Largest `‖F‖∞ / scale` over a stored branch, in the lambda parameterization.
pub fn branch_residual(branch: &Branch, params: &ModelParams, grid: &Grid) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in &branch.points {
        let pp = params.with_lambda(p.param);
        let (r1, r2) = residual_wz(&pp, &p.state, grid)?;
        let scale = term_scale(&pp, &p.state, grid)?.max(f64::MIN_POSITIVE);
        worst = worst.max(sup_norm(&r1).max(sup_norm(&r2)) / scale);
    }
    Ok(worst)
}

fn verify(a: VerifyArgs) -> Result<()> {
    let path = a.config.display().to_string();
    let cfg = load_config(&path)?;
    let grid = cfg.grid()?;
    let params = cfg.params(1.0)?;
    let mut bad = Vec::new();
    for f in &a.branch {
        let b = load_lambda_branch(f, &params, &grid)?;
        let r = branch_residual(&b, &params, &grid)?;
        let ok = r <= VERIFY_TOL;
        println!("{}: {} points, worst relative residual {r:.3e} [{}]", f.display(), b.points.len(), if ok { "ok" } else { "FAIL" });
        if !ok {
            bad.push(f.display().to_string());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        bail!("residual above {VERIFY_TOL:e} in {}", bad.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_usage_error() {
        let e = Cli::try_parse_from(["skt", "eigs", "--config", "a.toml", "--bogus"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(Cli::try_parse_from(["skt", "frobnicate"]).is_err());
    }

    #[test]
    fn shoot_flags() {
        let c = Cli::try_parse_from(["skt", "shoot", "--lambda", "43.0673", "--j", "2", "--sign", "-"]).unwrap();
        match c.command {
            Command::Shoot(a) => {
                assert_eq!(a.sign, Sign::Minus);
                assert_eq!((a.b1, a.c2, a.m, a.ell, a.n), (3.0, 1.0, 1.0, 0.5, 511));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["skt", "shoot", "--lambda", "4", "--j", "2", "--sign", "0"]).is_err());
    }

    #[test]
    fn plot_needs_exactly_one_source() {
        assert!(Cli::try_parse_from(["skt", "plot"]).is_err());
        assert!(Cli::try_parse_from(["skt", "plot", "--diagram", "a", "--profile", "b"]).is_err());
    }

    #[test]
    fn config_errors_exit_two() {
        let e: anyhow::Error = ConfigError::Validation("x".into()).into();
        assert_eq!(exit_code(&e.context("while loading")), 2);
        let e = anyhow!("Newton failed");
        assert_eq!(exit_code(&e), 1);
    }
}
