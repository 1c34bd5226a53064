//! Branch persistence: a summary CSV for spreadsheets and a JSON sidecar with
//! the full nodal states. Floats are written with 17 significant digits so
//! that reading a file back reproduces every value bit for bit.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, Serializer};
use thiserror::Error;

use skt_core::continuation::{BifurcationKind, Branch};

pub const BRANCH_MAGIC: &str = "# skt-branch v1.0.0";
pub const PROFILE_MAGIC: &str = "# skt-profile v1.0.0";
pub const SIDECAR_FORMAT: &str = "skt-branch";
pub const SCHEMA_VERSION: &str = "1.0.0";
pub const EIG_COLUMNS: usize = 6;

pub const COLUMNS: [&str; 14] = [
    "index", "param", "l2_u", "l2_v", "sup_u", "sup_v", "eig1", "eig2", "eig3", "eig4", "eig5", "eig6", "det_sign",
    "flags",
];

/// Point is componentwise positive.
pub const FLAG_POSITIVE: u32 = 1;
/// A bifurcation record was localized between this point and the next.
pub const FLAG_CROSSING: u32 = 2;
/// First point at which positivity was lost.
pub const FLAG_FIRST_NONPOSITIVE: u32 = 4;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: schema mismatch: {reason}")]
    SchemaMismatch { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode {what}: {source}")]
    Encode {
        what: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn mismatch(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::SchemaMismatch {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// `{:.16e}` for every float; 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value as f64))
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `value` as compact JSON with exact floats.
pub fn to_exact_json<T: Serialize>(value: &T, what: &str) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, ExactFloats);
    value.serialize(&mut ser).map_err(|source| IoError::Encode {
        what: what.to_string(),
        source,
    })?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: String,
    /// Interval `(a, b)` the nodal states live on.
    pub domain: (f64, f64),
    pub branch: Branch,
}

impl Sidecar {
    pub fn new(branch: Branch, domain: (f64, f64)) -> Self {
        Self {
            format: SIDECAR_FORMAT.into(),
            version: SCHEMA_VERSION.into(),
            domain,
            branch,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.branch.points.first().map_or(0, |p| p.uv.u.len());
        let h = (self.domain.1 - self.domain.0) / (n + 1) as f64;
        (1..=n).map(|i| self.domain.0 + i as f64 * h).collect()
    }
}

fn flags(branch: &Branch, i: usize) -> u32 {
    let mut f = 0;
    if branch.points[i].is_positive() {
        f |= FLAG_POSITIVE;
    }
    if branch.bifurcations.iter().any(|r| r.after_index == i) {
        f |= FLAG_CROSSING;
    }
    if branch.first_nonpositive == Some(i) {
        f |= FLAG_FIRST_NONPOSITIVE;
    }
    f
}

pub fn branch_csv(branch: &Branch) -> String {
    let mut s = format!("{BRANCH_MAGIC}\n{}\n", COLUMNS.join(","));
    for (i, p) in branch.points.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            fmt_f64(p.param),
            fmt_f64(p.norms.l2_u),
            fmt_f64(p.norms.l2_v),
            fmt_f64(p.norms.sup_u),
            fmt_f64(p.norms.sup_v),
        ];
        // real parts; missing eigenvalues leave the cell empty
        row.extend((0..EIG_COLUMNS).map(|k| p.eigs.get(k).map(|e| fmt_f64(e.re)).unwrap_or_default()));
        row.push(p.det_sign.to_string());
        row.push(flags(branch, i).to_string());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn kind_name(k: BifurcationKind) -> &'static str {
    match k {
        BifurcationKind::SimpleFromTrivial => "simple-from-trivial",
        BifurcationKind::Pitchfork => "pitchfork",
        BifurcationKind::Fold => "fold",
    }
}

pub fn records_csv(branch: &Branch) -> String {
    let mut s = String::from("# skt-records v1.0.0\nbranch,record,kind,param_at,localization_width,crossing_count,after_index\n");
    for (k, r) in branch.bifurcations.iter().enumerate() {
        s.push_str(&format!(
            "{},{k},{},{},{},{},{}\n",
            branch.id,
            kind_name(r.kind),
            fmt_f64(r.param_at),
            fmt_f64(r.localization_width),
            r.crossing_count,
            r.after_index
        ));
    }
    s
}

/// Paths of the files written for branch `id` under `dir`.
pub fn branch_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.csv")), dir.join(format!("{id}.json")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `<id>.csv`, `<id>.json` and, if there are any, `<id>.records.csv`.
pub fn write_branch(dir: &Path, branch: &Branch, domain: (f64, f64)) -> Result<PathBuf, IoError> {
    let (csv, json) = branch_paths(dir, &branch.id);
    write_file(&csv, branch_csv(branch).as_bytes())?;
    let sidecar = Sidecar::new(branch.clone(), domain);
    write_file(&json, &to_exact_json(&sidecar, "branch")?)?;
    if !branch.bifurcations.is_empty() {
        write_file(&dir.join(format!("{}.records.csv", branch.id)), records_csv(branch).as_bytes())?;
    }
    Ok(json)
}

/// Loads a sidecar. If the CSV next to it exists it must carry the magic
/// header and one row per point.
pub fn read_sidecar(json_path: &Path) -> Result<Sidecar, IoError> {
    let text = fs::read_to_string(json_path).map_err(io_err(json_path))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| mismatch(json_path, e.to_string()))?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(mismatch(json_path, format!("format `{}`", sidecar.format)));
    }
    if major(&sidecar.version) != major(SCHEMA_VERSION) {
        return Err(mismatch(json_path, format!("version {} (reader is {SCHEMA_VERSION})", sidecar.version)));
    }
    let csv_path = json_path.with_extension("csv");
    if csv_path.exists() {
        check_csv(&csv_path, sidecar.branch.points.len())?;
    }
    Ok(sidecar)
}

pub fn read_branch(json_path: &Path) -> Result<Branch, IoError> {
    Ok(read_sidecar(json_path)?.branch)
}

fn major(v: &str) -> &str {
    v.split('.').next().unwrap_or("")
}

fn check_csv(path: &Path, points: usize) -> Result<(), IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(BRANCH_MAGIC) {
        return Err(mismatch(path, "missing header line"));
    }
    if lines.next() != Some(COLUMNS.join(",").as_str()) {
        return Err(mismatch(path, "unexpected column names"));
    }
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let cells = line.split(',').count();
        if cells != COLUMNS.len() {
            return Err(mismatch(path, format!("row {k} has {cells} cells")));
        }
        rows += 1;
    }
    if !text.ends_with('\n') || rows != points {
        return Err(mismatch(path, format!("{rows} rows for {points} points (truncated?)")));
    }
    Ok(())
}

/// Profile table with a magic header; all columns share the length of `x`.
pub fn write_profile(path: &Path, x: &[f64], columns: &[(&str, &[f64])]) -> Result<(), IoError> {
    let names: Vec<&str> = std::iter::once("x").chain(columns.iter().map(|c| c.0)).collect();
    let mut s = format!("{PROFILE_MAGIC}\n{}\n", names.join(","));
    for (i, xi) in x.iter().enumerate() {
        let row: Vec<String> = std::iter::once(fmt_f64(*xi))
            .chain(columns.iter().map(|c| fmt_f64(c.1[i])))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

/// Reads a table written by [`write_profile`]: column names and columns.
pub fn read_profile(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(PROFILE_MAGIC) {
        return Err(mismatch(path, "missing header line"));
    }
    let names: Vec<String> = lines
        .next()
        .ok_or_else(|| mismatch(path, "missing column names"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); names.len()];
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(mismatch(path, format!("row with {} cells", cells.len())));
        }
        for (c, cell) in cols.iter_mut().zip(cells) {
            c.push(cell.parse::<f64>().map_err(|e| mismatch(path, format!("`{cell}`: {e}")))?);
        }
    }
    Ok((names, cols))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, what: &str) -> Result<(), IoError> {
    write_file(path, &to_exact_json(value, what)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use skt_core::continuation::{BranchPoint, Eig, Norms, ParamMode};
    use skt_core::model::{StateUV, StateWZ};

    fn synthetic_branch(points: usize, n: usize) -> Branch {
        let mut b = Branch::new("syn", ParamMode::Lambda);
        for k in 0..points {
            let t = k as f64 / 7.0 + 0.1;
            let f = |i: usize| (t * (i + 1) as f64).sin() / 3.0 + 1e-300 * i as f64;
            let w: Vec<f64> = (0..n).map(f).collect();
            let z: Vec<f64> = (0..n).map(|i| f(i).abs() + 0.1).collect();
            let pt: BranchPoint = serde_json::from_value(serde_json::json!({
                "param": 9.869604401089358 + t,
                "state": StateWZ { w: w.clone(), z: z.clone() },
                "uv": StateUV { u: z.clone(), v: w.clone() },
                "norms": Norms { l2_u: t.sqrt(), l2_v: t / 3.0, sup_u: 0.1 * t, sup_v: std::f64::consts::E * t },
                "tangent": vec![1.0 / 3.0; 2 * n + 1],
                "eigs": (0..6).map(|j| Eig { re: -(j as f64) / 11.0 + t, im: 0.0 }).collect::<Vec<_>>(),
                "det_sign": if k % 2 == 0 { 1 } else { -1 },
                "arclength": t * 0.3,
                "residual": 1e-13 * t,
            }))
            .unwrap();
            b.points.push(pt);
        }
        b
    }

    #[test]
    fn csv_has_fourteen_numeric_columns() {
        let b = synthetic_branch(3, 4);
        let csv = branch_csv(&b);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(BRANCH_MAGIC));
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 14);
            for c in cells {
                c.parse::<f64>().unwrap();
            }
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let b = synthetic_branch(200, 9);
        let path = write_branch(dir.path(), &b, (-0.5, 0.5)).unwrap();
        let first = fs::read(&path).unwrap();
        let back = read_branch(&path).unwrap();
        assert_eq!(back, b);
        let other = tempfile::tempdir().unwrap();
        let again = write_branch(other.path(), &back, (-0.5, 0.5)).unwrap();
        assert_eq!(fs::read(again).unwrap(), first);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -0.0, 5e-324, f64::MAX, 9.869604401089358, 43.0673] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn truncated_files_are_schema_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let b = synthetic_branch(5, 3);
        let path = write_branch(dir.path(), &b, (-0.5, 0.5)).unwrap();
        let (csv, _) = branch_paths(dir.path(), "syn");
        let text = fs::read_to_string(&csv).unwrap();
        fs::write(&csv, &text[..text.len() - 20]).unwrap();
        assert!(matches!(read_branch(&path), Err(IoError::SchemaMismatch { .. })));

        fs::write(&csv, &text).unwrap();
        let json = fs::read_to_string(&path).unwrap();
        fs::write(&path, &json[..json.len() / 2]).unwrap();
        assert!(matches!(read_branch(&path), Err(IoError::SchemaMismatch { .. })));

        fs::write(&path, &json).unwrap();
        fs::write(&csv, text.replacen("v1.0.0", "v0.9.0", 1)).unwrap();
        assert!(matches!(read_branch(&path), Err(IoError::SchemaMismatch { .. })));
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let x = [0.1, 0.2, 0.3];
        let w = [1.0 / 3.0, -2.0, 0.0];
        write_profile(&p, &x, &[("w", &w)]).unwrap();
        let (names, cols) = read_profile(&p).unwrap();
        assert_eq!(names, ["x", "w"]);
        assert_eq!(cols, vec![x.to_vec(), w.to_vec()]);
    }
}
