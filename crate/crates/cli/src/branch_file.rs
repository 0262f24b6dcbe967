//! Branch files: a CSV table with one row per branch point plus a JSON
//! sidecar with the run metadata.
//!
//! Columns are `step,s,d,class,H,xi,T`, the durations `t_1..t_{m+1}`, the
//! phase starts `xbar_k_j`, the tangent `tau_*` in the same order, and the
//! corrector diagnostics. Numbers carry 17 significant digits, so a written
//! branch reads back bit for bit.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use hoc_core::continuation::Diagnostics;
use hoc_core::{BranchF64, BranchPointF64, ContinuationSettings, Layout, Point, PointClass, Termination};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Sidecar contents. Free of timestamps and host data so that identical runs
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    pub tool_version: String,
    pub model: String,
    pub dims: Vec<usize>,
    pub config: RunConfig,
    pub settings: ContinuationSettings,
    pub termination: Termination,
    pub points: usize,
    pub simple_bifurcations: usize,
    pub turning_points: usize,
}

impl Metadata {
    pub fn new(config: &RunConfig, layout: &Layout, branch: &BranchF64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            model: config.model.clone(),
            dims: layout.dims().to_vec(),
            config: config.clone(),
            settings: config.settings(),
            termination: branch.termination.clone(),
            points: branch.points.len(),
            simple_bifurcations: branch.count(PointClass::SimpleBifurcation),
            turning_points: branch.count(PointClass::Turning),
        }
    }
}

/// Unknown names in column order (natural segment order).
pub fn unknown_columns(layout: &Layout) -> Vec<String> {
    let segments = layout.segments();
    let mut names: Vec<String> = (1..=segments).map(|k| format!("t_{k}")).collect();
    for k in 0..segments {
        names.extend((1..=layout.segment_dim(k)).map(|j| format!("xbar_{}_{j}", k + 1)));
    }
    names.push("xi".into());
    names.push("H".into());
    names
}

/// Packed vector in column order.
pub fn to_columns(layout: &Layout, u: &DVector<f64>) -> CliResult<Vec<f64>> {
    let cv = Point::unpack(layout, u)?;
    let mut out = cv.durations.clone();
    for x in &cv.starts {
        out.extend(x.iter().copied());
    }
    out.push(cv.xi);
    out.push(cv.level);
    Ok(out)
}

/// Inverse of [`to_columns`].
pub fn from_columns(layout: &Layout, values: &[f64]) -> CliResult<DVector<f64>> {
    if values.len() != layout.unknowns() {
        return Err(CliError::Usage(format!(
            "expected {} unknowns, got {}",
            layout.unknowns(),
            values.len()
        )));
    }
    let segments = layout.segments();
    let mut rest = &values[segments..];
    let mut starts = Vec::with_capacity(segments);
    for k in 0..segments {
        let (head, tail) = rest.split_at(layout.segment_dim(k));
        starts.push(DVector::from_column_slice(head));
        rest = tail;
    }
    let cv = Point::new(layout, values[..segments].to_vec(), starts, rest[0], rest[1])?;
    Ok(cv.pack(layout))
}

pub fn header(layout: &Layout) -> Vec<String> {
    let names = unknown_columns(layout);
    let mut h: Vec<String> = ["step", "s", "d", "class", "H", "xi", "T"].map(String::from).to_vec();
    h.extend(names.iter().filter(|n| n.starts_with("t_") || n.starts_with("xbar_")).cloned());
    h.extend(names.iter().map(|n| format!("tau_{n}")));
    h.extend(["residual", "iterations", "det_sign"].map(String::from));
    h
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(out: W, layout: &Layout, points: &[BranchPointF64]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(layout))?;
    for (i, p) in points.iter().enumerate() {
        let values = to_columns(layout, &p.u)?;
        let tangent = to_columns(layout, &p.tangent)?;
        let n = values.len();
        let period: f64 = values[..layout.segments()].iter().sum();
        let mut row = vec![
            i.to_string(),
            num(p.arclength),
            p.direction.to_string(),
            p.class.as_str().to_string(),
            num(values[n - 1]),
            num(values[n - 2]),
            num(period),
        ];
        row.extend(values[..n - 2].iter().map(|v| num(*v)));
        row.extend(tangent.iter().map(|v| num(*v)));
        row.push(num(p.diagnostics.residual_norm));
        row.push(p.diagnostics.iterations.to_string());
        row.push(p.diagnostics.det_sign.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Recovers the phase dimensions from the `xbar_k_j` columns.
fn layout_from_header(header: &csv::StringRecord) -> CliResult<Layout> {
    let mut dims: Vec<usize> = Vec::new();
    for name in header.iter().filter_map(|h| h.strip_prefix("xbar_")) {
        let (k, j) = name
            .split_once('_')
            .and_then(|(k, j)| Some((k.parse::<usize>().ok()?, j.parse::<usize>().ok()?)))
            .ok_or_else(|| CliError::Format(format!("bad column xbar_{name}")))?;
        if k == 0 || j == 0 {
            return Err(CliError::Format(format!("bad column xbar_{name}")));
        }
        if dims.len() < k {
            dims.resize(k, 0);
        }
        dims[k - 1] = dims[k - 1].max(j);
    }
    if dims.len() < 2 {
        return Err(CliError::Format("no phase start columns".into()));
    }
    dims.pop();
    let layout = Layout::new(dims)?;
    let expected = self::header(&layout);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::Format("unexpected column layout".into()));
    }
    Ok(layout)
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize) -> CliResult<T> {
    let raw = record
        .get(i)
        .ok_or_else(|| CliError::Format(format!("missing column {i}")))?;
    raw.parse()
        .map_err(|_| CliError::Format(format!("cannot parse '{raw}' in column {i}")))
}

pub fn read_csv<R: Read>(input: R) -> CliResult<(Layout, Vec<BranchPointF64>)> {
    let mut r = csv::Reader::from_reader(input);
    let layout = layout_from_header(r.headers()?)?;
    let n = layout.unknowns();
    // step, s, d, class, H, xi, T, then t and xbar, then tau, then diagnostics.
    let state_start = 7;
    let tau_start = state_start + n - 2;
    let diag_start = tau_start + n;
    let mut points = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let step: usize = field(&record, 0)?;
        if step != row {
            return Err(CliError::Format(format!("row {row} has step {step}")));
        }
        let class_raw: String = field(&record, 3)?;
        let class = PointClass::parse(&class_raw)
            .ok_or_else(|| CliError::Format(format!("unknown class '{class_raw}'")))?;
        let mut values = (state_start..tau_start)
            .map(|i| field(&record, i))
            .collect::<CliResult<Vec<f64>>>()?;
        values.push(field(&record, 5)?);
        values.push(field(&record, 4)?);
        let tangent = (tau_start..diag_start)
            .map(|i| field(&record, i))
            .collect::<CliResult<Vec<f64>>>()?;
        points.push(BranchPointF64 {
            u: from_columns(&layout, &values)?,
            tangent: from_columns(&layout, &tangent)?,
            direction: field(&record, 2)?,
            arclength: field(&record, 1)?,
            class,
            diagnostics: Diagnostics {
                residual_norm: field(&record, diag_start)?,
                iterations: field(&record, diag_start + 1)?,
                det_sign: field(&record, diag_start + 2)?,
            },
        });
    }
    Ok((layout, points))
}

/// `branch.csv` -> `branch.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// A branch file together with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedBranch {
    pub layout: Layout,
    pub branch: BranchF64,
    pub metadata: Metadata,
}

pub fn save(path: &Path, layout: &Layout, branch: &BranchF64, metadata: &Metadata) -> CliResult<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, layout, &branch.points)?;
    std::fs::write(path, buf)?;
    let mut json = serde_json::to_string_pretty(metadata)?;
    json.push('\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load(path: &Path) -> CliResult<SavedBranch> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let (layout, points) = read_csv(std::io::BufReader::new(file))?;
    let meta_path = sidecar_path(path);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", meta_path.display())))?;
    let metadata: Metadata = serde_json::from_str(&text)?;
    if metadata.dims != layout.dims() {
        return Err(CliError::Format(format!(
            "sidecar dims {:?} do not match the table {:?}",
            metadata.dims,
            layout.dims()
        )));
    }
    Ok(SavedBranch {
        layout,
        branch: BranchF64 {
            points,
            termination: metadata.termination.clone(),
        },
        metadata,
    })
}
