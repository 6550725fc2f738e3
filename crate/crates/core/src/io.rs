//! Artifact formats: CSV tables with `#` provenance lines, JSON reports and
//! checkpoints. Floats are written with 17 significant digits so every
//! document parses back to the same bits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frenet::{Frame, Polyline, Sample};
use crate::metrics::{LayoutReport, SimilarityReport};
use crate::policy::train::{LogRow, TraceRow};
use crate::policy::PolicyParams;
use crate::{Error, Result, Vec3};

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// Seed and configuration echo written at the top of every artifact.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    /// Free-form configuration text, usually TOML.
    pub config: String,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config: impl Into<String>) -> Self {
        Self { seed, config: config.into() }
    }

    /// `#` comment block for CSV files.
    pub fn comment_block(&self) -> String {
        let mut out = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed: {seed}");
        }
        for line in self.config.lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("column {name} missing")))
}

fn field(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    parse_f64(rec.get(i).ok_or_else(|| Error::Parse(format!("short row at column {i}")))?)
}

fn write_rows(out: &mut String, rows: impl IntoIterator<Item = Vec<String>>) {
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

pub const POLYLINE_HEADER: [&str; 15] =
    ["s", "x", "y", "z", "tx", "ty", "tz", "nx", "ny", "nz", "bx", "by", "bz", "kappa", "tau"];

pub fn write_polyline(poly: &Polyline, prov: &Provenance) -> String {
    let mut out = prov.comment_block();
    out.push_str(&POLYLINE_HEADER.join(","));
    out.push('\n');
    write_rows(
        &mut out,
        poly.points.iter().map(|p| {
            let f = &p.frame;
            [p.s, p.r.x, p.r.y, p.r.z, f.t.x, f.t.y, f.t.z, f.n.x, f.n.y, f.n.z, f.b.x, f.b.y, f.b.z, p.kappa, p.tau]
                .iter()
                .map(|v| fmt_f64(*v))
                .collect()
        }),
    );
    out
}

pub fn parse_polyline(text: &str) -> Result<Polyline> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = POLYLINE_HEADER.iter().map(|h| column_index(&headers, h)).collect::<Result<_>>()?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: Vec<f64> = idx.iter().map(|&i| field(&rec, i)).collect::<Result<_>>()?;
        let vec = |k: usize| Vec3::new(v[k], v[k + 1], v[k + 2]);
        points.push(Sample {
            s: v[0],
            r: vec(1),
            frame: Frame { t: vec(4), n: vec(7), b: vec(10) },
            kappa: v[13],
            tau: v[14],
        });
    }
    if points.is_empty() {
        return Err(Error::Parse("polyline has no rows".into()));
    }
    Ok(Polyline::new(points))
}

/// Positions from any CSV with `x`, `y`, `z` columns.
pub fn parse_points(text: &str) -> Result<Vec<Vec3>> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let idx = [column_index(&headers, "x")?, column_index(&headers, "y")?, column_index(&headers, "z")?];
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(Vec3::new(field(&rec, idx[0])?, field(&rec, idx[1])?, field(&rec, idx[2])?))
        })
        .collect()
}

pub const PROFILE_HEADER: [&str; 3] = ["s_mm", "kappa_per_mm", "tau_per_mm"];

pub fn write_profile(samples: &[(f64, f64, f64)], prov: &Provenance) -> String {
    let mut out = prov.comment_block();
    out.push_str(&PROFILE_HEADER.join(","));
    out.push('\n');
    write_rows(&mut out, samples.iter().map(|(s, k, t)| vec![fmt_f64(*s), fmt_f64(*k), fmt_f64(*t)]));
    out
}

pub fn parse_profile(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = PROFILE_HEADER.iter().map(|h| column_index(&headers, h)).collect::<Result<_>>()?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok((field(&rec, idx[0])?, field(&rec, idx[1])?, field(&rec, idx[2])?))
        })
        .collect()
}

pub const LOG_HEADER: [&str; 8] = [
    "update_idx",
    "global_step",
    "mean_return",
    "best_return",
    "frac_done",
    "frac_alignment_reached",
    "policy_loss",
    "value_loss",
];

pub fn write_log(rows: &[LogRow], prov: &Provenance) -> String {
    let mut out = prov.comment_block();
    out.push_str(&LOG_HEADER.join(","));
    out.push('\n');
    write_rows(
        &mut out,
        rows.iter().map(|r| {
            let mut row = vec![r.update_idx.to_string(), r.global_step.to_string()];
            row.extend(
                [r.mean_return, r.best_return, r.frac_done, r.frac_alignment_reached, r.policy_loss, r.value_loss]
                    .iter()
                    .map(|v| fmt_f64(*v)),
            );
            row
        }),
    );
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = LOG_HEADER.iter().map(|h| column_index(&headers, h)).collect::<Result<_>>()?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let int = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad integer in column {}", LOG_HEADER[i])))
            };
            Ok(LogRow {
                update_idx: int(idx[0])? as usize,
                global_step: int(idx[1])?,
                mean_return: field(&rec, idx[2])?,
                best_return: field(&rec, idx[3])?,
                frac_done: field(&rec, idx[4])?,
                frac_alignment_reached: field(&rec, idx[5])?,
                policy_loss: field(&rec, idx[6])?,
                value_loss: field(&rec, idx[7])?,
            })
        })
        .collect()
}

pub const TRACE_HEADER: [&str; 14] = [
    "step", "s", "delta_s", "kappa", "tau", "theta", "reward", "objective", "stage_bonus", "l_align", "stage", "x",
    "y", "z",
];

pub fn write_trace(rows: &[TraceRow], prov: &Provenance) -> String {
    let mut out = prov.comment_block();
    out.push_str(&TRACE_HEADER.join(","));
    out.push('\n');
    write_rows(
        &mut out,
        rows.iter().map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend(
                [r.s, r.delta_s, r.kappa, r.tau, r.theta, r.reward, r.objective, r.stage_bonus, r.l_align]
                    .iter()
                    .map(|v| fmt_f64(*v)),
            );
            row.push(r.stage.as_str().to_string());
            row.extend([r.x, r.y, r.z].iter().map(|v| fmt_f64(*v)));
            row
        }),
    );
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    pub provenance: Provenance,
    pub report: LayoutReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDocument {
    pub provenance: Provenance,
    pub eps_mm: f64,
    pub report: SimilarityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub provenance: Provenance,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, provenance: Provenance) -> Self {
        Self { format_version: CHECKPOINT_VERSION, provenance, params }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
