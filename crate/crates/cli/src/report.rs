//! Report rows and their CSV/JSON serializations.
//!
//! CSV columns, in order:
//!
//! `task, channel_id, item, p, c2_exact, cp_lower, cp_upper, upper_source,
//! value, iterations, converged, margin, pass, reason`
//!
//! Floats are written as `{:.16e}` (17 significant digits), absent values
//! as empty fields, lines end in `\n`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use markov_gap::algebra::{CMatrix, Element};
use serde::Serialize;

pub const CSV_HEADER: &str = "task,channel_id,item,p,c2_exact,cp_lower,cp_upper,upper_source,value,iterations,converged,margin,pass,reason";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Blocks of a witness element as `[re, im]` pairs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct WitnessLit {
    pub blocks: Vec<Vec<Vec<[f64; 2]>>>,
}

impl WitnessLit {
    pub fn from_element(x: &Element) -> Self {
        let blocks = x
            .blocks()
            .iter()
            .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect())
            .collect();
        Self { blocks }
    }

    pub fn to_blocks(&self) -> Vec<CMatrix> {
        self.blocks
            .iter()
            .map(|rows| {
                let n = rows.len();
                let m = rows.first().map_or(0, Vec::len);
                CMatrix::from_fn(n, m, |i, j| markov_gap::algebra::C64::new(rows[i][j][0], rows[i][j][1]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub task: String,
    pub channel_id: String,
    pub item: String,
    pub p: Option<f64>,
    pub c2_exact: Option<f64>,
    pub cp_lower: Option<f64>,
    pub cp_upper: Option<f64>,
    pub upper_source: Option<String>,
    pub value: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub margin: Option<f64>,
    pub pass: bool,
    pub reason: String,
    pub witness: Option<WitnessLit>,
}

impl ReportRow {
    pub fn new(task: &str, channel_id: &str, item: &str, p: Option<f64>) -> Self {
        Self {
            task: task.to_string(),
            channel_id: channel_id.to_string(),
            item: item.to_string(),
            p,
            c2_exact: None,
            cp_lower: None,
            cp_upper: None,
            upper_source: None,
            value: None,
            iterations: None,
            converged: None,
            margin: None,
            pass: true,
            reason: String::new(),
            witness: None,
        }
    }

    pub fn failed(mut self, reason: impl Into<String>) -> Self {
        self.pass = false;
        self.reason = reason.into();
        self
    }
}

fn cmp_p(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Stable sort by `(task, channel_id, p)`.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| a.task.cmp(&b.task).then_with(|| a.channel_id.cmp(&b.channel_id)).then_with(|| cmp_p(a.p, b.p)));
}

fn float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:.16e}").expect("write to string");
    }
}

fn text(out: &mut String, s: &str) {
    if s.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&s.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(s);
    }
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        text(&mut out, &r.task);
        out.push(',');
        text(&mut out, &r.channel_id);
        out.push(',');
        text(&mut out, &r.item);
        out.push(',');
        float(&mut out, r.p);
        out.push(',');
        float(&mut out, r.c2_exact);
        out.push(',');
        float(&mut out, r.cp_lower);
        out.push(',');
        float(&mut out, r.cp_upper);
        out.push(',');
        text(&mut out, r.upper_source.as_deref().unwrap_or(""));
        out.push(',');
        float(&mut out, r.value);
        out.push(',');
        if let Some(i) = r.iterations {
            write!(out, "{i}").expect("write to string");
        }
        out.push(',');
        if let Some(c) = r.converged {
            out.push_str(if c { "true" } else { "false" });
        }
        out.push(',');
        float(&mut out, r.margin);
        out.push(',');
        out.push_str(if r.pass { "true" } else { "false" });
        out.push(',');
        text(&mut out, &r.reason);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    columns: Vec<&'static str>,
    rows: &'a [ReportRow],
}

pub fn to_json(rows: &[ReportRow]) -> String {
    let report = JsonReport { columns: CSV_HEADER.split(',').collect(), rows };
    let mut s = serde_json::to_string_pretty(&report).expect("rows serialize");
    s.push('\n');
    s
}

pub fn render(rows: &[ReportRow], format: Format) -> String {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn write_report(rows: &[ReportRow], path: Option<&Path>, format: Format) -> anyhow::Result<()> {
    let body = render(rows, format);
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("writing report to {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes()).context("writing report to stdout")
        }
    }
}
