//! File formats.
//!
//! Preferences are CSV, either dense (`# dense n m` followed by `n` rows of
//! `m` values) or sparse triplets (`user,item,value`, 1-based, missing
//! entries are zero; an optional `# sparse n m` line fixes the shape).
//! Policies are JSON with 1-based item ids. Traces and sweeps are CSV.
//! Every file written here starts with a provenance line naming the tool
//! version and the effective configuration; for JSON that record lives in
//! the `version` and `config` fields. Floats use the shortest decimal form
//! that parses back to the same bits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::{ConvergenceComparison, SweepRecord};
use crate::model::{Assignment, Component, PreferenceMatrix, RankingPolicy};
use crate::optimizer::ConvergenceTrace;

pub const TOOL_VERSION: &str = concat!("lorenz-rank ", env!("CARGO_PKG_VERSION"));

/// `# lorenz-rank x.y.z config={...}`.
pub fn provenance_line(config: &Value) -> String {
    format!("# {TOOL_VERSION} config={config}")
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        message: message.into(),
    })
}

fn parse_dims(rest: &str, line: usize) -> Result<(usize, usize)> {
    let dims: Vec<&str> = rest.split_whitespace().collect();
    match dims.as_slice() {
        [n, m] => match (n.parse(), m.parse()) {
            (Ok(n), Ok(m)) => Ok((n, m)),
            _ => parse_err(line, format!("bad dimensions `{rest}`")),
        },
        _ => parse_err(line, format!("expected two dimensions, got `{rest}`")),
    }
}

fn parse_value(field: &str, line: usize, user: usize, item: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad number `{}`", field.trim()),
    })?;
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return parse_err(
            line,
            format!("value {v} at (user {user}, item {item}) is outside [0, 1]"),
        );
    }
    Ok(v)
}

/// Parses preference CSV text.
pub fn parse_prefs(text: &str) -> Result<PreferenceMatrix> {
    enum Mode {
        Unknown,
        Dense {
            n: usize,
            m: usize,
            rows: Vec<f64>,
            seen: usize,
        },
        Sparse {
            triplets: Vec<(usize, usize, f64)>,
            seen: HashSet<(usize, usize)>,
        },
    }
    let mut mode = Mode::Unknown;
    let mut sparse_dims: Option<(usize, usize)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("dense") {
                if !matches!(mode, Mode::Unknown) {
                    return parse_err(line_no, "dense header after data");
                }
                let (n, m) = parse_dims(rest, line_no)?;
                mode = Mode::Dense {
                    n,
                    m,
                    rows: Vec::with_capacity(n * m),
                    seen: 0,
                };
            } else if let Some(rest) = comment.strip_prefix("sparse") {
                sparse_dims = Some(parse_dims(rest, line_no)?);
            }
            continue;
        }
        match &mut mode {
            Mode::Unknown => {
                let header: Vec<&str> = line.split(',').map(str::trim).collect();
                if header != ["user", "item", "value"] {
                    return parse_err(line_no, "expected `# dense n m` or a `user,item,value` header");
                }
                mode = Mode::Sparse {
                    triplets: Vec::new(),
                    seen: HashSet::new(),
                };
            }
            Mode::Dense { n, m, rows, seen } => {
                if *seen == *n {
                    return parse_err(line_no, format!("more than {n} rows"));
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != *m {
                    return parse_err(line_no, format!("expected {m} values, found {}", fields.len()));
                }
                for (j, f) in fields.iter().enumerate() {
                    rows.push(parse_value(f, line_no, *seen + 1, j + 1)?);
                }
                *seen += 1;
            }
            Mode::Sparse { triplets, seen } => {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                let [user, item, value] = fields.as_slice() else {
                    return parse_err(line_no, "expected `user,item,value`");
                };
                let parse_index = |s: &str, what: &str| -> Result<usize> {
                    match s.parse::<usize>() {
                        Ok(i) if i >= 1 => Ok(i),
                        _ => parse_err(line_no, format!("bad {what} index `{s}` (1-based)")),
                    }
                };
                let (i, j) = (parse_index(user, "user")?, parse_index(item, "item")?);
                let v = parse_value(value, line_no, i, j)?;
                if !seen.insert((i, j)) {
                    return parse_err(line_no, format!("duplicate entry for (user {i}, item {j})"));
                }
                triplets.push((i, j, v));
            }
        }
    }
    match mode {
        Mode::Unknown => parse_err(1, "no preference data"),
        Mode::Dense { n, m, rows, seen } => {
            if seen != n {
                return parse_err(text.lines().count(), format!("expected {n} rows, found {seen}"));
            }
            PreferenceMatrix::new(n, m, rows)
        }
        Mode::Sparse { triplets, .. } => {
            let max_i = triplets.iter().map(|t| t.0).max().unwrap_or(0);
            let max_j = triplets.iter().map(|t| t.1).max().unwrap_or(0);
            let (n, m) = sparse_dims.unwrap_or((max_i, max_j));
            if max_i > n || max_j > m {
                return parse_err(1, format!("entry ({max_i}, {max_j}) outside declared {n}x{m}"));
            }
            let mut values = vec![0.0; n * m];
            for (i, j, v) in triplets {
                values[(i - 1) * m + (j - 1)] = v;
            }
            PreferenceMatrix::new(n, m, values)
        }
    }
}

pub fn load_prefs(path: &Path) -> Result<PreferenceMatrix> {
    parse_prefs(&fs::read_to_string(path)?)
}

/// Dense CSV with a provenance line.
pub fn format_prefs(prefs: &PreferenceMatrix, config: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", provenance_line(config));
    let _ = writeln!(out, "# dense {} {}", prefs.n(), prefs.m());
    for i in 0..prefs.n() {
        out.push_str(&join(prefs.row(i)));
        out.push('\n');
    }
    out
}

pub fn write_prefs(path: &Path, prefs: &PreferenceMatrix, config: &Value) -> Result<()> {
    Ok(fs::write(path, format_prefs(prefs, config))?)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyFile {
    #[serde(default)]
    version: Option<String>,
    #[serde(default)]
    config: Option<Value>,
    n: usize,
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    components: Vec<ComponentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentFile {
    coefficient: f64,
    assignments: Vec<Vec<u32>>,
}

pub fn format_policy(policy: &RankingPolicy, config: &Value) -> Result<String> {
    let file = PolicyFile {
        version: Some(TOOL_VERSION.to_string()),
        config: Some(config.clone()),
        n: policy.n(),
        m: policy.m(),
        k: policy.k(),
        components: policy
            .components()
            .iter()
            .map(|c| ComponentFile {
                coefficient: c.coefficient,
                assignments: c.assignment.rows().map(|r| r.iter().map(|j| j + 1).collect()).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_policy(text: &str) -> Result<RankingPolicy> {
    let file: PolicyFile = serde_json::from_str(text)?;
    let components = file
        .components
        .into_iter()
        .map(|c| {
            let rows = c
                .assignments
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .map(|j| {
                            j.checked_sub(1)
                                .map(|j| j as usize)
                                .ok_or_else(|| Error::InvalidArgument("item ids are 1-based".into()))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Component {
                coefficient: c.coefficient,
                assignment: Assignment::from_rows(file.m, &rows)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RankingPolicy::new(file.n, file.m, file.k, components)
}

pub fn write_policy(path: &Path, policy: &RankingPolicy, config: &Value) -> Result<()> {
    Ok(fs::write(path, format_policy(policy, config)?)?)
}

pub fn read_policy(path: &Path) -> Result<RankingPolicy> {
    parse_policy(&fs::read_to_string(path)?)
}

pub fn format_trace(trace: &ConvergenceTrace, config: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", provenance_line(config));
    out.push_str("t,beta,objective,wall_ms\n");
    for r in &trace.records {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.beta, r.objective, r.wall_ms);
    }
    out
}

pub fn write_trace(path: &Path, trace: &ConvergenceTrace, config: &Value) -> Result<()> {
    Ok(fs::write(path, format_trace(trace, config))?)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Column label of a quantile metric, e.g. `qcum_0.25`.
pub fn quantile_label(q: f64) -> String {
    format!("qcum_{q:.2}")
}

pub fn format_sweep(records: &[SweepRecord], quantiles: &[f64], config: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", provenance_line(config));
    out.push_str("lambda,objective_kind,weights_user,weights_item,total_utility,gini_exposure");
    for &q in quantiles {
        out.push(',');
        out.push_str(&quantile_label(q));
    }
    out.push_str(",final_objective,iters,seed\n");
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.lambda,
            csv_field(&r.objective_kind),
            csv_field(&r.weights_user),
            csv_field(&r.weights_item),
            r.total_utility,
            r.gini_exposure
        );
        for (_, value) in &r.quantile_utilities {
            let _ = write!(out, ",{value}");
        }
        let _ = writeln!(out, ",{},{},{}", r.final_objective, r.iterations, r.seed);
    }
    out
}

pub fn write_sweep(path: &Path, records: &[SweepRecord], quantiles: &[f64], config: &Value) -> Result<()> {
    Ok(fs::write(path, format_sweep(records, quantiles, config))?)
}

/// `t,subgradient,beta_<b>,smoothing_<b>,...`, one column pair per `beta0`.
pub fn format_comparison(cmp: &ConvergenceComparison, config: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", provenance_line(config));
    out.push_str("t,subgradient");
    for (b, _) in &cmp.smoothing {
        let _ = write!(out, ",beta_{b},smoothing_{b}");
    }
    out.push('\n');
    for (row, rec) in cmp.subgradient.records.iter().enumerate() {
        let _ = write!(out, "{},{}", rec.t, rec.objective);
        for (_, trace) in &cmp.smoothing {
            let r = &trace.records[row];
            let _ = write!(out, ",{},{}", r.beta, r.objective);
        }
        out.push('\n');
    }
    out
}

/// Reads a flat list of numbers separated by commas or newlines; `#` lines
/// are comments.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for field in line.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad number `{field}`"),
            })?;
            out.push(v);
        }
    }
    Ok(out)
}
