//! Tidy CSV plus a declarative plot description from a set of records.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use vinolab::rational;

use crate::args::{PlotArgs, PlotKind};
use crate::commands::Outcome;
use crate::error::{CliError, CliResult};
use crate::record::{load_records, write_atomic, ExperimentRecord, Table};

/// The two competing growth rates for `J_{s,n}(N)`: `s` and `2s − n(n+1)/2`.
pub fn reference_slopes(n: u32, s: u32) -> [f64; 2] {
    [s as f64, 2.0 * s as f64 - (n * (n + 1)) as f64 / 2.0]
}

#[derive(Debug, Clone, Serialize)]
pub struct Axis {
    pub column: &'static str,
    pub label: &'static str,
    /// Columns are already logarithms where that matters; plot them linearly.
    pub log_scale: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Line {
    pub label: String,
    pub series: Option<String>,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Marker {
    pub axis: &'static str,
    pub value: f64,
    pub label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotDescription {
    pub kind: PlotKind,
    pub data: String,
    pub x: Axis,
    pub y: Axis,
    /// Rows sharing a value in this column form one series.
    pub series_column: &'static str,
    pub reference_lines: Vec<Line>,
    pub markers: Vec<Marker>,
}

fn field<'a>(v: &'a Value, key: &str) -> CliResult<&'a Value> {
    v.get(key)
        .ok_or_else(|| CliError::Validation(format!("record results lack {key:?}")))
}

fn num(v: &Value, key: &str) -> CliResult<f64> {
    field(v, key)?
        .as_f64()
        .ok_or_else(|| CliError::Validation(format!("{key:?} is not a number")))
}

fn text<'a>(v: &'a Value, key: &str) -> CliResult<&'a str> {
    field(v, key)?
        .as_str()
        .ok_or_else(|| CliError::Validation(format!("{key:?} is not a string")))
}

fn array<'a>(v: &'a Value, key: &str) -> CliResult<&'a Vec<Value>> {
    field(v, key)?
        .as_array()
        .ok_or_else(|| CliError::Validation(format!("{key:?} is not an array")))
}

fn exact(s: &str) -> CliResult<f64> {
    rational::parse(s).map(|q| rational::to_f64(&q)).map_err(CliError::from)
}

fn exact_minus_one(s: &str) -> CliResult<f64> {
    let q = rational::parse(s)?;
    Ok(rational::to_f64(&(q - rational::int(1))))
}

fn f(x: f64) -> String {
    x.to_string()
}

fn growth(records: &[ExperimentRecord]) -> CliResult<(Table, PlotDescription)> {
    let mut table = Table::new(&["series", "N", "J", "log_N", "log_J", "reference_slope", "log_J_reference"]);
    let mut lines = Vec::new();
    for (i, r) in records.iter().filter(|r| r.results.get("fit").is_some()).enumerate() {
        let res = &r.results;
        let (n, s) = (num(res, "degree")? as u32, num(res, "multiplicity")? as u32);
        let series = format!("n={n},s={s},run={i}");
        let slopes = reference_slopes(n, s);
        let slope = slopes[0].max(slopes[1]);
        let ranges = array(res, "ranges")?;
        let counts = array(res, "counts")?;
        let mut anchor = None;
        for (big_n, c) in ranges.iter().zip(counts) {
            let big_n = big_n.as_u64().ok_or_else(|| CliError::Validation("N is not an integer".into()))?;
            let c = c.as_str().ok_or_else(|| CliError::Validation("counts are strings".into()))?;
            let (x, y) = ((big_n as f64).ln(), c.parse::<f64>().map_err(|e| CliError::Validation(e.to_string()))?.ln());
            let (x0, y0) = *anchor.get_or_insert((x, y));
            table.push(vec![
                series.clone(),
                big_n.to_string(),
                c.to_string(),
                f(x),
                f(y),
                f(slope),
                f(y0 + slope * (x - x0)),
            ]);
        }
        if let Some((x0, y0)) = anchor {
            for (label, sl) in [("s", slopes[0]), ("2s - n(n+1)/2", slopes[1])] {
                lines.push(Line {
                    label: format!("slope {label} = {sl}"),
                    series: Some(series.clone()),
                    slope: sl,
                    intercept: y0 - sl * x0,
                });
            }
        }
    }
    let desc = PlotDescription {
        kind: PlotKind::Growth,
        data: String::new(),
        x: Axis { column: "log_N", label: "ln N", log_scale: false },
        y: Axis { column: "log_J", label: "ln J_{s,n}(N)", log_scale: false },
        series_column: "series",
        reference_lines: lines,
        markers: Vec::new(),
    };
    Ok((table, desc))
}

fn vp_scan(records: &[ExperimentRecord]) -> CliResult<(Table, PlotDescription)> {
    let mut table = Table::new(&["p", "delta", "log_inv_delta", "max_ratio", "log_max_ratio"]);
    let mut lines = Vec::new();
    for r in records {
        for scan in array(&r.results, "scans")? {
            let p = num(scan, "p")?;
            for pt in array(scan, "points")? {
                let (delta, max) = (num(pt, "delta")?, num(pt, "max_ratio")?);
                table.push(vec![f(p), f(delta), f(-delta.ln()), f(max), f(max.ln())]);
            }
            if let (Some(eta), Some(fit)) = (scan.get("eta_hat").and_then(Value::as_f64), scan.get("fit")) {
                lines.push(Line {
                    label: format!("fitted exponent {eta:.4} at p = {p}"),
                    series: Some(f(p)),
                    slope: eta,
                    intercept: num(fit, "intercept")?,
                });
            }
        }
    }
    let desc = PlotDescription {
        kind: PlotKind::VpScan,
        data: String::new(),
        x: Axis { column: "log_inv_delta", label: "ln 1/δ", log_scale: false },
        y: Axis { column: "log_max_ratio", label: "ln max ratio", log_scale: false },
        series_column: "p",
        reference_lines: lines,
        markers: Vec::new(),
    };
    Ok((table, desc))
}

fn appendix(records: &[ExperimentRecord]) -> CliResult<(Table, PlotDescription)> {
    let mut table = Table::new(&["n", "delta", "delta_value", "omega1", "omega1_minus_one"]);
    let mut dims = Vec::new();
    for r in records {
        let res = &r.results;
        let n = num(res, "n")? as usize;
        if !dims.contains(&n) {
            dims.push(n);
        }
        let points: Vec<(String, String)> = match res.get("sweep") {
            Some(sweep) => sweep
                .as_array()
                .into_iter()
                .flatten()
                .map(|p| Ok((text(p, "delta")?.to_string(), text(p, "omega1")?.to_string())))
                .collect::<CliResult<_>>()?,
            None => {
                let omega = array(res, "omega")?;
                let w = omega.first().and_then(Value::as_str).ok_or_else(|| CliError::Validation("empty omega".into()))?;
                vec![(text(res, "delta")?.to_string(), w.to_string())]
            }
        };
        for (delta, w) in points {
            table.push(vec![n.to_string(), delta.clone(), f(exact(&delta)?), w.clone(), f(exact_minus_one(&w)?)]);
        }
    }
    let desc = PlotDescription {
        kind: PlotKind::Appendix,
        data: String::new(),
        x: Axis { column: "delta_value", label: "Δ = p/n", log_scale: false },
        y: Axis { column: "omega1_minus_one", label: "ω_1 − 1", log_scale: false },
        series_column: "n",
        reference_lines: vec![Line {
            label: "ω_1 = 1".into(),
            series: None,
            slope: 0.0,
            intercept: 0.0,
        }],
        markers: dims
            .iter()
            .map(|&n| Marker { axis: "x", value: (n + 1) as f64, label: format!("Δ = {} (n = {n})", n + 1) })
            .collect(),
    };
    Ok((table, desc))
}

fn minor_sup(records: &[ExperimentRecord]) -> CliResult<(Table, PlotDescription)> {
    let mut table = Table::new(&["series", "N", "log_N", "sup_estimate", "log_sup"]);
    for (i, r) in records.iter().enumerate() {
        let args = field(&r.params, "args")?;
        let series = format!("n={},seed={},run={i}", num(args, "n")?, num(args, "seed")?);
        for e in array(&r.results, "estimates")? {
            let (big_n, sup) = (num(e, "range")?, num(e, "sup_estimate")?);
            table.push(vec![series.clone(), f(big_n), f(big_n.ln()), f(sup), f(sup.ln())]);
        }
    }
    let desc = PlotDescription {
        kind: PlotKind::MinorSup,
        data: String::new(),
        x: Axis { column: "log_N", label: "ln N", log_scale: false },
        y: Axis { column: "log_sup", label: "ln sup |F| on the minor arcs", log_scale: false },
        series_column: "series",
        reference_lines: vec![Line {
            label: "trivial bound |F| ≤ N".into(),
            series: None,
            slope: 1.0,
            intercept: 0.0,
        }],
        markers: Vec::new(),
    };
    Ok((table, desc))
}

pub fn emit(a: &PlotArgs) -> CliResult<Outcome> {
    let mut records = Vec::new();
    for path in &a.input {
        records.extend(load_records(path)?);
    }
    let wanted = a.kind.subcommand();
    let mut others: Vec<&str> = records.iter().map(|r| r.subcommand.as_str()).filter(|s| *s != wanted).collect();
    others.dedup();
    if !others.is_empty() && records.iter().any(|r| r.subcommand == wanted) {
        return Err(CliError::Validation(format!(
            "records must share a subcommand; found {wanted} mixed with {}",
            others.join(", ")
        )));
    }
    let selected: Vec<ExperimentRecord> = records.into_iter().filter(|r| r.subcommand == wanted).collect();
    let (table, mut desc) = match a.kind {
        PlotKind::Growth => growth(&selected)?,
        PlotKind::VpScan => vp_scan(&selected)?,
        PlotKind::Appendix => appendix(&selected)?,
        PlotKind::MinorSup => minor_sup(&selected)?,
    };
    if table.rows.is_empty() {
        return Err(vinolab::Error::EmptySelection(format!("no {wanted} records with plottable points")).into());
    }
    let desc_path = a.description.clone().unwrap_or_else(|| {
        let mut p: PathBuf = a.csv.clone();
        p.set_extension("plot.json");
        p
    });
    desc.data = a.csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(&a.csv, table.to_csv().as_bytes())?;
    let mut bytes = serde_json::to_vec_pretty(&desc).expect("descriptions serialize");
    bytes.push(b'\n');
    write_atomic(&desc_path, &bytes)?;
    let results = json!({
        "records": selected.len(),
        "rows": table.rows.len(),
        "csv": a.csv,
        "description": desc_path,
        "plot": desc,
    });
    Ok(Outcome {
        params: serde_json::to_value(a).expect("arguments serialize"),
        results,
        table,
        converged: None,
        text: None,
    })
}
