//! `report.json` and `summary.csv` writers.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
struct SummaryRow<'a> {
    anchor: &'a str,
    lhs: String,
    rhs: String,
    ratio: String,
    pass: bool,
}

fn number(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x}"),
        // non-finite values are stored as null
        None => "inf".into(),
    }
}

/// One CSV line per entry of the report's `checks` array.
pub fn summary_csv(report: &Value) -> io::Result<Vec<u8>> {
    let checks = report
        .get("checks")
        .and_then(Value::as_array)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "report has no `checks` array"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in checks {
        w.serialize(SummaryRow {
            anchor: c.get("anchor").and_then(Value::as_str).unwrap_or(""),
            lhs: number(&c["lhs"]),
            rhs: number(&c["rhs"]),
            ratio: number(&c["ratio"]),
            pass: c.get("pass").and_then(Value::as_bool).unwrap_or(false),
        })?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn report_json(report: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("Value always serializes");
    out.push(b'\n');
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn write_outputs(dir: &Path, report: &Value, json: bool) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if json {
        write_atomic(&dir.join("report.json"), &report_json(report))?;
    }
    write_atomic(&dir.join("summary.csv"), &summary_csv(report)?)
}

/// Anchors of failed or unobserved checks.
pub fn failures(report: &Value) -> Vec<String> {
    report["checks"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter(|c| c["pass"] != Value::Bool(true) || c["instances"].as_u64() == Some(0))
                .filter_map(|c| c["anchor"].as_str().map(String::from))
                .collect()
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn csv_has_fixed_columns_and_inf() {
        let r = json!({ "checks": [
            { "anchor": "a ≤ b, c", "lhs": 1.0, "rhs": 2.0, "ratio": 0.5, "pass": true },
            { "anchor": "x", "lhs": 1.0, "rhs": 0.0, "ratio": null, "pass": false },
        ]});
        let text = String::from_utf8(summary_csv(&r).unwrap()).unwrap();
        assert_eq!(text, "anchor,lhs,rhs,ratio,pass\n\"a ≤ b, c\",1,2,0.5,true\nx,1,0,inf,false\n");
        assert_eq!(failures(&r), vec!["x".to_string()]);
    }
}
