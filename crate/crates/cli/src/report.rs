//! Report assembly and emission.

use std::path::Path;

use afym::Error;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

pub struct Outcome {
    /// Command-specific fields, merged into the report object.
    pub fields: Map<String, Value>,
    pub passed: bool,
    /// CSV header and rows.
    pub csv: Option<(Vec<String>, Vec<Vec<f64>>)>,
    /// The command wrote an artifact to --output; the report goes to stdout.
    pub artifact: bool,
}

impl Outcome {
    pub fn new(fields: Value, passed: bool) -> Self {
        let fields = match fields {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        Self {
            fields,
            passed,
            csv: None,
            artifact: false,
        }
    }

    pub fn with_csv(mut self, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        self.csv = Some((header.iter().map(|s| s.to_string()).collect(), rows));
        self
    }

    pub fn with_artifact(mut self) -> Self {
        self.artifact = true;
        self
    }
}

pub fn to_value<T: serde::Serialize>(x: &T) -> afym::Result<Value> {
    Ok(serde_json::to_value(x)?)
}

fn header(cfg: &RunConfig, passed: bool) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(cfg.subcommand));
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("passed".into(), json!(passed));
    m
}

fn write_report(cfg: &RunConfig, report: &Map<String, Value>, to_stdout: bool) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    match (&cfg.output, to_stdout) {
        (Some(path), false) => std::fs::write(path, text),
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit(cfg: &RunConfig, outcome: Outcome) -> u8 {
    let mut report = header(cfg, outcome.passed);
    report.extend(outcome.fields);
    if let (Some(path), Some((h, rows))) = (&cfg.csv, &outcome.csv) {
        if let Err(e) = write_csv(path, h, rows) {
            eprintln!("error: cannot write CSV `{}`: {e}", path.display());
            return 2;
        }
    }
    if let Err(e) = write_report(cfg, &report, outcome.artifact) {
        eprintln!("error: cannot write report: {e}");
        return 2;
    }
    if outcome.passed {
        0
    } else {
        1
    }
}

/// Input errors exit 2; numerical check failures exit 1 with a witness.
pub fn emit_error(cfg: &RunConfig, e: &Error) -> u8 {
    let (kind, witness) = match e {
        Error::Input(_) | Error::Io(_) | Error::Json(_) => {
            eprintln!("error: {e}");
            return 2;
        }
        Error::NonConstantRank {
            xi_a,
            rank_a,
            xi_b,
            rank_b,
        } => (
            "non-constant-rank",
            json!({"xi_a": xi_a, "rank_a": rank_a, "xi_b": xi_b, "rank_b": rank_b}),
        ),
        Error::Lp { reason, dump } => ("lp", json!({"reason": reason, "instance": dump})),
        Error::Divergence { value, floor } => ("divergence", json!({"value": value, "floor": floor})),
        Error::Recession(name) => ("recession", json!({"integrand": name})),
        Error::Budget { used, allowed } => ("budget", json!({"used": used, "allowed": allowed})),
        Error::Margin {
            location,
            distance,
            required,
        } => (
            "margin",
            json!({"location": location, "distance": distance, "required": required}),
        ),
        Error::NotInCone { direction, residual } => {
            ("not-in-cone", json!({"direction": direction, "residual": residual}))
        }
        Error::Certificate { integrand, slack } => ("certificate", json!({"integrand": integrand, "slack": slack})),
    };
    eprintln!("check failed: {e}");
    let mut report = header(cfg, false);
    report.insert(
        "failure".into(),
        json!({"kind": kind, "message": e.to_string(), "witness": witness}),
    );
    let artifact = cfg.subcommand.starts_with("ym generate") || cfg.subcommand == "ym empirical";
    if let Err(err) = write_report(cfg, &report, artifact) {
        eprintln!("error: cannot write report: {err}");
        return 2;
    }
    1
}
