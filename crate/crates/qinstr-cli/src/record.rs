//! Experiment records: the one output shape every subcommand emits.
//!
//! A record carries the command name, the artifact version, the base
//! seed, a full echo of the resolved configuration, and the result
//! payload. Everything except `timing` is a pure function of
//! (command, config, seed): re-running the same invocation reproduces
//! `config` and `payload` byte for byte. Wall-clock time lives in its own
//! top-level field precisely so that the deterministic part stays
//! byte-comparable. JSON maps serialize with sorted keys and floats print
//! as shortest round-trip decimals, which is what makes the byte-level
//! guarantee hold rather than merely a structural one.

use std::io::Write;
use std::time::Instant;

use qinstr::analysis::AnalysisSeries;
use serde::Serialize;
use serde_json::Value;

use crate::common::{CliError, CliResult, CommonOpts, Format};

/// Non-deterministic bookkeeping, kept out of the comparable part.
#[derive(Serialize)]
pub struct Timing {
    pub wall_ms: f64,
}

#[derive(Serialize)]
pub struct ExperimentRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub payload: Value,
    pub timing: Timing,
}

/// What a subcommand hands back: the JSON payload plus the table used
/// when `--format csv` is selected.
pub struct CommandOutput {
    pub payload: Value,
    pub csv: CsvTable,
}

/// CSV mirror of a payload. Most commands emit metric series; the two
/// non-series commands provide their own rows.
pub enum CsvTable {
    Series(Vec<AnalysisSeries>),
    Rows { header: Vec<String>, rows: Vec<Vec<String>> },
}

/// Render a value list of `AnalysisSeries` into the shared payload shape
/// `{"series": [...], ...extras}`. Extras with colliding keys are a bug.
pub fn series_payload(series: &[AnalysisSeries], extras: Value) -> Value {
    let mut map = match extras {
        Value::Object(m) => m,
        Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("extras".into(), other);
            m
        }
    };
    map.insert(
        "series".into(),
        serde_json::to_value(series).expect("series serialization is infallible"),
    );
    Value::Object(map)
}

pub fn emit(
    command: &str,
    seed: u64,
    config: Value,
    output: CommandOutput,
    started: Instant,
    opts: &CommonOpts,
) -> CliResult<()> {
    let text = match opts.format {
        Format::Json => {
            let record = ExperimentRecord {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config,
                payload: output.payload,
                timing: Timing { wall_ms: started.elapsed().as_secs_f64() * 1e3 },
            };
            let mut s = serde_json::to_string_pretty(&record)
                .map_err(|e| CliError::Numerical(format!("record serialization: {e}")))?;
            s.push('\n');
            s
        }
        Format::Csv => csv_string(&output.csv),
    };

    match &opts.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Config(format!("writing `{}`: {e}", path.display())))?,
        None => {
            let stdout = std::io::stdout();
            stdout.lock().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn csv_string(table: &CsvTable) -> String {
    let mut out = String::new();
    match table {
        CsvTable::Series(series) => {
            out.push_str("metric,x,mean,sigma\n");
            for s in series {
                for (i, (&x, &mean)) in s.x.iter().zip(&s.mean).enumerate() {
                    let sigma = s
                        .sigma
                        .as_ref()
                        .map(|sg| sg[i].to_string())
                        .unwrap_or_default();
                    push_row(&mut out, &[s.metric.clone(), x.to_string(), mean.to_string(), sigma]);
                }
            }
        }
        CsvTable::Rows { header, rows } => {
            push_row(&mut out, header);
            for row in rows {
                push_row(&mut out, row);
            }
        }
    }
    out
}

fn push_row<S: AsRef<str>>(out: &mut String, fields: &[S]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&escape(f.as_ref()));
    }
    out.push('\n');
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
