//! `noise-report`: the resolved decoherence model, spelled out.
//!
//! Turns a noise selection into the quantities the simulator actually
//! uses: per-qubit relaxation and pure-dephasing rates while idling and
//! while a CZ is played (the data qubit is parked at lower coherence
//! during the gate), moment durations, and the characteristic CZ counts
//! those rates imply — the number of repeated CZs over which an excited
//! data qubit decays by 1/e, and the equivalent wall-clock time.

use clap::Args;
use qinstr::noise::QubitNoise;
use serde_json::{json, Value};

use crate::common::{CliResult, CommonOpts, NoiseChoice};
use crate::record::{CommandOutput, CsvTable};

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &ReportArgs) -> CliResult<(Value, CommandOutput)> {
    let noise = NoiseChoice::resolve(&args.common.noise)?;
    let config = json!({ "noise": noise.echo() });

    let payload = match noise.params() {
        None => json!({
            "kind": "none",
            "note": "noiseless: all channels are identity",
        }),
        Some(np) => {
            let cz_moment_ns = np.t_cz_ns + np.cz_gap_ns;
            json!({
                "kind": kind_name(&noise),
                "durations_ns": {
                    "single_qubit_layer": np.t_1qb_ns,
                    "cz": np.t_cz_ns,
                    "cz_gap": np.cz_gap_ns,
                    "cz_moment": cz_moment_ns,
                },
                "qubits": [
                    qubit_report(&np.q1, 0, "data", cz_moment_ns),
                    qubit_report(&np.q2, 1, "instruction", cz_moment_ns),
                ],
            })
        }
    };

    let csv = CsvTable::Rows {
        header: vec!["field".into(), "value".into()],
        rows: flatten("", &payload),
    };
    Ok((config, CommandOutput { payload, csv }))
}

fn kind_name(noise: &NoiseChoice) -> &'static str {
    match noise {
        NoiseChoice::None => "none",
        NoiseChoice::Sim(_) => "sim",
        NoiseChoice::Device(_) => "device",
        NoiseChoice::File(_, _) => "file",
    }
}

fn qubit_report(q: &QubitNoise, index: usize, role: &str, cz_moment_ns: f64) -> Value {
    let (idle_g1, idle_gphi) = q.idle_rates();
    let (cz_g1, cz_gphi) = q.cz_rates();
    let mut v = json!({
        "index": index,
        "role": role,
        "t1_us": q.t1_us,
        "t2r_us": q.t2r_us,
        "idle_rates_per_ns": { "gamma1": idle_g1, "gamma_phi": idle_gphi },
        "cz_rates_per_ns": { "gamma1": cz_g1, "gamma_phi": cz_gphi },
    });
    let obj = v.as_object_mut().expect("built as object");
    if let Some(t1_eff) = q.t1_eff_us {
        obj.insert("t1_eff_us".into(), json!(t1_eff));
    }
    if let Some(t2r_eff) = q.t2r_eff_us {
        obj.insert("t2r_eff_us".into(), json!(t2r_eff));
    }
    // e^{-Γ1·t_cz} per CZ moment: characteristic count n* = 1/(Γ1·t_cz).
    if cz_g1 > 0.0 {
        let n_star = 1.0 / (cz_g1 * cz_moment_ns);
        obj.insert("characteristic_cz_count".into(), json!(n_star));
        obj.insert("characteristic_cz_time_us".into(), json!(n_star * cz_moment_ns * 1e-3));
    }
    v
}

/// Depth-first flatten of a JSON tree into (dotted path, scalar) rows.
fn flatten(prefix: &str, v: &Value) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                rows.extend(flatten(&path, child));
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                rows.extend(flatten(&format!("{prefix}[{i}]"), child));
            }
        }
        scalar => rows.push(vec![prefix.to_string(), scalar_string(scalar)]),
    }
    rows
}

fn scalar_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
