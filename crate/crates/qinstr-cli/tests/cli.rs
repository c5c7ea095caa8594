//! End-to-end behavior of the compiled binary: the exit-code contract,
//! schema conformance of every emitted record, graceful degradation on
//! featureless data, and output routing.

use std::process::{Command, Output};

use serde_json::Value;

fn qinstr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qinstr"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn record_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON record")
}

// ---------------------------------------------------------------------------
// Structural JSON-schema validation. Covers the subset of keywords the
// shipped schema uses: type, enum, required, properties, items, minimum.

fn type_matches(name: &str, v: &Value) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        other => panic!("schema names unknown type `{other}`"),
    }
}

fn validate(schema: &Value, instance: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(t) = schema.get("type") {
        let names: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => panic!("schema type must be a string or array"),
        };
        if !names.iter().any(|n| type_matches(n, instance)) {
            errors.push(format!("{path}: expected type {names:?}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            errors.push(format!("{path}: value {instance} not in enum"));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(x) = instance.as_f64() {
            if x < min {
                errors.push(format!("{path}: {x} below minimum {min}"));
            }
        }
    }
    if let Some(obj) = instance.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required key `{key}`"));
                }
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, sub) in props {
                if let Some(child) = obj.get(key) {
                    validate(sub, child, &format!("{path}.{key}"), errors);
                }
            }
        }
    }
    if let (Some(arr), Some(item_schema)) = (instance.as_array(), schema.get("items")) {
        for (i, child) in arr.iter().enumerate() {
            validate(item_schema, child, &format!("{path}[{i}]"), errors);
        }
    }
}

fn assert_schema_valid(record: &Value) {
    let schema_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schema/record.schema.json");
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).expect("schema ships in repo"))
            .expect("schema parses");
    let mut errors = Vec::new();
    validate(&schema, record, "$", &mut errors);
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn every_subcommand_emits_a_schema_valid_record() {
    let invocations: [&[&str]; 7] = [
        &["trajectory", "--steps", "3", "--theta", "pi/2"],
        &["sweep-n", "--theta", "pi", "--n-list", "2,3", "--noise", "sim"],
        &["process", "--theta", "pi/2", "--n-max", "3", "--instructions", "+", "--noise", "sim"],
        &["compile", "--steps", "2", "--theta", "pi"],
        &["rb", "--depolarizing", "0.97", "--lengths", "1,5,10,20", "--randomizations", "8"],
        &["cz-amplify", "--phi11-err", "0.08pi", "--n-max", "8"],
        &["noise-report", "--noise", "device"],
    ];
    for args in invocations {
        let record = record_of(&qinstr(args));
        assert_schema_valid(&record);
        assert_eq!(record["command"], args[0], "command echo for {args:?}");
    }
}

#[test]
fn configuration_errors_exit_2() {
    let cases: [&[&str]; 5] = [
        &["trajectory", "--rho", "banana", "--steps", "2", "--theta", "pi"],
        &["sweep-n", "--theta", "pi", "--n-list", "0"],
        &["rb", "--depolarizing", "2.0"],
        &["trajectory", "--steps", "2", "--theta", "pi", "--noise", "file:/no/such/file.json"],
        &["trajectory", "--steps", "2", "--theta", "pi/0"],
    ];
    for args in cases {
        let out = qinstr(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    // Usage errors from argument parsing share the configuration class.
    assert_eq!(qinstr(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(qinstr(&["trajectory", "--steps", "2"]).status.code(), Some(2)); // missing --theta
}

#[test]
fn enumeration_guard_exits_4() {
    let out = qinstr(&["trajectory", "--steps", "25", "--theta", "pi", "--mode", "enumerate"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("guard"), "stderr names the class: {err}");
}

#[test]
fn thread_cap_rejects_non_counts() {
    let out = Command::new(env!("CARGO_BIN_EXE_qinstr"))
        .args(["noise-report"])
        .env("QINSTR_THREADS", "zero")
        .output()
        .expect("binary launches");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn featureless_decay_reports_null_fit() {
    let record = record_of(&qinstr(&[
        "rb",
        "--depolarizing",
        "1.0",
        "--lengths",
        "1,5,10",
        "--randomizations",
        "5",
    ]));
    assert!(record["payload"]["fit"].is_null(), "flat survival has no decay to fit");
    assert!(record["payload"]["clifford"].is_null());
}

#[test]
fn sampling_beyond_the_mask_count_falls_back_to_enumeration() {
    let record = record_of(&qinstr(&[
        "trajectory",
        "--steps",
        "3",
        "--theta",
        "pi",
        "--mode",
        "sample",
        "--randomizations",
        "8",
    ]));
    assert_eq!(record["config"]["mode"], "sample", "config echoes the request");
    assert_eq!(record["payload"]["mode_used"], "enumerate");
}

#[test]
fn output_routing_and_csv_shape() {
    let dir = tempfile::tempdir().expect("tempdir");
    let json_path = dir.path().join("run.json");
    let csv_path = dir.path().join("run.csv");

    let out = qinstr(&[
        "sweep-n",
        "--theta",
        "pi",
        "--n-list",
        "2,3",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "routed output leaves stdout empty");
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_schema_valid(&record);

    let out = qinstr(&[
        "sweep-n",
        "--theta",
        "pi",
        "--n-list",
        "2,3",
        "--format",
        "csv",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("metric,x,mean,sigma\n"), "series header row");
    assert!(!csv.contains("wall_ms"), "CSV carries no timing");
}
