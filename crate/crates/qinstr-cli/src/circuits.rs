//! `compile`: lower a partial-SWAP block or a full N-step program to the
//! native gate set and show the schedule.
//!
//! Two modes. `--delta` compiles the single composite-SWAP template —
//! three CZs and four single-qubit layers, depth 7 — and reports the
//! phase-insensitive residual against the target unitary. `--steps` with
//! `--theta` compiles the full merged program for one coin mask (depth
//! 6N+1) and reports the residual against the unmerged reference
//! circuit, auditing the layer fusion.

use clap::Args;
use qinstr::compile::{
    build_dme2_circuit, build_dme2_circuit_unmerged, circuit_unitary, decompose_dswap, Circuit,
};
use qinstr::dme::{DmeConfig, QmeMask};
use qinstr::gates::{phase_insensitive_distance, swap_pow, GateKind, GateOp};
use serde_json::{json, Value};

use crate::common::{parse_state, CliError, CliResult, CommonOpts, NoiseChoice};
use crate::record::{CommandOutput, CsvTable};

#[derive(Args, Clone, Debug)]
pub struct CompileArgs {
    /// Compile a single partial-SWAP block e^{−i·SWAP·δ}.
    #[arg(long, value_parser = crate::angle::parse_angle, conflicts_with_all = ["steps", "theta"])]
    pub delta: Option<f64>,

    /// Compile a full N-step program (requires --theta).
    #[arg(long, requires = "theta")]
    pub steps: Option<usize>,

    /// Total rotation angle θ of the full program.
    #[arg(long, value_parser = crate::angle::parse_angle, requires = "steps")]
    pub theta: Option<f64>,

    /// Instruction state ρ_in fixing the coin axis (full program only).
    #[arg(long, default_value = "+")]
    pub rho: String,

    /// Coin mask: a bit string (`0110`) or a mask index (full program only).
    #[arg(long, default_value = "0")]
    pub mask: String,

    /// Emit the unmerged 8N-moment reference instead of the fused form.
    #[arg(long)]
    pub unmerged: bool,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &CompileArgs) -> CliResult<(Value, CommandOutput)> {
    let noise = NoiseChoice::resolve(&args.common.noise)?;

    let (mode, circuit, residual) = match (args.delta, args.steps) {
        (Some(delta), None) => {
            let c = decompose_dswap(delta)?;
            let residual = phase_insensitive_distance(&circuit_unitary(&c)?, &swap_pow(delta));
            ("dswap", c, residual)
        }
        (None, Some(steps)) => {
            let theta = args.theta.expect("clap enforces --theta with --steps");
            let rho_in = parse_state(&args.rho)?;
            let sigma_in = parse_state("0")?;
            let mask = parse_mask(&args.mask, steps)?;
            let cfg = DmeConfig::enumerated(rho_in, sigma_in, steps, theta);
            let merged = build_dme2_circuit(&cfg, &mask)?;
            let unmerged = build_dme2_circuit_unmerged(&cfg, &mask)?;
            let residual = phase_insensitive_distance(
                &circuit_unitary(&merged)?,
                &circuit_unitary(&unmerged)?,
            );
            let c = if args.unmerged { unmerged } else { merged };
            ("dme2", c, residual)
        }
        _ => {
            return Err(CliError::Config(
                "exactly one of --delta or --steps/--theta is required".into(),
            ))
        }
    };

    let config = json!({
        "mode": mode,
        "delta": args.delta,
        "steps": args.steps,
        "theta": args.theta,
        "rho": args.rho,
        "mask": args.mask,
        "unmerged": args.unmerged,
        "noise": noise.echo(),
    });

    let (listing, rows) = listing_of(&circuit);
    let payload = json!({
        "depth": circuit.depth(),
        "cz_count": circuit.cz_count(),
        "duration_ns": circuit.moments.iter().map(|m| m.duration_ns()).sum::<f64>(),
        "residual": residual,
        "circuit": circuit,
        "listing": listing,
    });
    let csv = CsvTable::Rows {
        header: ["moment", "tag", "duration_ns", "ops"].map(String::from).to_vec(),
        rows,
    };
    Ok((config, CommandOutput { payload, csv }))
}

fn parse_mask(spec: &str, steps: usize) -> CliResult<QmeMask> {
    if !spec.is_empty() && spec.len() == steps && spec.chars().all(|c| c == '0' || c == '1') {
        return Ok(QmeMask::from_bit_string(spec)?);
    }
    let index = spec
        .parse::<u64>()
        .map_err(|_| CliError::Config(format!("mask `{spec}` is neither a bit string nor an index")))?;
    Ok(QmeMask::new(index, steps)?)
}

fn listing_of(c: &Circuit) -> (Vec<Value>, Vec<Vec<String>>) {
    let mut listing = Vec::with_capacity(c.moments.len());
    let mut rows = Vec::with_capacity(c.moments.len());
    for (i, m) in c.moments.iter().enumerate() {
        let ops: Vec<String> = m.ops.iter().map(op_string).collect();
        let tag = m.tag.clone().unwrap_or_default();
        listing.push(json!({
            "moment": i,
            "tag": tag,
            "duration_ns": m.duration_ns(),
            "ops": ops,
        }));
        rows.push(vec![i.to_string(), tag, m.duration_ns().to_string(), ops.join("; ")]);
    }
    (listing, rows)
}

fn op_string(op: &GateOp) -> String {
    let qubits = op
        .qubits
        .iter()
        .map(|q| q.to_string())
        .collect::<Vec<_>>()
        .join(",");
    match &op.kind {
        GateKind::PhasedX { theta, phi } => format!("PhasedX({theta}, {phi})@{qubits}"),
        GateKind::VirtualZ { phi } => format!("VirtualZ({phi})@{qubits}"),
        GateKind::H => format!("H@{qubits}"),
        GateKind::Cz => format!("CZ@{qubits}"),
        GateKind::CzGeneral { phi01, phi10, phi11 } => {
            format!("CzGeneral({phi01}, {phi10}, {phi11})@{qubits}")
        }
        GateKind::Cnot => format!("CNOT@{qubits}"),
        GateKind::SwapPow { delta } => format!("SwapPow({delta})@{qubits}"),
        GateKind::QmeMark { axis, coin } => {
            format!("QmeMark([{}, {}, {}], {coin})@{qubits}", axis[0], axis[1], axis[2])
        }
    }
}
