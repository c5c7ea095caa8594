//! `rb`: single-qubit randomized benchmarking.
//!
//! Random Clifford sequences of increasing length, each closed by the
//! inverse of its product, decay toward 1/2 as A·p^m + B; the decay p is
//! insensitive to state preparation and measurement and converts to the
//! average error per Clifford as ε = (1−p)/2. Noise comes from either an
//! explicit per-Clifford depolarizing strength (`--depolarizing`, with
//! p = λ as the analytic oracle) or the decoherence model selected by
//! `--noise`, under which each Clifford is compiled to its native
//! PhasedX/VirtualZ form and timed accordingly.

use clap::Args;
use qinstr::analysis::{clifford_errors, simulate_rb_1q, AnalysisSeries, RbMode, RbNoise};
use serde_json::{json, Value};

use crate::common::{CliError, CliResult, CommonOpts, NoiseChoice};
use crate::record::{series_payload, CommandOutput, CsvTable};

#[derive(Args, Clone, Debug)]
pub struct RbArgs {
    /// Depolarize by this strength after every Clifford (overrides --noise).
    #[arg(long)]
    pub depolarizing: Option<f64>,

    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "1,5,10,20,40,80,150")]
    pub lengths: String,

    /// Random sequences per length.
    #[arg(long, default_value_t = 20)]
    pub randomizations: usize,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &RbArgs) -> CliResult<(Value, CommandOutput)> {
    let noise = NoiseChoice::resolve(&args.common.noise)?;
    let lengths = parse_lengths(&args.lengths)?;

    let rb_noise = match (args.depolarizing, noise.params()) {
        (Some(lambda), None) => RbNoise::Depolarizing { lambda },
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--depolarizing and --noise are alternative noise sources; pick one".into(),
            ))
        }
        (None, Some(np)) => RbNoise::Decoherence(*np),
        (None, None) => RbNoise::Noiseless,
    };

    let curve = simulate_rb_1q(&rb_noise, &lengths, args.randomizations, args.common.seed)?;

    // A survival curve indistinguishable from 1 has no decay to fit;
    // report it as-is instead of failing.
    let flat = curve.survival.iter().all(|&s| (1.0 - s).abs() < 1e-9);
    let (fit_value, clifford_value) = if flat {
        (Value::Null, Value::Null)
    } else {
        let fit = curve.fit()?;
        let errors = clifford_errors(fit.p.min(1.0), None, RbMode::SingleQubit)?;
        (
            json!({ "a": fit.a, "p": fit.p, "b": fit.b, "weighted_sse": fit.weighted_sse }),
            serde_json::to_value(&errors)
                .map_err(|e| CliError::Numerical(format!("serializing errors: {e}")))?,
        )
    };

    let mut survival = AnalysisSeries::new(
        "survival",
        lengths.iter().map(|&m| m as f64).collect(),
        curve.survival.clone(),
    )?
    .with_seed(args.common.seed);
    if curve.sigma.iter().all(|&s| s > 1e-12) {
        survival = survival.with_sigma(curve.sigma.clone())?;
    }
    if let Value::Object(f) = &fit_value {
        survival = survival.with_fit(f)?;
    }

    let config = json!({
        "depolarizing": args.depolarizing,
        "lengths": &lengths,
        "randomizations": args.randomizations,
        "noise": noise.echo(),
        "shots": "exact",
    });
    let series = vec![survival];
    let payload = series_payload(
        &series,
        json!({ "fit": fit_value, "clifford": clifford_value }),
    );
    Ok((config, CommandOutput { payload, csv: CsvTable::Series(series) }))
}

fn parse_lengths(spec: &str) -> CliResult<Vec<usize>> {
    let lengths: Vec<usize> = spec
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("bad length list `{spec}`")))?;
    if lengths.is_empty() || lengths.iter().any(|&m| m == 0) {
        return Err(CliError::Config("sequence lengths must be ≥ 1".into()));
    }
    Ok(lengths)
}
