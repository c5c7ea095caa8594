//! Flags and error plumbing shared by every subcommand.
//!
//! All commands speak the same dialect: `--seed` roots every derived RNG
//! stream, `--noise` picks a decoherence model, `--shots` switches between
//! exact probabilities and sampled tomography, and `--out`/`--format`
//! steer where and how the record is written. Failures map onto the
//! process exit code: 2 for configuration problems, 3 for numerical
//! failures such as a fit that does not converge, 4 for guard rails like
//! the mask-enumeration limit.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qinstr::noise::NoiseParams;
use qinstr::qstate::{pure_state, DensityMatrix};
use serde_json::{json, Value};

/// Error carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration: bad flags, labels, files, paths. Exit 2.
    Config(String),
    /// A computation failed to converge or left the valid domain. Exit 3.
    Numerical(String),
    /// A guard refused to run an oversized request. Exit 4.
    Guard(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Guard(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Guard(m) => write!(f, "guard violation: {m}"),
        }
    }
}

impl From<qinstr::Error> for CliError {
    fn from(e: qinstr::Error) -> Self {
        use qinstr::Error::*;
        match e {
            InvalidArgument(_) | Dimension { .. } | UnknownState(_) => {
                CliError::Config(e.to_string())
            }
            MaskLimit { .. } => CliError::Guard(e.to_string()),
            NotHermitian { .. } | NotPositiveSemidefinite { .. } | TraceNotOne { .. }
            | NoConvergence { .. } | FlatDecay => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Flags accepted by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct CommonOpts {
    /// Base seed; every random draw derives from (seed, point index).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Noise model: none | sim | device | file:<path to JSON parameters>.
    #[arg(long, default_value = "none")]
    pub noise: String,

    /// Measurement mode: `exact` probabilities, or a shot count for
    /// sampled tomographic reconstruction.
    #[arg(long, default_value = "exact")]
    pub shots: String,

    /// Write the record here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output format; JSON is the source of truth, CSV mirrors the series.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Resolved `--noise` choice, keeping the provenance for the config echo.
#[derive(Clone, Debug)]
pub enum NoiseChoice {
    None,
    Sim(NoiseParams),
    Device(NoiseParams),
    File(PathBuf, NoiseParams),
}

impl NoiseChoice {
    pub fn resolve(spec: &str) -> CliResult<Self> {
        match spec {
            "none" => Ok(NoiseChoice::None),
            "sim" => Ok(NoiseChoice::Sim(NoiseParams::sim())),
            "device" => Ok(NoiseChoice::Device(NoiseParams::device())),
            other => {
                let Some(path) = other.strip_prefix("file:") else {
                    return Err(CliError::Config(format!(
                        "unknown noise model `{other}` (expected none, sim, device, or file:<path>)"
                    )));
                };
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("noise file `{path}`: {e}")))?;
                let params: NoiseParams = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("noise file `{path}`: {e}")))?;
                params.validate()?;
                Ok(NoiseChoice::File(PathBuf::from(path), params))
            }
        }
    }

    /// The decoherence parameters, or `None` for a noiseless run.
    pub fn params(&self) -> Option<&NoiseParams> {
        match self {
            NoiseChoice::None => None,
            NoiseChoice::Sim(p) | NoiseChoice::Device(p) | NoiseChoice::File(_, p) => Some(p),
        }
    }

    /// Config-echo value; parameters are embedded so a record is
    /// reproducible even if a preset changes meaning later.
    pub fn echo(&self) -> Value {
        match self {
            NoiseChoice::None => json!({ "kind": "none" }),
            NoiseChoice::Sim(p) => json!({ "kind": "sim", "params": p }),
            NoiseChoice::Device(p) => json!({ "kind": "device", "params": p }),
            NoiseChoice::File(path, p) => {
                json!({ "kind": "file", "path": path.display().to_string(), "params": p })
            }
        }
    }
}

/// Resolved `--shots` mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShotMode {
    Exact,
    Sampled(u64),
}

impl ShotMode {
    pub fn resolve(spec: &str) -> CliResult<Self> {
        if spec == "exact" {
            return Ok(ShotMode::Exact);
        }
        match spec.parse::<u64>() {
            Ok(n) if n > 0 => Ok(ShotMode::Sampled(n)),
            _ => Err(CliError::Config(format!(
                "shot mode `{spec}` (expected `exact` or a positive count)"
            ))),
        }
    }

    pub fn echo(&self) -> Value {
        match self {
            ShotMode::Exact => json!("exact"),
            ShotMode::Sampled(n) => json!(n),
        }
    }
}

/// A single-qubit state from its cardinal label.
pub fn parse_state(label: &str) -> CliResult<DensityMatrix> {
    Ok(pure_state(label)?)
}
