//! Two-qubit density-matrix simulator, compiler, and analysis kit for
//! instruction-driven partial-SWAP protocols.
//!
//! The crate simulates a protocol in which a *data* qubit σ is steered by
//! repeated partial-SWAP interactions e^{−i·SWAP·δ} with an *instruction*
//! qubit ρ, approximating the rotation e^{−iρθ}σe^{iρθ} after N = θ/δ steps.
//! Around that core sit the pieces needed to run the protocol as a realistic
//! numerical experiment:
//!
//! - [`linalg`]: dense complex matrices, Hermitian eigendecomposition,
//!   matrix functions, partial traces.
//! - [`qstate`]: density matrices, Bloch vectors, fidelity / trace-distance /
//!   entropy / concurrence metrics.
//! - [`gates`]: the concrete gate set (phased X rotations, virtual Z, the CZ
//!   family, partial SWAP) and its unitaries.
//! - [`channels`]: Kraus channels, amplitude damping and dephasing families,
//!   Choi form and CPTP checks.
//! - [`dme`]: the protocol core: single steps, ideal instruction refresh,
//!   randomized instruction dephasing (enumerated or sampled), closed-form
//!   oracle channels, analytic error bounds.
//! - [`compile`]: circuit IR, the 3-CZ decomposition of the partial SWAP,
//!   layer merging, depth accounting.
//! - [`noise`]: device coherence parameters and decoherence-instrumented
//!   circuit simulation.
//! - [`tomography`]: shot sampling with readout error, state and process
//!   tomography (MLE + CPTP projection), process/gate fidelities.
//! - [`analysis`]: bootstrap statistics, randomized-benchmarking fits and
//!   error arithmetic, coherent-error amplification, effective coherence,
//!   randomization-convergence metrics.
//!
//! Everything is deterministic under a caller-supplied seed; parallel loops
//! derive one RNG stream per task index so results do not depend on thread
//! scheduling.

pub mod analysis;
pub mod channels;
pub mod compile;
pub mod dme;
pub mod gates;
pub mod linalg;
pub mod noise;
pub mod qstate;
pub mod seeding;
pub mod tomography;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("matrix is not Hermitian (max |M - M^H| = {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    #[error("trace must be 1, got {trace:.6e}")]
    TraceNotOne { trace: f64 },

    #[error("unknown state label `{0}` (expected one of 0, 1, +, -, +i, -i)")]
    UnknownState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge (residual {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("refusing to enumerate 2^{steps} instruction masks (limit 2^20)")]
    MaskLimit { steps: usize },

    #[error("decay curve is too flat to fit a characteristic constant")]
    FlatDecay,
}

pub type Result<T> = std::result::Result<T, Error>;
