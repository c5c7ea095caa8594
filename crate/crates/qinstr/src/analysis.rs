//! Statistical and benchmarking layer on top of the simulator: bootstrap
//! uncertainty for state and process estimates, randomized-benchmarking
//! decay fits with error-per-Clifford arithmetic, a simulated single-qubit
//! RB experiment, repeated-CZ coherent-error amplification, effective
//! coherence extraction from decay curves, and convergence diagnostics for
//! coin-randomized runs.
//!
//! Estimators are pure functions of their inputs and a seed. Bootstrap
//! repetitions run in parallel with per-repetition derived RNG streams and
//! an index-ordered reduction, so results do not depend on the rayon
//! thread count.
//!
//! Decay curves are fit to f(m) = A·p^m + B by weighted least squares
//! (weights forward-propagated from per-point standard deviations when
//! available). Error-per-Clifford follows the standard depolarizing
//! conversion ε = (d−1)/d · (1−p), with interleaved gates normalized to
//! the reference decay before conversion.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, KrausChannel};
use crate::compile::{self, Circuit, Moment};
use crate::gates::{self, GateKind, GateOp};
use crate::linalg::{func_herm, sqrtm_psd, CMatrix, Keep, C64};
use crate::noise::{self, NoiseParams};
use crate::qstate::{self, DensityMatrix};
use crate::seeding;
use crate::tomography::{self, ProcessMap, ProcessOutputs};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Bootstrap resampling
// ---------------------------------------------------------------------------

/// Resampling plan for bootstrap uncertainty estimates.
///
/// A dataset holds `r_qme` coin-randomization outcomes. Each bootstrap
/// repetition draws `n_samp` of them with replacement, averages the draws
/// into one density matrix, and evaluates the figure of merit; `n_samp_reps`
/// repetitions yield the reported mean and 1σ spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of randomization outcomes in the dataset.
    pub r_qme: usize,
    /// Resamples averaged into one bootstrap density matrix.
    pub n_samp: usize,
    /// Bootstrap repetitions used for the mean/σ estimate.
    pub n_samp_reps: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    /// Default plan for state-fidelity datasets (295 randomizations).
    pub fn state_defaults(seed: u64) -> Self {
        BootstrapConfig { r_qme: 295, n_samp: 100, n_samp_reps: 50, seed }
    }

    /// Default plan for process-fidelity datasets (105 randomizations).
    pub fn process_defaults(seed: u64) -> Self {
        BootstrapConfig { r_qme: 105, n_samp: 100, n_samp_reps: 50, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_qme == 0 || self.n_samp == 0 || self.n_samp_reps == 0 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap counts must all be ≥ 1 (r_qme = {}, n_samp = {}, n_samp_reps = {})",
                self.r_qme, self.n_samp, self.n_samp_reps
            )));
        }
        Ok(())
    }
}

/// Mean and 1σ spread of a bootstrapped figure of merit, with the raw
/// per-repetition samples for diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    pub sigma: f64,
    pub samples: Vec<f64>,
}

fn mean_sigma(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Average `n_samp` draws (with replacement) from `dms` into one state.
fn resample_average(dms: &[DensityMatrix], n_samp: usize, rng: &mut impl Rng) -> Result<DensityMatrix> {
    let dim = dms[0].dim();
    let mut sum = CMatrix::zeros(dim, dim);
    for _ in 0..n_samp {
        let pick = rng.gen_range(0..dms.len());
        sum = sum.add(dms[pick].matrix());
    }
    DensityMatrix::new(sum.scale_re(1.0 / n_samp as f64))
}

/// Marginalize a joint state down to the reference's dimension if needed.
fn align_to_reference(dm: &DensityMatrix, ref_dim: usize) -> Result<DensityMatrix> {
    if dm.dim() == ref_dim {
        Ok(dm.clone())
    } else if dm.dim() == 4 && ref_dim == 2 {
        dm.reduce(Keep::First)
    } else {
        Err(Error::Dimension {
            expected: format!("state of dimension {ref_dim} or a 2-qubit joint state"),
            got: format!("dimension {}", dm.dim()),
        })
    }
}

/// Bootstrap mean and 1σ of the state fidelity between averaged resamples
/// of `dms` and `reference`.
///
/// Joint (2-qubit) inputs are partial-traced to the data qubit before the
/// fidelity is taken. Deterministic per seed: repetition k draws from the
/// RNG stream derived from (seed, k), and samples are reduced in
/// repetition order.
pub fn bootstrap_state(
    dms: &[DensityMatrix],
    cfg: &BootstrapConfig,
    reference: &DensityMatrix,
) -> Result<BootstrapEstimate> {
    cfg.validate()?;
    if dms.is_empty() {
        return Err(Error::InvalidArgument("bootstrap dataset must not be empty".into()));
    }
    if dms.len() != cfg.r_qme {
        return Err(Error::InvalidArgument(format!(
            "dataset holds {} outcomes but the plan declares r_qme = {}",
            dms.len(),
            cfg.r_qme
        )));
    }
    let dim = dms[0].dim();
    if let Some(bad) = dms.iter().find(|d| d.dim() != dim) {
        return Err(Error::Dimension {
            expected: format!("uniform dataset dimension {dim}"),
            got: format!("dimension {}", bad.dim()),
        });
    }
    align_to_reference(&dms[0], reference.dim())?;
    let samples: Vec<f64> = (0..cfg.n_samp_reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut rng = seeding::stream_rng(cfg.seed, rep as u64);
            let avg = resample_average(dms, cfg.n_samp, &mut rng)?;
            qstate::state_fidelity(&align_to_reference(&avg, reference.dim())?, reference)
        })
        .collect::<Result<_>>()?;
    let (mean, sigma) = mean_sigma(&samples);
    Ok(BootstrapEstimate { mean, sigma, samples })
}

/// Per-randomization channel outputs for the four tomography input states,
/// grouped by input.
#[derive(Clone, Debug)]
pub struct ProcessEnsemble {
    pub zero: Vec<DensityMatrix>,
    pub one: Vec<DensityMatrix>,
    pub plus: Vec<DensityMatrix>,
    pub plus_i: Vec<DensityMatrix>,
}

impl ProcessEnsemble {
    fn groups(&self) -> [(&'static str, &[DensityMatrix]); 4] {
        [
            ("0", &self.zero),
            ("1", &self.one),
            ("+", &self.plus),
            ("+i", &self.plus_i),
        ]
    }

    fn validate(&self, r_qme: usize) -> Result<()> {
        for (label, group) in self.groups() {
            if group.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "input-state group \"{label}\" is empty"
                )));
            }
            if group.len() != r_qme {
                return Err(Error::InvalidArgument(format!(
                    "input-state group \"{label}\" holds {} outcomes but the plan declares r_qme = {r_qme}",
                    group.len()
                )));
            }
        }
        Ok(())
    }
}

/// Bootstrap mean and 1σ of the process fidelity between the channel
/// reconstructed from resampled ensemble averages and `reference`.
///
/// Each repetition resamples the four input-state groups independently,
/// averages each group into one mapping, reconstructs χ from the four
/// averaged mappings, projects it onto the CPTP cone, and evaluates the
/// process fidelity.
pub fn bootstrap_process(
    ensemble: &ProcessEnsemble,
    cfg: &BootstrapConfig,
    reference: &ProcessMap,
) -> Result<BootstrapEstimate> {
    cfg.validate()?;
    ensemble.validate(cfg.r_qme)?;
    let samples: Vec<f64> = (0..cfg.n_samp_reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut rng = seeding::stream_rng(cfg.seed, rep as u64);
            let mut avgs = Vec::with_capacity(4);
            for (_, group) in ensemble.groups() {
                let avg = resample_average(group, cfg.n_samp, &mut rng)?;
                avgs.push(align_to_reference(&avg, 2)?);
            }
            let outputs = ProcessOutputs::new(
                avgs[0].clone(),
                avgs[1].clone(),
                avgs[2].clone(),
                avgs[3].clone(),
            )?;
            let chi = tomography::process_tomography(&outputs)?;
            let projected = tomography::cptp_project(&chi)?;
            tomography::process_fidelity(&projected, reference)
        })
        .collect::<Result<_>>()?;
    let (mean, sigma) = mean_sigma(&samples);
    Ok(BootstrapEstimate { mean, sigma, samples })
}

// ---------------------------------------------------------------------------
// Decay-curve fitting
// ---------------------------------------------------------------------------

/// Weighted least-squares fit of survival data to f(m) = A·p^m + B.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RbFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub weighted_sse: f64,
    /// Per-point standard deviations the weights were propagated from,
    /// when provided.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_sigmas: Option<Vec<f64>>,
}

/// For fixed p, the weighted least-squares (A, B) and residual are closed
/// form; returns None when the design is degenerate (p^m constant).
fn linear_ab(p: f64, m: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m.len() {
        let x = p.powf(m[i]);
        sw += w[i];
        sx += w[i] * x;
        sy += w[i] * y[i];
        sxx += w[i] * x * x;
        sxy += w[i] * x * y[i];
    }
    let den = sw * sxx - sx * sx;
    if den.abs() <= 1e-12 * (sw * sxx).abs().max(1e-300) {
        return None;
    }
    let a = (sw * sxy - sx * sy) / den;
    let b = (sy - a * sx) / sw;
    let sse = m
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&mi, &yi), &wi)| wi * (yi - a * p.powf(mi) - b).powi(2))
        .sum();
    Some((a, b, sse))
}

const RB_P_FLOOR: f64 = 1e-6;
/// The scan deliberately overshoots p = 1 so that growth is detected and
/// rejected rather than silently clamped.
const RB_P_CEILING: f64 = 1.2;

/// Fit survival probabilities to f(m) = A·p^m + B by weighted least
/// squares.
///
/// `sigmas`, when given, are per-point standard deviations; weights are
/// 1/σ². The decay parameter is found by a grid scan plus golden-section
/// refinement over p, with (A, B) solved in closed form at each candidate.
/// Fits with p outside (0, 1] are rejected.
pub fn rb_fit(lengths: &[f64], survival: &[f64], sigmas: Option<&[f64]>) -> Result<RbFit> {
    if lengths.len() != survival.len() {
        return Err(Error::Dimension {
            expected: format!("{} survival points", lengths.len()),
            got: format!("{}", survival.len()),
        });
    }
    if lengths.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 3 length points, got {}",
            lengths.len()
        )));
    }
    if lengths.iter().chain(survival).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("lengths and survival must be finite".into()));
    }
    let weights: Vec<f64> = match sigmas {
        Some(s) => {
            if s.len() != lengths.len() {
                return Err(Error::Dimension {
                    expected: format!("{} sigma values", lengths.len()),
                    got: format!("{}", s.len()),
                });
            }
            if s.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "per-point sigmas must be positive and finite".into(),
                ));
            }
            s.iter().map(|&v| 1.0 / (v * v)).collect()
        }
        None => vec![1.0; lengths.len()],
    };

    let steps = 600;
    let dp = (RB_P_CEILING - RB_P_FLOOR) / steps as f64;
    let mut best: Option<(f64, f64)> = None; // (p, sse)
    for k in 0..=steps {
        let p = RB_P_FLOOR + dp * k as f64;
        if let Some((_, _, sse)) = linear_ab(p, lengths, survival, &weights) {
            if best.is_none_or(|(_, s)| sse < s) {
                best = Some((p, sse));
            }
        }
    }
    let Some((p_coarse, _)) = best else {
        return Err(Error::NoConvergence { what: "survival-decay fit", residual: f64::NAN });
    };

    // Golden-section refinement within one grid step of the coarse optimum.
    let (mut lo, mut hi) =
        ((p_coarse - dp).max(RB_P_FLOOR), (p_coarse + dp).min(RB_P_CEILING));
    let sse_at = |p: f64| {
        linear_ab(p, lengths, survival, &weights).map_or(f64::INFINITY, |(_, _, s)| s)
    };
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let (mut x1, mut x2) = (hi - inv_phi * (hi - lo), lo + inv_phi * (hi - lo));
    let (mut f1, mut f2) = (sse_at(x1), sse_at(x2));
    for _ in 0..100 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = sse_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = sse_at(x2);
        }
    }
    let mut p = 0.5 * (lo + hi);
    if p > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fitted decay parameter p = {p:.6} lies outside (0, 1]; survival grows with length"
        )));
    }
    p = p.min(1.0);
    let (a, b, sse) = linear_ab(p, lengths, survival, &weights)
        .ok_or(Error::NoConvergence { what: "survival-decay fit", residual: f64::NAN })?;
    Ok(RbFit { a, p, b, weighted_sse: sse, point_sigmas: sigmas.map(<[f64]>::to_vec) })
}

/// Least-squares fit of y(x) = C + A·e^{−r·x}·cos(ω·x + φ₀).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DampedSineFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// Angular frequency per x unit.
    pub frequency: f64,
    /// Envelope decay rate per x unit (≥ 0).
    pub decay_rate: f64,
    pub sse: f64,
}

impl DampedSineFit {
    /// Oscillation period in x units.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.frequency
    }

    /// 1/e count of the decay envelope in x units (infinite when undamped).
    pub fn characteristic_count(&self) -> f64 {
        1.0 / self.decay_rate
    }
}

/// For fixed (ω, r) the model is linear in (C, a, b) with
/// y = C + e^{−rx}(a·cos ωx + b·sin ωx); solve the normal equations.
fn damped_sine_linear(omega: f64, rate: f64, x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = vec![0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let env = (-rate * xi).exp();
        let row = [1.0, env * (omega * xi).cos(), env * (omega * xi).sin()];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            aty[r] += row[r] * yi;
        }
    }
    let sol = tomography::solve_real(ata, aty)?;
    let sse = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let env = (-rate * xi).exp();
            let model = sol[0] + env * (sol[1] * (omega * xi).cos() + sol[2] * (omega * xi).sin());
            (yi - model).powi(2)
        })
        .sum();
    Some((sol[0], sol[1], sol[2], sse))
}

/// Fit `y(x)` to an exponentially damped sinusoid
/// C + A·e^{−r·x}·cos(ω·x + φ₀).
///
/// Frequency and decay rate are found by a coarse grid scan followed by
/// simplex refinement; the remaining parameters are linear and solved in
/// closed form. Rejects flat curves with [`Error::FlatDecay`].
pub fn fit_damped_oscillation(x: &[f64], y: &[f64]) -> Result<DampedSineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: format!("{} ordinates", x.len()),
            got: format!("{}", y.len()),
        });
    }
    if x.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "oscillation fit needs at least 5 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("fit data must be finite".into()));
    }
    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if ymax - ymin <= 1e-9 * (1.0 + ymax.abs()) {
        return Err(Error::FlatDecay);
    }
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = xmax - xmin;
    if span <= 0.0 {
        return Err(Error::InvalidArgument("x values must not all coincide".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let dx_min = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);

    let omega_lo = 2.0 * PI / (4.0 * span);
    let omega_hi = PI / dx_min; // Nyquist limit of the sampling grid
    let grid = 700;
    let domega = (omega_hi - omega_lo) / grid as f64;
    let rates = [0.0, 0.25 / span, 1.0 / span, 4.0 / span];
    let mut best: Option<(f64, f64, f64)> = None; // (omega, rate, sse)
    for k in 0..=grid {
        let omega = omega_lo + domega * k as f64;
        for &rate in &rates {
            if let Some((_, _, _, sse)) = damped_sine_linear(omega, rate, x, y) {
                if best.is_none_or(|(_, _, s)| sse < s) {
                    best = Some((omega, rate, sse));
                }
            }
        }
    }
    let Some((omega0, rate0, sse0)) = best else {
        return Err(Error::NoConvergence { what: "damped-sine fit", residual: f64::NAN });
    };

    let objective = |v: &[f64]| {
        damped_sine_linear(v[0].abs(), v[1].abs(), x, y).map_or(f64::INFINITY, |(_, _, _, s)| s)
    };
    let scale = domega.max(0.5 / span);
    let (vbest, _, _) =
        tomography::nelder_mead(&objective, &[omega0, rate0], sse0, scale, 400);
    let (omega, rate) = (vbest[0].abs(), vbest[1].abs());
    let (c, ca, cb, sse) = damped_sine_linear(omega, rate, x, y)
        .ok_or(Error::NoConvergence { what: "damped-sine fit", residual: f64::NAN })?;
    Ok(DampedSineFit {
        offset: c,
        amplitude: ca.hypot(cb),
        phase: (-cb).atan2(ca),
        frequency: omega,
        decay_rate: rate,
        sse,
    })
}

// ---------------------------------------------------------------------------
// Error-per-Clifford arithmetic
// ---------------------------------------------------------------------------

/// Dimensionality of a randomized-benchmarking experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RbMode {
    SingleQubit,
    TwoQubit,
}

impl RbMode {
    /// Depolarizing conversion factor (d−1)/d.
    fn factor(self) -> f64 {
        match self {
            RbMode::SingleQubit => 0.5,
            RbMode::TwoQubit => 0.75,
        }
    }
}

/// Error rates derived from RB decay parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CliffordErrors {
    pub mode: RbMode,
    /// Average error per Clifford, (d−1)/d · (1 − p_ref).
    pub reference_error: f64,
    pub reference_fidelity: f64,
    /// Interleaved-gate error (d−1)/d · (1 − p_gate/p_ref), when a gate
    /// decay was provided.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_fidelity: Option<f64>,
}

/// Convert RB decay parameters into error-per-Clifford figures.
///
/// `p_ref` is the reference-curve decay; passing `p_gate` additionally
/// evaluates the interleaved gate error normalized to the reference.
pub fn clifford_errors(p_ref: f64, p_gate: Option<f64>, mode: RbMode) -> Result<CliffordErrors> {
    for (label, p) in [("reference", Some(p_ref)), ("interleaved", p_gate)] {
        if let Some(p) = p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{label} decay parameter {p} outside (0, 1]"
                )));
            }
        }
    }
    let f = mode.factor();
    let reference_error = f * (1.0 - p_ref);
    let gate_error = p_gate.map(|pg| f * (1.0 - pg / p_ref));
    Ok(CliffordErrors {
        mode,
        reference_error,
        reference_fidelity: 1.0 - reference_error,
        gate_error,
        gate_fidelity: gate_error.map(|e| 1.0 - e),
    })
}

/// Inverse of the reference conversion: the decay parameter that produces
/// `error` per Clifford.
pub fn reference_decay(error: f64, mode: RbMode) -> f64 {
    1.0 - error / mode.factor()
}

/// Inverse of the interleaved conversion: the gate decay that produces
/// `error` against reference decay `p_ref`.
pub fn interleaved_decay(error: f64, p_ref: f64, mode: RbMode) -> f64 {
    p_ref * (1.0 - error / mode.factor())
}

// ---------------------------------------------------------------------------
// Simulated single-qubit randomized benchmarking
// ---------------------------------------------------------------------------

static CLIFFORD_1Q: OnceLock<Vec<CMatrix>> = OnceLock::new();

fn unitaries_phase_equal(a: &CMatrix, b: &CMatrix) -> bool {
    (a.adjoint().matmul(b).trace().norm() - 2.0).abs() < 1e-9
}

/// The 24 single-qubit Clifford unitaries, enumerated by closing the
/// generator set {H, S} under multiplication (equality up to global phase).
pub fn clifford_group_1q() -> &'static [CMatrix] {
    CLIFFORD_1Q.get_or_init(|| {
        let generators = [gates::hadamard(), gates::rz(PI / 2.0)];
        let mut set = vec![CMatrix::identity(2)];
        let mut frontier = vec![CMatrix::identity(2)];
        while let Some(u) = frontier.pop() {
            for g in &generators {
                let v = g.matmul(&u);
                if !set.iter().any(|w| unitaries_phase_equal(w, &v)) {
                    set.push(v.clone());
                    frontier.push(v);
                }
            }
        }
        assert_eq!(set.len(), 24, "Clifford closure of {{H, S}} must have 24 elements");
        set
    })
}

/// Index of the group element inverting `total` up to a global phase.
fn clifford_inverse_index(total: &CMatrix, group: &[CMatrix]) -> usize {
    group
        .iter()
        .position(|g| (g.matmul(total).trace().norm() - 2.0).abs() < 1e-6)
        .expect("group closure guarantees an inverse element")
}

/// Error model applied per Clifford in the simulated RB experiment.
#[derive(Clone, Debug)]
pub enum RbNoise {
    Noiseless,
    /// Uniform depolarizing channel of Bloch-contraction `lambda` after
    /// every Clifford (inverting gate included).
    Depolarizing { lambda: f64 },
    /// Per-moment decoherence on the native compilation of each Clifford.
    Decoherence(NoiseParams),
}

/// Survival curve of a simulated RB run: per-length mean and 1σ over the
/// sequence randomizations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RbCurve {
    pub lengths: Vec<usize>,
    pub survival: Vec<f64>,
    pub sigma: Vec<f64>,
    pub randomizations: usize,
    pub seed: u64,
}

impl RbCurve {
    /// Weighted fit of the curve to A·p^m + B. Points with vanishing σ
    /// (deterministic error models) fall back to uniform weights.
    pub fn fit(&self) -> Result<RbFit> {
        let m: Vec<f64> = self.lengths.iter().map(|&l| l as f64).collect();
        let sigmas = if self.sigma.iter().all(|&s| s > 1e-12) {
            Some(self.sigma.as_slice())
        } else {
            None
        };
        rb_fit(&m, &self.survival, sigmas)
    }
}

/// Survival of one randomized sequence of `m` Cliffords plus the inverting
/// element, starting and measuring in |0⟩.
fn rb_sequence_survival(
    indices: &[usize],
    noise: &RbNoise,
    depolarizer: Option<&KrausChannel>,
) -> Result<f64> {
    let group = clifford_group_1q();
    let mut total = CMatrix::identity(2);
    for &idx in indices {
        total = group[idx].matmul(&total);
    }
    let inverse = clifford_inverse_index(&total, group);
    let gate_sequence = indices.iter().copied().chain([inverse]);

    match noise {
        RbNoise::Noiseless | RbNoise::Depolarizing { .. } => {
            let mut state = qstate::pure_state("0")?;
            for idx in gate_sequence {
                state = state.evolve(&group[idx])?;
                if let Some(dep) = depolarizer {
                    state = channels::apply(dep, &state)?;
                }
            }
            Ok(state.matrix()[(0, 0)].re)
        }
        RbNoise::Decoherence(np) => {
            let mut circuit = Circuit::new(1);
            for idx in gate_sequence {
                // u ≅ PhasedX(θ, φ)·VirtualZ(v): the frame rotation acts
                // first in time and costs nothing; Z-like Cliffords
                // compile to the frame rotation alone.
                let (theta, phi, vz) = compile::phased_x_virtual_z_angles(&group[idx])?;
                if vz.abs() > 1e-12 {
                    circuit.push(Moment::new(vec![GateOp::virtual_z(vz, 0)])?)?;
                }
                if theta.abs() > 1e-12 {
                    circuit.push(Moment::new(vec![GateOp::phased_x(theta, phi, 0)])?)?;
                }
            }
            let out = noise::simulate_noisy(&circuit, &qstate::pure_state("0")?, np)?;
            Ok(out.matrix()[(0, 0)].re)
        }
    }
}

/// Simulate single-qubit randomized benchmarking: for each sequence length,
/// average the |0⟩ survival over `randomizations` random Clifford
/// sequences (each closed by its inverting element).
///
/// The sequence for (length index i, randomization k) is drawn from the
/// RNG stream derived from (seed, i·randomizations + k), so curves are
/// reproducible and independent of thread count.
pub fn simulate_rb_1q(
    noise: &RbNoise,
    lengths: &[usize],
    randomizations: usize,
    seed: u64,
) -> Result<RbCurve> {
    if lengths.is_empty() {
        return Err(Error::InvalidArgument("lengths must not be empty".into()));
    }
    if randomizations == 0 {
        return Err(Error::InvalidArgument("randomizations must be ≥ 1".into()));
    }
    let depolarizer = match noise {
        RbNoise::Depolarizing { lambda } => Some(channels::depolarizing(*lambda)?),
        RbNoise::Decoherence(np) => {
            np.validate()?;
            None
        }
        RbNoise::Noiseless => None,
    };
    let stats: Vec<(f64, f64)> = lengths
        .par_iter()
        .enumerate()
        .map(|(li, &m)| -> Result<(f64, f64)> {
            let mut survivals = Vec::with_capacity(randomizations);
            for k in 0..randomizations {
                let mut rng =
                    seeding::stream_rng(seed, (li * randomizations + k) as u64);
                let indices: Vec<usize> =
                    (0..m).map(|_| rng.gen_range(0..24)).collect();
                survivals.push(rb_sequence_survival(&indices, noise, depolarizer.as_ref())?);
            }
            Ok(mean_sigma(&survivals))
        })
        .collect::<Result<_>>()?;
    Ok(RbCurve {
        lengths: lengths.to_vec(),
        survival: stats.iter().map(|&(m, _)| m).collect(),
        sigma: stats.iter().map(|&(_, s)| s).collect(),
        randomizations,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Repeated-CZ coherent-error amplification
// ---------------------------------------------------------------------------

/// Controlled-phase errors relative to the ideal CZ target (0, 0, π):
/// the realized gate is diag(1, e^{−iφ01}, e^{−iφ10}, e^{−i(π+φ11)}).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CzPhaseErrors {
    pub phi01: f64,
    pub phi10: f64,
    /// Deviation of the controlled phase from π.
    pub phi11: f64,
}

impl CzPhaseErrors {
    fn gate(&self) -> Result<GateOp> {
        GateOp::new(
            GateKind::CzGeneral {
                phi01: self.phi01,
                phi10: self.phi10,
                phi11: PI + self.phi11,
            },
            vec![0, 1],
        )
    }

    fn validate(&self) -> Result<()> {
        if [self.phi01, self.phi10, self.phi11].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("phase errors must be finite".into()));
        }
        Ok(())
    }
}

/// Gate fidelity of a single erroneous CZ against the ideal CZ,
/// F_g = (d·F_p + 1)/(d + 1) with F_p = |Tr(U†V)/d|² and d = 4.
///
/// Small phase errors barely move this number — the motivation for
/// amplifying them over long gate strings instead.
pub fn single_cz_fidelity(errors: &CzPhaseErrors) -> Result<f64> {
    errors.validate()?;
    let ideal = gates::cz_general(0.0, 0.0, PI);
    let actual = gates::cz_general(errors.phi01, errors.phi10, PI + errors.phi11);
    let overlap = ideal.adjoint().matmul(&actual).trace().norm() / 4.0;
    let fp = overlap * overlap;
    Ok((4.0 * fp + 1.0) / 5.0)
}

/// Gate-fidelity series of growing CZ strings: point n holds the fidelity
/// of the process implemented by n blocks (each two back-to-back CZs plus
/// an identity padding on both qubits) against the identity process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplificationSeries {
    pub block_counts: Vec<usize>,
    /// Total CZ count per point (2 per block).
    pub cz_counts: Vec<usize>,
    pub gate_fidelity: Vec<f64>,
}

impl AmplificationSeries {
    /// Damped-sinusoid fit of F_g against CZ count; the fitted period (in
    /// CZ gates) is 2π over the dominant per-gate phase error.
    pub fn oscillation_fit(&self) -> Result<DampedSineFit> {
        let x: Vec<f64> = self.cz_counts.iter().map(|&n| n as f64).collect();
        fit_damped_oscillation(&x, &self.gate_fidelity)
    }
}

fn amplification_circuit(errors: &CzPhaseErrors, blocks: usize) -> Result<Circuit> {
    let cz = errors.gate()?;
    let mut c = Circuit::new(2);
    for _ in 0..blocks {
        c.push(Moment::new(vec![cz.clone()])?)?;
        c.push(Moment::new(vec![cz.clone()])?)?;
        c.push(Moment::new(vec![
            GateOp::phased_x(0.0, 0.0, 0),
            GateOp::phased_x(0.0, 0.0, 1),
        ])?)?;
    }
    Ok(c)
}

/// Choi operator J = Σ_{ij} |i⟩⟨j| ⊗ E(|i⟩⟨j|) of the channel `run`,
/// reconstructed from the action on density matrices alone: diagonal
/// matrix units directly, off-diagonal ones via superposition inputs
/// E(|i⟩⟨j|) = E(uu†) + i·E(vv†) − (1+i)/2·(E_ii + E_jj).
fn channel_choi<F>(dim: usize, run: F) -> Result<CMatrix>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix>,
{
    let basis_dm = |entries: &[(usize, C64)]| -> Result<DensityMatrix> {
        let mut ket = vec![C64::new(0.0, 0.0); dim];
        for &(pos, amp) in entries {
            ket[pos] = amp;
        }
        DensityMatrix::from_ket(&ket)
    };
    let inv_sqrt2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i_sqrt2 = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);

    let mut blocks = vec![vec![CMatrix::zeros(dim, dim); dim]; dim];
    for (i, row) in blocks.iter_mut().enumerate() {
        let out = run(&basis_dm(&[(i, C64::new(1.0, 0.0))])?)?;
        row[i] = out.matrix().clone();
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let plus = run(&basis_dm(&[(i, inv_sqrt2), (j, inv_sqrt2)])?)?;
            let plus_i = run(&basis_dm(&[(i, inv_sqrt2), (j, i_sqrt2)])?)?;
            let diag = blocks[i][i].add(&blocks[j][j]).scale(C64::new(0.5, 0.5));
            let e_ij = plus
                .matrix()
                .add(&plus_i.matrix().scale(C64::new(0.0, 1.0)))
                .sub(&diag);
            blocks[j][i] = e_ij.adjoint();
            blocks[i][j] = e_ij;
        }
    }
    Ok(CMatrix::from_fn(dim * dim, dim * dim, |row, col| {
        let (i, r) = (row / dim, row % dim);
        let (j, s) = (col / dim, col % dim);
        blocks[i][j][(r, s)]
    }))
}

/// Choi operator of conjugation by `u` (dim d): block (i, j) is
/// u|i⟩⟨j|u†.
fn unitary_choi(u: &CMatrix) -> CMatrix {
    let dim = u.rows();
    CMatrix::from_fn(dim * dim, dim * dim, |row, col| {
        let (i, r) = (row / dim, row % dim);
        let (j, s) = (col / dim, col % dim);
        u[(r, i)] * u[(s, j)].conj()
    })
}

/// Process fidelity between two channels given as Choi operators:
/// Uhlmann fidelity of the trace-normalized (PSD-clipped) Choi states.
fn choi_process_fidelity(ja: &CMatrix, jb: &CMatrix) -> Result<f64> {
    let normalize = |j: &CMatrix| -> Result<CMatrix> {
        let clipped = func_herm(&j.symmetrize(), |x| C64::new(x.max(0.0), 0.0))?;
        let tr = clipped.trace().re;
        if tr <= 0.0 {
            return Err(Error::NotPositiveSemidefinite { min_eig: tr });
        }
        Ok(clipped.scale_re(1.0 / tr))
    };
    let a = normalize(ja)?;
    let b = normalize(jb)?;
    let sb = sqrtm_psd(&b)?;
    let inner = sb.matmul(&a).matmul(&sb).symmetrize();
    let root = sqrtm_psd(&inner)?;
    Ok(root.trace().re.powi(2).clamp(0.0, 1.0))
}

/// Amplify coherent CZ phase errors by process-characterizing strings of
/// n blocks of two back-to-back CZs (with identity paddings) against the
/// identity process, for n = 1..=n_max.
///
/// An ideal CZ squares to the identity, so any drop or oscillation of
/// F_g(n) is error signal: phase errors oscillate with period 2π/error in
/// CZ count, decoherence decays monotonically. Channels are evaluated in
/// exact-probability mode (no sampling), isolating coherent errors.
pub fn cz_phase_error_amplification(
    errors: &CzPhaseErrors,
    n_max: usize,
    noise: Option<&NoiseParams>,
) -> Result<AmplificationSeries> {
    errors.validate()?;
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be ≥ 1".into()));
    }
    if let Some(np) = noise {
        np.validate()?;
    }
    let identity_reference = unitary_choi(&CMatrix::identity(4));
    let gate_fidelity: Vec<f64> = (1..=n_max)
        .into_par_iter()
        .map(|n| -> Result<f64> {
            let circuit = amplification_circuit(errors, n)?;
            let j = match noise {
                None => unitary_choi(&compile::circuit_unitary(&circuit)?),
                Some(np) => {
                    let instrumented = noise::instrument(&circuit, np)?;
                    channel_choi(4, |dm| instrumented.simulate(dm))?
                }
            };
            let fp = choi_process_fidelity(&j, &identity_reference)?;
            Ok((4.0 * fp + 1.0) / 5.0)
        })
        .collect::<Result<_>>()?;
    Ok(AmplificationSeries {
        block_counts: (1..=n_max).collect(),
        cz_counts: (1..=n_max).map(|n| 2 * n).collect(),
        gate_fidelity,
    })
}

// ---------------------------------------------------------------------------
// Effective coherence during repeated gates
// ---------------------------------------------------------------------------

/// Shape of a coherence decay curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    /// Population decay: survival ≈ A·e^{−n/n_char} + B.
    T1Like,
    /// Ramsey-style fringe: survival ≈ C + A·e^{−n/n_char}·cos(ωn + φ₀).
    RamseyLike,
}

/// Parameters of the accepted decay model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DecayFit {
    Exponential(RbFit),
    DampedSine(DampedSineFit),
}

/// Effective coherence extracted from survival vs applied-gate count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoherenceFit {
    pub kind: DecayKind,
    /// Characteristic gate count of the decay (1/e).
    pub characteristic_gates: f64,
    /// Wall-clock stride per gate used for the time conversion.
    pub stride_ns: f64,
    /// Characteristic time, characteristic_gates · stride_ns.
    pub characteristic_time_us: f64,
    pub fit: DecayFit,
}

/// Extract an effective coherence time from survival vs gate count.
///
/// T1-like curves fit A·p^n + B with n_char = −1/ln p; Ramsey-like curves
/// fit a damped sinusoid with n_char the envelope 1/e count (a deliberate
/// small per-gate phase error makes the fringe frequency visible). The
/// reported time is n_char · stride_ns, where the stride is the repeated
/// gate's duration — including any inter-gate gap the caller folds in.
/// Curves with no resolvable decay are rejected with
/// [`Error::FlatDecay`].
pub fn effective_coherence(
    gate_counts: &[f64],
    survival: &[f64],
    kind: DecayKind,
    stride_ns: f64,
) -> Result<CoherenceFit> {
    if gate_counts.len() != survival.len() {
        return Err(Error::Dimension {
            expected: format!("{} survival points", gate_counts.len()),
            got: format!("{}", survival.len()),
        });
    }
    if gate_counts.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "coherence fit needs at least 5 points, got {}",
            gate_counts.len()
        )));
    }
    if stride_ns <= 0.0 || !stride_ns.is_finite() {
        return Err(Error::InvalidArgument(format!("stride_ns = {stride_ns} must be positive")));
    }
    let (ymin, ymax) = survival
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if ymax - ymin <= 1e-9 * (1.0 + ymax.abs()) {
        return Err(Error::FlatDecay);
    }
    let (characteristic_gates, fit) = match kind {
        DecayKind::T1Like => {
            let fit = rb_fit(gate_counts, survival, None)?;
            if fit.p >= 1.0 - 1e-12 || fit.a.abs() < 1e-9 * (1.0 + ymax.abs()) {
                return Err(Error::FlatDecay);
            }
            (-1.0 / fit.p.ln(), DecayFit::Exponential(fit))
        }
        DecayKind::RamseyLike => {
            let fit = fit_damped_oscillation(gate_counts, survival)?;
            let span = gate_counts.iter().fold(f64::NEG_INFINITY, |hi, &v| hi.max(v))
                - gate_counts.iter().fold(f64::INFINITY, |lo, &v| lo.min(v));
            // An envelope that loses < 0.01% over the whole measured window
            // is indistinguishable from no decay at all.
            if fit.decay_rate * span <= 1e-4 {
                return Err(Error::FlatDecay);
            }
            (1.0 / fit.decay_rate, DecayFit::DampedSine(fit))
        }
    };
    Ok(CoherenceFit {
        kind,
        characteristic_gates,
        stride_ns,
        characteristic_time_us: characteristic_gates * stride_ns * 1e-3,
        fit,
    })
}

// ---------------------------------------------------------------------------
// Coin-randomization convergence
// ---------------------------------------------------------------------------

/// Figures of merit of cumulative coin-mask averages as the number of
/// randomizations grows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub randomizations: Vec<usize>,
    /// Data-qubit fidelity of the running average against the reference.
    pub fidelity: Vec<f64>,
    /// Concurrence of the running average joint state.
    pub concurrence: Vec<f64>,
    /// Mutual information between the data and instruction subsystems.
    pub mutual_information: Vec<f64>,
}

/// Evaluate fidelity, concurrence, and mutual information of cumulative
/// averages over the first r per-mask joint states, for each r in
/// `r_grid` (strictly increasing).
///
/// A single coin history generally leaves the two qubits entangled and
/// correlated; averaging over histories suppresses both, which is what
/// makes the randomized protocol act as an effective instruction reset.
pub fn qme_convergence(
    per_mask: &[DensityMatrix],
    r_grid: &[usize],
    reference: &DensityMatrix,
) -> Result<ConvergenceSeries> {
    if per_mask.is_empty() {
        return Err(Error::InvalidArgument("per-mask state list must not be empty".into()));
    }
    if let Some(bad) = per_mask.iter().find(|d| d.dim() != 4) {
        return Err(Error::Dimension {
            expected: "2-qubit joint states (dimension 4)".into(),
            got: format!("dimension {}", bad.dim()),
        });
    }
    if reference.dim() != 2 {
        return Err(Error::Dimension {
            expected: "single-qubit reference (dimension 2)".into(),
            got: format!("dimension {}", reference.dim()),
        });
    }
    if r_grid.is_empty() {
        return Err(Error::InvalidArgument("randomization grid must not be empty".into()));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) || r_grid[0] == 0 {
        return Err(Error::InvalidArgument(
            "randomization grid must be strictly increasing and start at ≥ 1".into(),
        ));
    }
    if *r_grid.last().expect("nonempty") > per_mask.len() {
        return Err(Error::InvalidArgument(format!(
            "grid requests {} randomizations but only {} states were given",
            r_grid.last().expect("nonempty"),
            per_mask.len()
        )));
    }

    let mut sum = CMatrix::zeros(4, 4);
    let mut consumed = 0usize;
    let mut fidelity = Vec::with_capacity(r_grid.len());
    let mut concurrence = Vec::with_capacity(r_grid.len());
    let mut mutual_information = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        while consumed < r {
            sum = sum.add(per_mask[consumed].matrix());
            consumed += 1;
        }
        let avg = DensityMatrix::new(sum.scale_re(1.0 / r as f64))?;
        fidelity.push(qstate::state_fidelity(&avg.reduce(Keep::First)?, reference)?);
        concurrence.push(qstate::concurrence(&avg)?);
        mutual_information.push(qstate::mutual_information(&avg)?);
    }
    Ok(ConvergenceSeries {
        randomizations: r_grid.to_vec(),
        fidelity,
        concurrence,
        mutual_information,
    })
}

// ---------------------------------------------------------------------------
// Result series interchange format
// ---------------------------------------------------------------------------

/// Plot-ready analysis series: a named metric sampled on a grid, with
/// optional per-point spread, fit parameters, and the seed that produced
/// it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisSeries {
    pub metric: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AnalysisSeries {
    pub fn new(metric: impl Into<String>, x: Vec<f64>, mean: Vec<f64>) -> Result<Self> {
        if x.len() != mean.len() {
            return Err(Error::Dimension {
                expected: format!("{} mean values", x.len()),
                got: format!("{}", mean.len()),
            });
        }
        Ok(AnalysisSeries { metric: metric.into(), x, mean, sigma: None, fit: None, seed: None })
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.x.len() {
            return Err(Error::Dimension {
                expected: format!("{} sigma values", self.x.len()),
                got: format!("{}", sigma.len()),
            });
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn with_fit<T: Serialize>(mut self, fit: &T) -> Result<Self> {
        self.fit = Some(serde_json::to_value(fit).map_err(|e| {
            Error::InvalidArgument(format!("fit parameters not serializable: {e}"))
        })?);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}
