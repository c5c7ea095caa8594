//! Instruction-driven partial-SWAP protocol.
//!
//! A data qubit σ is steered toward the unitary e^{−iρθ} defined by an
//! *instruction* qubit state ρ, by interleaving N partial swaps
//! e^{−i·SWAP·δ} with δ = θ/N. Two instruction-handling strategies are
//! implemented:
//!
//! * **refresh** — the instruction qubit is discarded and re-prepared in
//!   ρ_in after every step. For pure ρ_in the resulting data-qubit channel
//!   has a closed form: the target rotation followed by amplitude damping
//!   of strength p_N = 1 − cos^{2N}(δ) toward the instruction state
//!   ([`closed_form_channel`]).
//! * **coin-flip reinitialization** — instead of resetting, each step ends
//!   with a fair coin choosing between the identity and a π rotation about
//!   the instruction's polarization axis ν. Averaged over coins this
//!   dephases the instruction qubit in its own eigenbasis, emulating a
//!   projective measurement without readout. The residual error relative
//!   to refresh mode is bounded by 2N sin²(δ) ([`error_bounds`]).
//!
//! Joint states are laid out with the data qubit as the first tensor
//! factor and the instruction qubit as the second, so Ω = σ ⊗ ρ.
//!
//! Coin histories are `QmeMask` values; a run over many masks averages the
//! per-mask joint trajectories. Mask enumeration is capped at 2^20 and the
//! averaging loop is parallelized over fixed-size chunks that are reduced
//! in index order, so results are bit-identical regardless of thread count.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;

use crate::channels::KrausChannel;
use crate::gates::{self, GateKind, GateOp};
use crate::linalg::{partial_trace, CMatrix, Keep, C64};
use crate::qstate::{bloch, DensityMatrix};
use crate::seeding;
use crate::{Error, Result};

/// Largest step count for which coin masks may be enumerated exhaustively.
pub const MASK_ENUM_LIMIT: usize = 20;

/// Qubit index of the instruction register in compiled circuits and gate
/// ops emitted by this module (the data qubit is index 0).
pub const INSTRUCTION_QUBIT: usize = 1;

/// How the coin-flip axis ν is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QmeAxis {
    /// Normalized Bloch vector of ρ_in. Errors if ρ_in is unpolarized.
    Auto,
    /// Caller-supplied unit axis.
    Fixed([f64; 3]),
}

/// Instruction-handling strategy plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DmeMode {
    /// Re-prepare ρ_in after every step.
    Refresh,
    /// Average over all 2^N coin masks.
    QmeEnumerate,
    /// Average over `randomizations` coin masks drawn i.i.d. from the
    /// given seed.
    QmeSample { randomizations: usize, seed: u64 },
}

/// Full description of one protocol run.
#[derive(Clone, Debug)]
pub struct DmeConfig {
    pub rho_in: DensityMatrix,
    pub sigma_in: DensityMatrix,
    pub steps: usize,
    pub theta: f64,
    pub qme_axis: QmeAxis,
    pub mode: DmeMode,
}

impl DmeConfig {
    /// Refresh-mode configuration with the axis resolved automatically.
    pub fn refresh(rho_in: DensityMatrix, sigma_in: DensityMatrix, steps: usize, theta: f64) -> Self {
        DmeConfig { rho_in, sigma_in, steps, theta, qme_axis: QmeAxis::Auto, mode: DmeMode::Refresh }
    }

    /// Same inputs, exhaustive coin enumeration.
    pub fn enumerated(rho_in: DensityMatrix, sigma_in: DensityMatrix, steps: usize, theta: f64) -> Self {
        DmeConfig { mode: DmeMode::QmeEnumerate, ..DmeConfig::refresh(rho_in, sigma_in, steps, theta) }
    }

    /// Same inputs, `r` sampled coin masks.
    pub fn sampled(
        rho_in: DensityMatrix,
        sigma_in: DensityMatrix,
        steps: usize,
        theta: f64,
        randomizations: usize,
        seed: u64,
    ) -> Self {
        DmeConfig {
            mode: DmeMode::QmeSample { randomizations, seed },
            ..DmeConfig::refresh(rho_in, sigma_in, steps, theta)
        }
    }

    /// Per-step swap angle θ/N.
    pub fn delta(&self) -> f64 {
        self.theta / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_in.dim() != 2 {
            return Err(dim_error(2, self.rho_in.dim()));
        }
        if self.sigma_in.dim() != 2 {
            return Err(dim_error(2, self.sigma_in.dim()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("step count must be at least 1".into()));
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta <= 2.0 * PI) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "per-step angle theta/N = {delta} outside (0, 2*pi]"
            )));
        }
        if let QmeAxis::Fixed(axis) = self.qme_axis {
            unit_axis(axis)?;
        }
        if let DmeMode::QmeSample { randomizations, .. } = self.mode {
            if randomizations == 0 {
                return Err(Error::InvalidArgument("randomizations must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// The coin-flip axis actually used: `Fixed` verbatim, `Auto` as the
    /// normalized Bloch vector of ρ_in.
    pub fn resolve_axis(&self) -> Result<[f64; 3]> {
        match self.qme_axis {
            QmeAxis::Fixed(axis) => unit_axis(axis),
            QmeAxis::Auto => {
                let b = bloch(&self.rho_in)?;
                let n = b.norm();
                if n < 1e-9 {
                    return Err(Error::InvalidArgument(
                        "instruction state is unpolarized; supply a fixed coin axis".into(),
                    ));
                }
                Ok([b.x / n, b.y / n, b.z / n])
            }
        }
    }
}

fn dim_error(expected: usize, got: usize) -> Error {
    Error::Dimension { expected: expected.to_string(), got: got.to_string() }
}

fn unit_axis(axis: [f64; 3]) -> Result<[f64; 3]> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("coin axis has norm {n}, expected 1")));
    }
    Ok(axis)
}

/// One coin history: bit n is the coin outcome after step n (true = flip).
///
/// Stored as a bitfield, so a mask covers at most 63 steps; exhaustive
/// enumeration is further capped at [`MASK_ENUM_LIMIT`] steps.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct QmeMask {
    index: u64,
    steps: u8,
}

impl QmeMask {
    pub fn new(index: u64, steps: usize) -> Result<Self> {
        if steps > 63 {
            return Err(Error::MaskLimit { steps });
        }
        if steps < 64 && index >> steps != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask index {index} does not fit in {steps} bits"
            )));
        }
        Ok(QmeMask { index, steps: steps as u8 })
    }

    /// Coin outcome after step `step` (0-based).
    pub fn bit(&self, step: usize) -> bool {
        debug_assert!(step < self.steps as usize);
        self.index >> step & 1 == 1
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn steps(&self) -> usize {
        self.steps as usize
    }

    /// Number of π-flips in the history.
    pub fn flips(&self) -> u32 {
        self.index.count_ones()
    }

    /// Bits in step order, e.g. "0110" for flips after steps 1 and 2.
    pub fn to_bit_string(&self) -> String {
        (0..self.steps as usize).map(|s| if self.bit(s) { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let mut index = 0u64;
        let mut steps = 0usize;
        for ch in s.chars() {
            if steps >= 64 {
                return Err(Error::MaskLimit { steps: s.len() });
            }
            match ch {
                '0' => {}
                '1' => index |= 1 << steps,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "mask strings contain only 0 and 1, got {ch:?}"
                    )))
                }
            }
            steps += 1;
        }
        QmeMask::new(index, steps)
    }
}

impl fmt::Debug for QmeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QmeMask({})", self.to_bit_string())
    }
}

impl serde::Serialize for QmeMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> serde::Deserialize<'de> for QmeMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        QmeMask::from_bit_string(&s).map_err(serde::de::Error::custom)
    }
}

/// e^{−i·SWAP·δ} conjugation of a joint two-qubit state.
pub fn dswap_step(joint: &DensityMatrix, delta: f64) -> Result<DensityMatrix> {
    if joint.dim() != 4 {
        return Err(dim_error(4, joint.dim()));
    }
    joint.evolve(&gates::swap_pow(delta))
}

/// Refresh-mode data-qubit trajectory σ(0), σ(1), …, σ(N).
///
/// Each step tensors the current data state with a fresh copy of ρ_in,
/// applies the partial swap, and traces the instruction back out. The
/// `mode` field of the config is not consulted.
pub fn dme_refresh(cfg: &DmeConfig) -> Result<Vec<DensityMatrix>> {
    cfg.validate()?;
    let u = gates::swap_pow(cfg.delta());
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(cfg.sigma_in.clone());
    let mut sigma = cfg.sigma_in.matrix().clone();
    for _ in 0..cfg.steps {
        let omega = u.conjugate(&sigma.kron(cfg.rho_in.matrix()));
        sigma = partial_trace(&omega, Keep::First)?;
        out.push(DensityMatrix::new(sigma.clone())?);
    }
    Ok(out)
}

/// The exact data-qubit channel equivalent to N refresh-mode steps with a
/// *pure* instruction state: the target rotation e^{−iρθ} composed with
/// amplitude damping of probability p_N = 1 − cos^{2N}(θ/N) toward ρ_in.
///
/// The off-diagonal damping amplitude is the *signed* value cos^N(θ/N),
/// not √(1 − p_N); the two differ when cos(θ/N) < 0 and N is odd (e.g.
/// θ = π at N = 1, where the partial swap degenerates to a global phase
/// and the channel is the identity).
///
/// Errors if ρ_in is mixed (largest eigenvalue below 1 − 1e-9); step
/// simulation via [`dme_refresh`] covers that case.
pub fn closed_form_channel(rho_in: &DensityMatrix, steps: usize, theta: f64) -> Result<KrausChannel> {
    if rho_in.dim() != 2 {
        return Err(dim_error(2, rho_in.dim()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("step count must be at least 1".into()));
    }
    let delta = theta / steps as f64;
    if !(delta > 0.0 && delta <= 2.0 * PI) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "per-step angle theta/N = {delta} outside (0, 2*pi]"
        )));
    }
    let eig = crate::linalg::herm_eig(rho_in.matrix())?;
    let top = eig.values[1];
    if top < 1.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "closed form requires a pure instruction state (largest eigenvalue {top})"
        )));
    }
    // Basis change sending |0⟩ to the instruction state: columns are the
    // top eigenvector and its orthogonal complement.
    let v0 = eig.vectors[(0, 1)];
    let v1 = eig.vectors[(1, 1)];
    let basis = CMatrix::from_rows(&[vec![v0, -v1.conj()], vec![v1, v0.conj()]]);
    let a = delta.cos().powi(steps as i32);
    let zero = C64::new(0.0, 0.0);
    let keep = CMatrix::from_rows(&[
        vec![C64::new(1.0, 0.0), zero],
        vec![zero, C64::new(a, 0.0)],
    ]);
    let decay = CMatrix::from_rows(&[
        vec![zero, C64::new((1.0 - a * a).max(0.0).sqrt(), 0.0)],
        vec![zero, zero],
    ]);
    let rotation = crate::linalg::expm_herm(rho_in.matrix(), theta)?;
    let kraus = [keep, decay]
        .iter()
        .map(|k| basis.matmul(k).matmul(&basis.adjoint()).matmul(&rotation))
        .collect();
    KrausChannel::new(kraus)
}

/// The target unitary e^{−iρθ} an ideal (N → ∞) run would apply.
pub fn instruction_unitary(rho_in: &DensityMatrix, theta: f64) -> Result<CMatrix> {
    crate::linalg::expm_herm(rho_in.matrix(), theta)
}

/// The gate op a compiled circuit inserts after each step: identity or a
/// π rotation about `axis` on the instruction qubit, depending on the
/// coin. Both branches occupy one single-qubit gate slot.
pub fn qme_gate(axis: [f64; 3], coin: bool) -> Result<GateOp> {
    let axis = unit_axis(axis)?;
    GateOp::new(GateKind::QmeMark { axis, coin }, vec![INSTRUCTION_QUBIT])
}

/// Final joint state reached under one specific coin history.
#[derive(Clone, Debug)]
pub struct MaskOutcome {
    pub mask: QmeMask,
    pub joint: DensityMatrix,
}

/// Mask-averaged trajectory of a coin-flip run.
#[derive(Clone, Debug)]
pub struct Dme2Run {
    /// Average joint state Ω(n) for n = 0..=N.
    pub joint: Vec<DensityMatrix>,
    /// Data-qubit marginal σ(n) of each Ω(n).
    pub data: Vec<DensityMatrix>,
    /// Instruction-qubit marginal ρ(n) of each Ω(n).
    pub instruction: Vec<DensityMatrix>,
    /// Per-mask final joints, in mask order.
    pub per_mask_final: Vec<MaskOutcome>,
    /// Purity of ρ_in; below 1 the coin axis is only an approximation of
    /// an instruction eigenbasis.
    pub instruction_purity: f64,
}

/// Exhaustive average over all 2^N coin masks.
///
/// The instruction qubit is never reset; the trace distance between the
/// final joint Ω(N) and (refresh-mode σ(N)) ⊗ ρ_in is bounded by
/// 2N sin²(δ). Rejects step counts above [`MASK_ENUM_LIMIT`].
pub fn dme2_enumerate(cfg: &DmeConfig) -> Result<Dme2Run> {
    cfg.validate()?;
    if cfg.steps > MASK_ENUM_LIMIT {
        return Err(Error::MaskLimit { steps: cfg.steps });
    }
    let masks: Vec<QmeMask> =
        (0..1u64 << cfg.steps).map(|i| QmeMask::new(i, cfg.steps)).collect::<Result<_>>()?;
    dme2_with_masks(cfg, &masks)
}

/// Average over `randomizations` coin masks drawn i.i.d. with fair coins.
///
/// The mask for randomization k is generated from an RNG stream derived
/// from (seed, k), so any prefix of the mask list — and hence the whole
/// run — is reproducible independent of thread count.
pub fn dme2_sample(cfg: &DmeConfig) -> Result<Dme2Run> {
    cfg.validate()?;
    let DmeMode::QmeSample { randomizations, seed } = cfg.mode else {
        return Err(Error::InvalidArgument(
            "config mode must be QmeSample to draw sampled masks".into(),
        ));
    };
    let masks: Vec<QmeMask> =
        (0..randomizations as u64).map(|k| random_mask(seed, k, cfg.steps)).collect::<Result<_>>()?;
    dme2_with_masks(cfg, &masks)
}

fn random_mask(seed: u64, k: u64, steps: usize) -> Result<QmeMask> {
    use rand::Rng;
    let mut rng = seeding::stream_rng(seed, k);
    let mut index = 0u64;
    for step in 0..steps {
        if rng.gen_bool(0.5) {
            index |= 1 << step;
        }
    }
    QmeMask::new(index, steps)
}

/// Equal-weight average of the coin-history trajectories in `masks`.
///
/// This is the engine behind [`dme2_enumerate`] and [`dme2_sample`];
/// calling it with every distinct mask of length N reproduces the
/// enumerated run exactly. Masks are processed in fixed-size chunks whose
/// partial sums are reduced in chunk order, making the result independent
/// of the rayon thread count.
pub fn dme2_with_masks(cfg: &DmeConfig, masks: &[QmeMask]) -> Result<Dme2Run> {
    cfg.validate()?;
    if masks.is_empty() {
        return Err(Error::InvalidArgument("mask list must not be empty".into()));
    }
    if let Some(bad) = masks.iter().find(|m| m.steps() != cfg.steps) {
        return Err(Error::InvalidArgument(format!(
            "mask {bad:?} has {} steps, config has {}",
            bad.steps(),
            cfg.steps
        )));
    }
    let axis = cfg.resolve_axis()?;
    let u = gates::swap_pow(cfg.delta());
    let flip = CMatrix::identity(2).kron(&gates::rotation(axis, PI)?);
    let omega0 = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix());
    let n = cfg.steps;

    const CHUNK: usize = 1024;
    let partials: Vec<(Vec<CMatrix>, Vec<CMatrix>)> = masks
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc: Vec<CMatrix> = (0..=n).map(|_| CMatrix::zeros(4, 4)).collect();
            let mut finals = Vec::with_capacity(chunk.len());
            for mask in chunk {
                let mut omega = omega0.clone();
                accumulate(&mut acc[0], &omega);
                for step in 0..n {
                    omega = u.conjugate(&omega);
                    if mask.bit(step) {
                        omega = flip.conjugate(&omega);
                    }
                    accumulate(&mut acc[step + 1], &omega);
                }
                finals.push(omega);
            }
            (acc, finals)
        })
        .collect();

    let mut acc: Vec<CMatrix> = (0..=n).map(|_| CMatrix::zeros(4, 4)).collect();
    let mut finals = Vec::with_capacity(masks.len());
    for (part, chunk_finals) in partials {
        for (total, p) in acc.iter_mut().zip(&part) {
            accumulate(total, p);
        }
        finals.extend(chunk_finals);
    }

    let weight = 1.0 / masks.len() as f64;
    let mut joint = Vec::with_capacity(n + 1);
    let mut data = Vec::with_capacity(n + 1);
    let mut instruction = Vec::with_capacity(n + 1);
    for a in &acc {
        let avg = a.scale_re(weight);
        data.push(DensityMatrix::new(partial_trace(&avg, Keep::First)?)?);
        instruction.push(DensityMatrix::new(partial_trace(&avg, Keep::Second)?)?);
        joint.push(DensityMatrix::new(avg)?);
    }
    let per_mask_final = masks
        .iter()
        .zip(finals)
        .map(|(mask, m)| Ok(MaskOutcome { mask: *mask, joint: DensityMatrix::new(m)? }))
        .collect::<Result<Vec<_>>>()?;

    Ok(Dme2Run {
        joint,
        data,
        instruction,
        per_mask_final,
        instruction_purity: cfg.rho_in.purity(),
    })
}

fn accumulate(acc: &mut CMatrix, m: &CMatrix) {
    for (i, v) in m.data().iter().enumerate() {
        let r = i / 4;
        let c = i % 4;
        acc[(r, c)] += *v;
    }
}

/// Closed-form error budget of an N-step run with total angle θ.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ErrorBounds {
    /// Damping probability 1 − cos^{2N}(θ/N) accumulated by refresh mode.
    pub p_discretization: f64,
    /// Trace-distance bound 2N sin²(θ/N) on the extra error of coin-flip
    /// reinitialization relative to refresh mode.
    pub qme_bound: f64,
    /// Large-N asymptote θ²/N of the damping probability exponent.
    pub p_asymptote: f64,
    /// Large-N asymptote 2θ²/N of the coin-flip bound.
    pub qme_asymptote: f64,
}

/// Both error scales of the protocol. `steps` must be at least 1.
pub fn error_bounds(theta: f64, steps: usize) -> ErrorBounds {
    assert!(steps >= 1, "step count must be at least 1");
    let n = steps as f64;
    let delta = theta / n;
    ErrorBounds {
        p_discretization: 1.0 - delta.cos().powi(2 * steps as i32),
        qme_bound: 2.0 * n * delta.sin().powi(2),
        p_asymptote: theta * theta / n,
        qme_asymptote: 2.0 * theta * theta / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{pauli_x, pauli_y, pauli_z};
    use crate::qstate::{pure_state, state_fidelity, trace_distance, Cardinal};
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_pure(rng: &mut impl Rng) -> DensityMatrix {
        let raw = [
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        ];
        let norm = (raw[0].norm_sqr() + raw[1].norm_sqr()).sqrt();
        DensityMatrix::from_ket(&[raw[0] / norm, raw[1] / norm]).unwrap()
    }

    fn random_mixed(rng: &mut impl Rng) -> DensityMatrix {
        let a = CMatrix::from_fn(2, 2, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = a.matmul(&a.adjoint());
        let t = p.trace().re;
        DensityMatrix::new(p.scale_re(1.0 / t)).unwrap()
    }

    fn axis_sigma(axis: [f64; 3]) -> CMatrix {
        pauli_x()
            .scale_re(axis[0])
            .add(&pauli_y().scale_re(axis[1]))
            .add(&pauli_z().scale_re(axis[2]))
    }

    #[test]
    fn refresh_matches_closed_form_channel() {
        for cardinal in Cardinal::ALL {
            let rho_in = crate::qstate::cardinal_state(cardinal);
            for theta in [std::f64::consts::FRAC_PI_2, PI] {
                for steps in [1usize, 2, 4, 8] {
                    let sigma_in = pure_state("+i").unwrap();
                    let cfg = DmeConfig::refresh(rho_in.clone(), sigma_in.clone(), steps, theta);
                    let traj = dme_refresh(&cfg).unwrap();
                    let chan = closed_form_channel(&rho_in, steps, theta).unwrap();
                    let expect = crate::channels::apply(&chan, &sigma_in).unwrap();
                    let diff = traj[steps].matrix().max_abs_diff(expect.matrix());
                    assert!(diff < 1e-10, "{cardinal:?} theta={theta} N={steps}: diff {diff}");
                }
            }
        }
    }

    #[test]
    fn refresh_damping_landmarks() {
        // theta = pi, N = 8 on y-polarized data: the damping pole is |0⟩ so
        // the Bloch z component equals p_N, and the equatorial magnitude
        // shrinks to cos^N(delta).
        let cfg = DmeConfig::refresh(pure_state("0").unwrap(), pure_state("+i").unwrap(), 8, PI);
        let traj = dme_refresh(&cfg).unwrap();
        let b = bloch(&traj[8]).unwrap();
        assert!((b.z - 0.7182619303).abs() < 1e-9);
        let xy = (b.x * b.x + b.y * b.y).sqrt();
        assert!((xy - 0.5307900429).abs() < 1e-9);
        assert!((xy - (PI / 8.0).cos().powi(8)).abs() < 1e-12);

        let cfg = DmeConfig::refresh(
            pure_state("0").unwrap(),
            pure_state("+i").unwrap(),
            4,
            std::f64::consts::FRAC_PI_2,
        );
        let traj = dme_refresh(&cfg).unwrap();
        assert!((bloch(&traj[4]).unwrap().z - 0.4692099571).abs() < 1e-9);
    }

    #[test]
    fn damping_probability_approaches_exponential() {
        let b = error_bounds(PI, 64);
        let asym = 1.0 - (-b.p_asymptote).exp();
        assert!((b.p_discretization - asym).abs() < 0.002);
    }

    #[test]
    fn error_bound_values() {
        let b = error_bounds(PI, 8);
        assert!((b.p_discretization - 0.7182619303).abs() < 1e-6);
        assert!((b.qme_bound - 2.3431457505).abs() < 1e-6);
        assert!((b.p_asymptote - PI * PI / 8.0).abs() < 1e-12);
        assert!((b.qme_asymptote - PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_step_joint_identity() {
        // With rho_in = |0⟩⟨0| the one-step mask average has an exact
        // closed form: the damped-and-rotated data state tensored with
        // |0⟩⟨0|, minus a sin²δ·⟨1|σ|1⟩ correction along |0⟩⟨0| ⊗ Z.
        let mut rng = stream_rng(0x51e9, 7);
        let rho_in = pure_state("0").unwrap();
        let mut inputs: Vec<DensityMatrix> =
            Cardinal::ALL.iter().map(|&k| crate::qstate::cardinal_state(k)).collect();
        inputs.push(random_mixed(&mut rng));
        inputs.push(random_mixed(&mut rng));
        for delta in [0.3, std::f64::consts::FRAC_PI_2, 1.1] {
            for sigma_in in &inputs {
                let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), 1, delta);
                let run = dme2_enumerate(&cfg).unwrap();
                let chan = closed_form_channel(&rho_in, 1, delta).unwrap();
                let damped = crate::channels::apply(&chan, sigma_in).unwrap();
                let excited = sigma_in.matrix()[(1, 1)].re;
                let corr = rho_in.matrix().kron(&pauli_z()).scale_re(delta.sin().powi(2) * excited);
                let expect = damped.matrix().kron(rho_in.matrix()).sub(&corr);
                let diff = run.joint[1].matrix().max_abs_diff(&expect);
                assert!(diff < 1e-12, "delta={delta}: diff {diff}");
            }
        }
    }

    #[test]
    fn coin_average_equals_eigenbasis_dephasing() {
        // Independent route: averaging the two coin branches equals
        // dephasing the instruction qubit in the nu eigenbasis after each
        // swap. Checked on every step of random configurations.
        let mut rng = stream_rng(0x51e9, 8);
        for _ in 0..10 {
            let rho_in = random_pure(&mut rng);
            let sigma_in = random_mixed(&mut rng);
            let steps = rng.gen_range(1..=6);
            let theta = rng.gen_range(0.2..2.8);
            let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), steps, theta);
            let axis = match cfg.resolve_axis() {
                Ok(a) => a,
                // A random pure state is polarized; Auto cannot fail here.
                Err(e) => panic!("axis resolution failed: {e}"),
            };
            let run = dme2_enumerate(&cfg).unwrap();

            let sn = axis_sigma(axis);
            let proj_up = CMatrix::identity(2).add(&sn).scale_re(0.5);
            let proj_dn = CMatrix::identity(2).sub(&sn).scale_re(0.5);
            let k_up = CMatrix::identity(2).kron(&proj_up);
            let k_dn = CMatrix::identity(2).kron(&proj_dn);
            let u = gates::swap_pow(cfg.delta());
            let mut omega = sigma_in.matrix().kron(rho_in.matrix());
            for n in 0..steps {
                omega = u.conjugate(&omega);
                omega = k_up.conjugate(&omega).add(&k_dn.conjugate(&omega));
                let diff = run.joint[n + 1].matrix().max_abs_diff(&omega);
                assert!(diff < 1e-12, "step {n}: diff {diff}");
            }
        }
    }

    #[test]
    fn coin_flip_equals_projector_dephasing_pointwise() {
        // ½(ρ' + σ_ν ρ' σ_ν) = P∥ ρ' P∥ + P⊥ ρ' P⊥ for any state and axis.
        let mut rng = stream_rng(0x51e9, 9);
        for _ in 0..100 {
            let rho = random_mixed(&mut rng);
            let raw: [f64; 3] =
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
            if n < 1e-3 {
                continue;
            }
            let axis = [raw[0] / n, raw[1] / n, raw[2] / n];
            let sn = axis_sigma(axis);
            let flipped = sn.conjugate(rho.matrix());
            let lhs = rho.matrix().add(&flipped).scale_re(0.5);
            let proj_up = CMatrix::identity(2).add(&sn).scale_re(0.5);
            let proj_dn = CMatrix::identity(2).sub(&sn).scale_re(0.5);
            let rhs = proj_up.conjugate(rho.matrix()).add(&proj_dn.conjugate(rho.matrix()));
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn protocol_commutes_with_frame_rotation() {
        // Conjugating rho_in, sigma_in, and the coin axis by the same
        // single-qubit unitary conjugates every output by V ⊗ V.
        let mut rng = stream_rng(0x51e9, 10);
        for _ in 0..5 {
            let h = CMatrix::from_fn(2, 2, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .symmetrize();
            let v = crate::linalg::expm_herm(&h, 1.0).unwrap();
            let rho_in = random_pure(&mut rng);
            let sigma_in = random_mixed(&mut rng);
            let steps = 4;
            let theta = 1.3;

            let base = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), steps, theta);
            let run = dme2_enumerate(&base).unwrap();

            let rot = DmeConfig::enumerated(
                rho_in.evolve(&v).unwrap(),
                sigma_in.evolve(&v).unwrap(),
                steps,
                theta,
            );
            let run_rot = dme2_enumerate(&rot).unwrap();

            let vv = v.kron(&v);
            for n in 0..=steps {
                let expect = vv.conjugate(run.joint[n].matrix());
                let diff = run_rot.joint[n].matrix().max_abs_diff(&expect);
                assert!(diff < 1e-10, "step {n}: diff {diff}");
            }
        }
    }

    #[test]
    fn fig_2c_trajectory() {
        // x-polarized instruction, 4 steps of pi/8: a pi/2 rotation of the
        // y-polarized data state about x, with coin-flip damping.
        let cfg = DmeConfig::enumerated(
            pure_state("+").unwrap(),
            pure_state("+i").unwrap(),
            4,
            std::f64::consts::FRAC_PI_2,
        );
        let run = dme2_enumerate(&cfg).unwrap();
        let b = bloch(&run.data[4]).unwrap();
        assert!((b.x - 0.375).abs() < 1e-9);
        assert!(b.y.abs() < 1e-9);
        assert!((b.z - 0.7285533906).abs() < 1e-9);
        let ideal = pure_state("0").unwrap();
        let fs = state_fidelity(&run.data[4], &ideal).unwrap();
        assert!((fs - 0.8642766953).abs() < 1e-6, "F_s = {fs}");

        // The coin average depolarizes the instruction along its own axis
        // without tilting it.
        let expected_pol = [1.0, 0.8535533906, 0.75, 0.6767766953, 0.625];
        for (n, want) in expected_pol.iter().enumerate() {
            let rb = bloch(&run.instruction[n]).unwrap();
            assert!((rb.x - want).abs() < 1e-9, "step {n}: x = {}", rb.x);
            assert!(rb.y.abs() < 1e-9 && rb.z.abs() < 1e-9);
        }
    }

    #[test]
    fn fig_2d_trajectory() {
        // z-polarized instruction, 8 steps of pi/8: a pi rotation about z
        // sends |+i⟩ toward |−i⟩.
        let cfg = DmeConfig::enumerated(pure_state("0").unwrap(), pure_state("+i").unwrap(), 8, PI);
        let run = dme2_enumerate(&cfg).unwrap();
        let ideal = pure_state("-i").unwrap();
        let fs = state_fidelity(&run.data[8], &ideal).unwrap();
        assert!((fs - 0.7653950215).abs() < 1e-6, "F_s = {fs}");
        let b = bloch(&run.data[8]).unwrap();
        assert!((b.y + 0.5307900429).abs() < 1e-9);
        assert!((b.z - 0.46875).abs() < 1e-9);
        let rb = bloch(&run.instruction[8]).unwrap();
        assert!((rb.z - 0.53125).abs() < 1e-9);
    }

    #[test]
    fn joint_stays_within_qme_bound() {
        let sigma_in = pure_state("+i").unwrap();
        for cardinal in [Cardinal::Zero, Cardinal::Plus, Cardinal::MinusI] {
            let rho_in = crate::qstate::cardinal_state(cardinal);
            for steps in 1..=6 {
                let theta = std::f64::consts::FRAC_PI_2;
                let run = dme2_enumerate(&DmeConfig::enumerated(
                    rho_in.clone(),
                    sigma_in.clone(),
                    steps,
                    theta,
                ))
                .unwrap();
                let refresh =
                    dme_refresh(&DmeConfig::refresh(rho_in.clone(), sigma_in.clone(), steps, theta))
                        .unwrap();
                let product = DensityMatrix::new(refresh[steps].matrix().kron(rho_in.matrix())).unwrap();
                let td = trace_distance(&run.joint[steps], &product).unwrap();
                let bound = error_bounds(theta, steps).qme_bound;
                assert!(td <= bound + 1e-12, "{cardinal:?} N={steps}: {td} > {bound}");
            }
        }
    }

    #[test]
    fn exhaustive_sample_matches_enumeration() {
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("+i").unwrap(), 6, 1.9);
        let run = dme2_enumerate(&cfg).unwrap();
        // Same masks in a scrambled order must average to the same
        // trajectory: the reduction is order-independent up to rounding.
        let mut masks: Vec<QmeMask> = (0..64).map(|i| QmeMask::new(i, 6).unwrap()).collect();
        masks.reverse();
        masks.swap(3, 40);
        let shuffled = dme2_with_masks(&cfg, &masks).unwrap();
        for n in 0..=6 {
            let diff = run.joint[n].matrix().max_abs_diff(shuffled.joint[n].matrix());
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = DmeConfig::sampled(
            pure_state("+").unwrap(),
            pure_state("+i").unwrap(),
            8,
            PI,
            40,
            0xfeed,
        );
        let a = dme2_sample(&cfg).unwrap();
        let b = dme2_sample(&cfg).unwrap();
        for n in 0..=8 {
            assert_eq!(a.joint[n].matrix().max_abs_diff(b.joint[n].matrix()), 0.0);
        }
        assert_eq!(a.per_mask_final.len(), 40);
        assert!(a.per_mask_final.iter().zip(&b.per_mask_final).all(|(x, y)| x.mask == y.mask));

        let other = DmeConfig::sampled(
            pure_state("+").unwrap(),
            pure_state("+i").unwrap(),
            8,
            PI,
            40,
            0xfeed + 1,
        );
        let c = dme2_sample(&other).unwrap();
        assert!(a.per_mask_final.iter().zip(&c.per_mask_final).any(|(x, y)| x.mask != y.mask));
    }

    #[test]
    fn sample_masks_extend_under_larger_count() {
        // Mask k depends only on (seed, k), so growing the randomization
        // count preserves the existing prefix.
        let short = DmeConfig::sampled(pure_state("+").unwrap(), pure_state("0").unwrap(), 5, 1.0, 10, 3);
        let long = DmeConfig::sampled(pure_state("+").unwrap(), pure_state("0").unwrap(), 5, 1.0, 25, 3);
        let a = dme2_sample(&short).unwrap();
        let b = dme2_sample(&long).unwrap();
        for k in 0..10 {
            assert_eq!(a.per_mask_final[k].mask, b.per_mask_final[k].mask);
        }
    }

    #[test]
    fn enumeration_cap() {
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("0").unwrap(), 21, 1.0);
        match dme2_enumerate(&cfg) {
            Err(Error::MaskLimit { steps }) => assert_eq!(steps, 21),
            other => panic!("expected MaskLimit, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let rho = pure_state("0").unwrap();
        let sig = pure_state("+").unwrap();
        assert!(DmeConfig::refresh(rho.clone(), sig.clone(), 0, 1.0).validate().is_err());
        assert!(DmeConfig::refresh(rho.clone(), sig.clone(), 1, 0.0).validate().is_err());
        assert!(DmeConfig::refresh(rho.clone(), sig.clone(), 1, -1.0).validate().is_err());
        assert!(DmeConfig::refresh(rho.clone(), sig.clone(), 1, 7.0).validate().is_err());
        assert!(DmeConfig::refresh(rho.clone(), sig.clone(), 4, 7.0).validate().is_ok());
        let mut bad_axis = DmeConfig::refresh(rho.clone(), sig.clone(), 2, 1.0);
        bad_axis.qme_axis = QmeAxis::Fixed([0.0, 0.0, 0.5]);
        assert!(bad_axis.validate().is_err());
    }

    #[test]
    fn auto_axis_requires_polarization() {
        let cfg =
            DmeConfig::enumerated(DensityMatrix::maximally_mixed(2), pure_state("0").unwrap(), 2, 1.0);
        assert!(matches!(dme2_enumerate(&cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn closed_form_rejects_mixed_instruction() {
        let mut rng = stream_rng(0x51e9, 11);
        let mixed = loop {
            let m = random_mixed(&mut rng);
            if m.purity() < 0.99 {
                break m;
            }
        };
        assert!(closed_form_channel(&mixed, 4, 1.0).is_err());
    }

    #[test]
    fn mixed_polarized_instruction_runs_with_flagged_purity() {
        // 0.9|0⟩⟨0| + 0.1|1⟩⟨1| is mixed but z-polarized; the coin run
        // proceeds and reports the purity so callers can flag it.
        let m = CMatrix::from_real_rows(&[vec![0.9, 0.0], vec![0.0, 0.1]]);
        let rho_in = DensityMatrix::new(m).unwrap();
        let cfg = DmeConfig::enumerated(rho_in, pure_state("+i").unwrap(), 3, 1.0);
        let run = dme2_enumerate(&cfg).unwrap();
        assert!((run.instruction_purity - 0.82).abs() < 1e-12);
        assert_eq!(run.joint.len(), 4);
    }

    #[test]
    fn qme_gate_branches() {
        let idle = qme_gate([0.0, 0.0, 1.0], false).unwrap();
        assert_eq!(gates::unitary_of(&idle).max_abs_diff(&CMatrix::identity(2)), 0.0);
        assert_eq!(idle.qubits, vec![INSTRUCTION_QUBIT]);
        assert_eq!(idle.dur_ns, gates::T_1QB_NS);

        let flip = qme_gate([1.0, 0.0, 0.0], true).unwrap();
        let expect = gates::rotation([1.0, 0.0, 0.0], PI).unwrap();
        assert!(gates::unitary_of(&flip).max_abs_diff(&expect) < 1e-15);

        assert!(qme_gate([0.0, 0.0, 2.0], true).is_err());
    }

    #[test]
    fn mask_round_trips() {
        let m = QmeMask::new(0b0110, 4).unwrap();
        assert_eq!(m.to_bit_string(), "0110");
        assert!(!m.bit(0) && m.bit(1) && m.bit(2) && !m.bit(3));
        assert_eq!(m.flips(), 2);
        assert_eq!(QmeMask::from_bit_string("0110").unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "\"0110\"");
        assert_eq!(serde_json::from_str::<QmeMask>(&json).unwrap(), m);
        assert!(QmeMask::new(16, 4).is_err());
        assert!(QmeMask::from_bit_string("012").is_err());
    }

    #[test]
    fn instruction_unitary_is_phase_rotation() {
        // For rho = |+⟩⟨+| the generated unitary is R_x(theta) up to a
        // global phase.
        let rho = pure_state("+").unwrap();
        let u = instruction_unitary(&rho, 1.3).unwrap();
        let d = gates::phase_insensitive_distance(&u, &gates::rx(1.3));
        assert!(d < 1e-12);
    }
}
