//! Decoherence instrumentation for compiled circuits.
//!
//! Every moment of a circuit exposes both qubits to amplitude damping and
//! pure dephasing for the moment's wall-clock duration: 30 ns for a
//! single-qubit layer, 60 ns + 5 ns recovery gap for a CZ-family moment
//! (the gap is folded into the CZ exposure so that repeated-CZ decay
//! constants convert to times the same way the effective-coherence
//! arithmetic does). `VirtualZ`-only moments take no time and add no
//! noise.
//!
//! The data qubit (index 0) is parked at a lower-coherence operating
//! point while a CZ is played, so during CZ-family moments its rates come
//! from the effective pair (T̃1, T̃2R) when configured; the instruction
//! qubit always idles at its base rates. Dephasing rates derive from the
//! Ramsey time via Γφ = 1/T2R − 1/(2·T1), which must come out
//! non-negative for every configured pair. Infinite times are allowed and
//! give a noiseless channel.

use serde::{Deserialize, Serialize};

use crate::channels::{self, KrausChannel};
use crate::compile::{embed, Circuit, Moment};
use crate::gates::GateKind;
use crate::qstate::DensityMatrix;
use crate::{Error, Result};

/// Coherence times of one qubit, in microseconds. The effective pair
/// overrides the base pair during CZ-family moments when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitNoise {
    pub t1_us: f64,
    pub t2r_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_eff_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2r_eff_us: Option<f64>,
}

impl QubitNoise {
    pub fn new(t1_us: f64, t2r_us: f64) -> Self {
        QubitNoise { t1_us, t2r_us, t1_eff_us: None, t2r_eff_us: None }
    }

    pub fn with_effective(mut self, t1_eff_us: f64, t2r_eff_us: f64) -> Self {
        self.t1_eff_us = Some(t1_eff_us);
        self.t2r_eff_us = Some(t2r_eff_us);
        self
    }

    /// (Γ1, Γφ) in 1/ns while idling.
    pub fn idle_rates(&self) -> (f64, f64) {
        rates(self.t1_us, self.t2r_us)
    }

    /// (Γ1, Γφ) in 1/ns while a CZ is played.
    pub fn cz_rates(&self) -> (f64, f64) {
        rates(
            self.t1_eff_us.unwrap_or(self.t1_us),
            self.t2r_eff_us.unwrap_or(self.t2r_us),
        )
    }

    fn validate(&self, label: &str) -> Result<()> {
        for (t1, t2r, tag) in [
            (self.t1_us, self.t2r_us, ""),
            (
                self.t1_eff_us.unwrap_or(self.t1_us),
                self.t2r_eff_us.unwrap_or(self.t2r_us),
                " effective",
            ),
        ] {
            if t1 <= 0.0 || t2r <= 0.0 || t1.is_nan() || t2r.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "{label}{tag}: coherence times must be positive, got T1 = {t1}, T2R = {t2r}"
                )));
            }
            let gamma_phi = 1.0 / (t2r * 1e3) - 1.0 / (2.0 * t1 * 1e3);
            if gamma_phi < -1e-15 {
                return Err(Error::InvalidArgument(format!(
                    "{label}{tag}: T2R = {t2r} us exceeds 2*T1 = {} us (negative dephasing rate)",
                    2.0 * t1
                )));
            }
        }
        Ok(())
    }
}

fn rates(t1_us: f64, t2r_us: f64) -> (f64, f64) {
    let gamma1 = 1.0 / (t1_us * 1e3);
    let gamma_phi = 1.0 / (t2r_us * 1e3) - gamma1 / 2.0;
    // Guard rounding when T2R = 2*T1 exactly.
    (gamma1, gamma_phi.max(0.0))
}

/// Coherence and timing parameters of the two-qubit device; `q1` is the
/// data qubit (circuit index 0), `q2` the instruction qubit (index 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub q1: QubitNoise,
    pub q2: QubitNoise,
    #[serde(default = "default_t_1qb")]
    pub t_1qb_ns: f64,
    #[serde(default = "default_t_cz")]
    pub t_cz_ns: f64,
    #[serde(default = "default_cz_gap")]
    pub cz_gap_ns: f64,
}

fn default_t_1qb() -> f64 {
    crate::gates::T_1QB_NS
}
fn default_t_cz() -> f64 {
    crate::gates::T_CZ_NS
}
fn default_cz_gap() -> f64 {
    crate::gates::CZ_GAP_NS
}

impl NoiseParams {
    /// Measured device values: T1 = 23/39 µs, T2R = 13/25 µs, with the
    /// data qubit at T̃1 ≈ 17 µs, T̃2R ≈ 5 µs while a CZ is played.
    pub fn device() -> Self {
        NoiseParams {
            q1: QubitNoise::new(23.0, 13.0).with_effective(17.0, 5.0),
            q2: QubitNoise::new(39.0, 25.0),
            t_1qb_ns: default_t_1qb(),
            t_cz_ns: default_t_cz(),
            cz_gap_ns: default_cz_gap(),
        }
    }

    /// Round-number simulation values: T1 = 20 µs, T2R = 10 µs on both
    /// qubits, data qubit at T̃1 = 10 µs, T̃2R = 5 µs during CZ.
    pub fn sim() -> Self {
        NoiseParams {
            q1: QubitNoise::new(20.0, 10.0).with_effective(10.0, 5.0),
            q2: QubitNoise::new(20.0, 10.0),
            t_1qb_ns: default_t_1qb(),
            t_cz_ns: default_t_cz(),
            cz_gap_ns: default_cz_gap(),
        }
    }

    /// Infinite coherence times; noisy simulation degenerates to exact.
    pub fn noiseless() -> Self {
        NoiseParams {
            q1: QubitNoise::new(f64::INFINITY, f64::INFINITY),
            q2: QubitNoise::new(f64::INFINITY, f64::INFINITY),
            t_1qb_ns: default_t_1qb(),
            t_cz_ns: default_t_cz(),
            cz_gap_ns: default_cz_gap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.q1.validate("q1")?;
        self.q2.validate("q2")?;
        for (t, name) in [
            (self.t_1qb_ns, "t_1qb_ns"),
            (self.t_cz_ns, "t_cz_ns"),
            (self.cz_gap_ns, "cz_gap_ns"),
        ] {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {t}"
                )));
            }
        }
        Ok(())
    }

    fn qubit(&self, index: usize) -> &QubitNoise {
        if index == 0 {
            &self.q1
        } else {
            &self.q2
        }
    }
}

/// Moment classification for noise purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MomentClass {
    /// Only frame updates; instantaneous.
    Virtual,
    /// Single-qubit gate slot.
    SingleQubit,
    /// CZ-family two-qubit gate.
    CzFamily,
}

fn classify(m: &Moment) -> Result<MomentClass> {
    let mut class = MomentClass::Virtual;
    for op in &m.ops {
        match op.kind {
            GateKind::VirtualZ { .. } => {}
            GateKind::PhasedX { .. } | GateKind::H | GateKind::QmeMark { .. } => {
                if class == MomentClass::Virtual {
                    class = MomentClass::SingleQubit;
                }
            }
            GateKind::Cz | GateKind::CzGeneral { .. } => class = MomentClass::CzFamily,
            GateKind::Cnot | GateKind::SwapPow { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "gate kind {:?} is not native; lower it before noisy simulation",
                    op.kind
                )));
            }
        }
    }
    Ok(class)
}

/// Wall-clock exposure of one moment under `np`: 0 for frame updates,
/// the single-qubit time for gate layers, and the CZ time plus recovery
/// gap for CZ-family moments.
pub fn moment_duration_ns(m: &Moment, np: &NoiseParams) -> Result<f64> {
    Ok(match classify(m)? {
        MomentClass::Virtual => 0.0,
        MomentClass::SingleQubit => np.t_1qb_ns,
        MomentClass::CzFamily => np.t_cz_ns + np.cz_gap_ns,
    })
}

/// One executable slice: the moment's gates followed by per-qubit
/// decoherence for its duration.
#[derive(Clone, Debug)]
pub struct NoisyMoment {
    pub moment: Moment,
    pub duration_ns: f64,
    /// (qubit, channel) pairs applied after the gates.
    pub channels: Vec<(usize, KrausChannel)>,
}

/// A circuit lowered to an alternating gate/decoherence sequence.
#[derive(Clone, Debug)]
pub struct InstrumentedCircuit {
    pub qubit_count: usize,
    pub steps: Vec<NoisyMoment>,
}

impl InstrumentedCircuit {
    pub fn simulate(&self, input: &DensityMatrix) -> Result<DensityMatrix> {
        let dim = 1usize << self.qubit_count;
        if input.dim() != dim {
            return Err(Error::Dimension {
                expected: format!("{dim}x{dim}"),
                got: format!("{0}x{0}", input.dim()),
            });
        }
        let mut state = input.matrix().clone();
        for step in &self.steps {
            for op in &step.moment.ops {
                let lifted = embed(&crate::gates::unitary_of(op), &op.qubits, self.qubit_count)?;
                state = lifted.conjugate(&state);
            }
            for (qubit, channel) in &step.channels {
                state = if self.qubit_count == 1 {
                    channels::apply_mat(channel, &state)?
                } else {
                    channels::apply_to_qubit(channel, &state, *qubit)?
                };
            }
        }
        DensityMatrix::new(state)
    }
}

/// Attach per-qubit decoherence channels to every timed moment. During
/// CZ-family moments the data qubit uses its effective rates; all other
/// exposure uses idle rates.
pub fn instrument(c: &Circuit, np: &NoiseParams) -> Result<InstrumentedCircuit> {
    np.validate()?;
    c.validate()?;
    if c.qubit_count > 2 {
        return Err(Error::InvalidArgument(format!(
            "noise model covers at most 2 qubits, circuit has {}",
            c.qubit_count
        )));
    }
    let mut steps = Vec::with_capacity(c.moments.len());
    for m in &c.moments {
        let class = classify(m)?;
        let duration = moment_duration_ns(m, np)?;
        let mut chans = Vec::new();
        if duration > 0.0 {
            for qubit in 0..c.qubit_count {
                let (gamma1, gamma_phi) = if class == MomentClass::CzFamily {
                    np.qubit(qubit).cz_rates()
                } else {
                    np.qubit(qubit).idle_rates()
                };
                if gamma1 > 0.0 || gamma_phi > 0.0 {
                    chans.push((qubit, channels::decoherence_channel(gamma1, gamma_phi, duration)?));
                }
            }
        }
        steps.push(NoisyMoment { moment: m.clone(), duration_ns: duration, channels: chans });
    }
    Ok(InstrumentedCircuit { qubit_count: c.qubit_count, steps })
}

/// Instrument and run in one call.
pub fn simulate_noisy(c: &Circuit, input: &DensityMatrix, np: &NoiseParams) -> Result<DensityMatrix> {
    instrument(c, np)?.simulate(input)
}

/// Exact coin average of a noisy N-step run in a single simulation.
///
/// Uniform averaging over the 2^N coin masks commutes with every channel
/// in the pipeline, so replacing each coin slot of the mask-0 merged
/// circuit by the two-branch mixing channel reproduces the full average
/// without enumerating masks. In the merged circuit the coin sits inside
/// a fused single-qubit moment M = L0·coin·L3 (L0 absent at the last
/// step), so the mixing is applied after M in the conjugated frame:
/// rho -> (rho + X rho X†)/2 with X = L0·R·L0† and R the coin flip.
/// Returns the final joint state, data qubit first.
pub fn simulate_dme2_averaged(
    cfg: &crate::dme::DmeConfig,
    np: &NoiseParams,
) -> Result<DensityMatrix> {
    let mask0 = crate::dme::QmeMask::new(0, cfg.steps)?;
    let circuit = crate::compile::build_dme2_circuit(cfg, &mask0)?;
    let mut inst = instrument(&circuit, np)?;

    let axis = cfg.resolve_axis()?;
    let flip = crate::gates::rotation(axis, std::f64::consts::PI)?;
    let opening = crate::compile::dswap_layers(cfg.delta());
    let l0 = &opening[0][1];
    let interior = l0.matmul(&flip).matmul(&l0.adjoint());
    let last_tag = format!("step {} qme", cfg.steps);
    let half = 1.0 / std::f64::consts::SQRT_2;

    for step in &mut inst.steps {
        let Some(tag) = step.moment.tag.as_deref() else { continue };
        if !tag.ends_with(" qme") {
            continue;
        }
        let x = if tag == last_tag { &flip } else { &interior };
        let mix = KrausChannel::new(vec![
            crate::linalg::CMatrix::identity(2).scale_re(half),
            x.scale_re(half),
        ])?;
        // Coin mixing precedes the moment's decoherence, matching the
        // order in which the per-mask runs compose.
        step.channels.insert(0, (1, mix));
    }

    let joint = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix());
    inst.simulate(&DensityMatrix::new(joint)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{build_dme2_circuit, build_dme2_circuit_unmerged, decompose_dswap, Moment};
    use crate::dme::{instruction_unitary, DmeConfig, QmeMask};
    use crate::gates::{pauli_x, pauli_y, pauli_z, GateOp};
    use crate::linalg::{partial_trace, CMatrix, Keep};
    use crate::qstate::{pure_state, state_fidelity, DensityMatrix};
    use std::f64::consts::PI;

    fn ket_10() -> DensityMatrix {
        // Data qubit excited, instruction in the ground state.
        pure_state("1")
            .unwrap()
            .matrix()
            .kron(pure_state("0").unwrap().matrix())
            .try_into_dm()
    }

    trait IntoDm {
        fn try_into_dm(self) -> DensityMatrix;
    }
    impl IntoDm for CMatrix {
        fn try_into_dm(self) -> DensityMatrix {
            DensityMatrix::new(self).unwrap()
        }
    }

    fn cz_chain(n: usize) -> Circuit {
        let mut c = Circuit::new(2);
        for _ in 0..n {
            c.push(Moment::new(vec![GateOp::cz(0, 1)]).unwrap()).unwrap();
        }
        c
    }

    fn excited_population(dm: &DensityMatrix, qubit: usize) -> f64 {
        let keep = if qubit == 0 { Keep::First } else { Keep::Second };
        let red = partial_trace(dm.matrix(), keep).unwrap();
        red[(1, 1)].re
    }

    #[test]
    fn presets_validate_and_rates() {
        for np in [NoiseParams::device(), NoiseParams::sim(), NoiseParams::noiseless()] {
            np.validate().unwrap();
        }
        let sim = NoiseParams::sim();
        let (g1, gphi) = sim.q1.idle_rates();
        assert!((g1 - 1.0 / 20_000.0).abs() < 1e-15);
        assert!((gphi - (1.0 / 10_000.0 - 1.0 / 40_000.0)).abs() < 1e-15);
        let (g1e, _) = sim.q1.cz_rates();
        assert!((g1e - 1.0 / 10_000.0).abs() < 1e-15);
        // The instruction qubit has no effective pair: CZ rates = idle.
        assert_eq!(sim.q2.cz_rates(), sim.q2.idle_rates());

        let bad = NoiseParams {
            q1: QubitNoise::new(10.0, 25.0),
            ..NoiseParams::sim()
        };
        assert!(bad.validate().is_err());
        let zero = NoiseParams {
            q2: QubitNoise::new(0.0, 1.0),
            ..NoiseParams::sim()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(2);
        let input = ket_10();
        let out = simulate_noisy(&c, &input, &NoiseParams::sim()).unwrap();
        assert_eq!(out.matrix().max_abs_diff(input.matrix()), 0.0);
    }

    #[test]
    fn infinite_times_match_noiseless() {
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("+i").unwrap(), 3, 1.3);
        let mask = QmeMask::new(0b101, 3).unwrap();
        let circ = build_dme2_circuit(&cfg, &mask).unwrap();
        let input = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix()).try_into_dm();
        let noisy = simulate_noisy(&circ, &input, &NoiseParams::noiseless()).unwrap();
        let exact = circ.unitary().unwrap().conjugate(input.matrix());
        assert!(noisy.matrix().max_abs_diff(&exact) < 1e-12);
    }

    #[test]
    fn single_cz_survival() {
        // Bare-gate arithmetic quoted for the effective T1: 60 ns at
        // 10 us gives e^{-0.006} = 0.9940.
        assert!(((-60.0f64 / 10_000.0).exp() - 0.9940).abs() < 5e-5);
        // The simulated moment folds the 5 ns recovery gap into the
        // exposure, so survival over one CZ is e^{-65/10000}.
        let out = simulate_noisy(&cz_chain(1), &ket_10(), &NoiseParams::sim()).unwrap();
        let survival = excited_population(&out, 0);
        assert!(
            (survival - (-65.0f64 / 10_000.0).exp()).abs() < 1e-12,
            "survival {survival}"
        );
        // The instruction qubit idles at its base rates during the CZ;
        // in |0⟩ it keeps unit ground population.
        assert!((excited_population(&out, 1) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn idle_layers_relax_and_dephase() {
        let layers = 5usize;
        let mut c = Circuit::new(2);
        for _ in 0..layers {
            c.push(
                Moment::new(vec![GateOp::phased_x(0.0, 0.0, 0), GateOp::phased_x(0.0, 0.0, 1)])
                    .unwrap(),
            )
            .unwrap();
        }
        let np = NoiseParams::sim();
        let t = layers as f64 * np.t_1qb_ns;

        let out = simulate_noisy(&c, &ket_10(), &np).unwrap();
        let survival = excited_population(&out, 0);
        assert!((survival - (-t / 20_000.0).exp()).abs() < 1e-12);

        // |+⟩ coherence decays at the Ramsey rate 1/T2R.
        let plus = pure_state("+")
            .unwrap()
            .matrix()
            .kron(pure_state("0").unwrap().matrix())
            .try_into_dm();
        let out = simulate_noisy(&c, &plus, &np).unwrap();
        let red = partial_trace(out.matrix(), Keep::First).unwrap();
        let coherence = red[(0, 1)].norm();
        assert!((coherence - 0.5 * (-t / 10_000.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn repeated_cz_characteristic_gate_count() {
        // ln(survival) is linear in the CZ count with slope -1/n*, where
        // n* = T1_eff / (t_cz + gap) = 10000/65 gates.
        let np = NoiseParams::sim();
        let p20 = excited_population(&simulate_noisy(&cz_chain(20), &ket_10(), &np).unwrap(), 0);
        let p60 = excited_population(&simulate_noisy(&cz_chain(60), &ket_10(), &np).unwrap(), 0);
        let slope = (p60.ln() - p20.ln()) / 40.0;
        let n_star = -1.0 / slope;
        assert!((n_star - 10_000.0 / 65.0).abs() < 1e-6, "n* = {n_star}");
    }

    #[test]
    fn coin_average_commutes_with_noise() {
        // Mask-averaging noisy runs equals simulating once with the coin
        // branches replaced by an instruction dephasing channel, because
        // every channel in the pipeline is linear and coin choice only
        // changes one layer's unitaries.
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("+i").unwrap(), 2, 1.1);
        let np = NoiseParams::sim();
        let input = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix());

        let mut avg = CMatrix::zeros(4, 4);
        for idx in 0..4u64 {
            let mask = QmeMask::new(idx, 2).unwrap();
            let circ = build_dme2_circuit_unmerged(&cfg, &mask).unwrap();
            let out = simulate_noisy(&circ, &input.clone().try_into_dm(), &np).unwrap();
            avg = avg.add(out.matrix());
        }
        avg = avg.scale_re(0.25);

        // Reference: run the all-identity-coin circuit, but dephase the
        // instruction qubit along the coin axis at every coin slot.
        let axis = cfg.resolve_axis().unwrap();
        let sn = pauli_x()
            .scale_re(axis[0])
            .add(&pauli_y().scale_re(axis[1]))
            .add(&pauli_z().scale_re(axis[2]));
        let proj_up = CMatrix::identity(2).add(&sn).scale_re(0.5);
        let proj_dn = CMatrix::identity(2).sub(&sn).scale_re(0.5);
        let dephase = crate::channels::KrausChannel::new(vec![proj_up, proj_dn]).unwrap();

        let circ = build_dme2_circuit_unmerged(&cfg, &QmeMask::new(0, 2).unwrap()).unwrap();
        let instrumented = instrument(&circ, &np).unwrap();
        let mut state = input.clone();
        for step in &instrumented.steps {
            for op in &step.moment.ops {
                let lifted = embed(&crate::gates::unitary_of(op), &op.qubits, 2).unwrap();
                state = lifted.conjugate(&state);
            }
            let is_coin =
                step.moment.ops.iter().any(|op| matches!(op.kind, GateKind::QmeMark { .. }));
            if is_coin {
                state = channels::apply_to_qubit(&dephase, &state, 1).unwrap();
            }
            for (qubit, channel) in &step.channels {
                state = channels::apply_to_qubit(channel, &state, *qubit).unwrap();
            }
        }
        assert!(avg.max_abs_diff(&state) < 1e-10);
    }

    #[test]
    fn averaged_runner_matches_mask_average_of_merged_runs() {
        // The single-simulation coin average must reproduce the brute-force
        // mask average over merged circuits, under noise and without it.
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("+i").unwrap(), 3, 1.1);
        let input = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix()).try_into_dm();
        for np in [NoiseParams::sim(), NoiseParams::noiseless()] {
            let mut avg = CMatrix::zeros(4, 4);
            for idx in 0..8u64 {
                let mask = QmeMask::new(idx, 3).unwrap();
                let circ = build_dme2_circuit(&cfg, &mask).unwrap();
                let out = simulate_noisy(&circ, &input, &np).unwrap();
                avg = avg.add(out.matrix());
            }
            avg = avg.scale_re(1.0 / 8.0);

            let fast = simulate_dme2_averaged(&cfg, &np).unwrap();
            assert!(avg.max_abs_diff(fast.matrix()) < 1e-10);
        }
    }

    #[test]
    fn stronger_damping_never_helps() {
        let sigma_in = pure_state("+i").unwrap();
        let rho_in = pure_state("+").unwrap();
        for steps in [2usize, 4, 6] {
            let theta = PI;
            let cfg = DmeConfig::enumerated(rho_in.clone(), sigma_in.clone(), steps, theta);
            let ideal = instruction_unitary(&rho_in, theta).unwrap();
            let sigma_ideal = sigma_in.evolve(&ideal).unwrap();

            let mut fids = Vec::new();
            for scale in [1.0, 2.0, 4.0] {
                // Scale Γ1 of both qubits keeping Γφ fixed: T1' = T1/s,
                // 1/T2R' = Γφ + Γ1'/2.
                let adjust = |q: QubitNoise| {
                    let (g1, gphi) = q.idle_rates();
                    let g1s = g1 * scale;
                    QubitNoise::new(1.0 / (g1s * 1e3), 1.0 / ((gphi + g1s / 2.0) * 1e3))
                };
                let np = NoiseParams {
                    q1: adjust(NoiseParams::sim().q1),
                    q2: adjust(NoiseParams::sim().q2),
                    ..NoiseParams::sim()
                };
                let mut avg = CMatrix::zeros(4, 4);
                for idx in 0..1u64 << steps {
                    let mask = QmeMask::new(idx, steps).unwrap();
                    let circ = build_dme2_circuit(&cfg, &mask).unwrap();
                    let input = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix()).try_into_dm();
                    avg = avg.add(simulate_noisy(&circ, &input, &np).unwrap().matrix());
                }
                let joint = DensityMatrix::new(avg.scale_re(1.0 / (1 << steps) as f64)).unwrap();
                let data = joint.reduce(Keep::First).unwrap();
                fids.push(state_fidelity(&data, &sigma_ideal).unwrap());
            }
            assert!(fids[0] >= fids[1] - 1e-12 && fids[1] >= fids[2] - 1e-12, "{fids:?}");
        }
    }

    #[test]
    fn non_native_gates_rejected() {
        let mut c = Circuit::new(2);
        c.push(Moment::new(vec![GateOp::new(GateKind::SwapPow { delta: 0.3 }, vec![0, 1]).unwrap()])
            .unwrap())
            .unwrap();
        assert!(instrument(&c, &NoiseParams::sim()).is_err());
        // The compiled form of the same gate is accepted.
        let lowered = decompose_dswap(0.3).unwrap();
        assert!(instrument(&lowered, &NoiseParams::sim()).is_ok());
    }

    #[test]
    fn virtual_moments_are_free() {
        let mut c = Circuit::new(2);
        c.push(Moment::new(vec![GateOp::virtual_z(1.0, 0)]).unwrap()).unwrap();
        let np = NoiseParams::sim();
        assert_eq!(moment_duration_ns(&c.moments[0], &np).unwrap(), 0.0);
        let inst = instrument(&c, &np).unwrap();
        assert!(inst.steps[0].channels.is_empty());
    }

    #[test]
    fn params_json_round_trip() {
        let np = NoiseParams::device();
        let json = serde_json::to_string(&np).unwrap();
        let back: NoiseParams = serde_json::from_str(&json).unwrap();
        assert_eq!(np, back);

        // Files may omit gate times; defaults fill in.
        let minimal = r#"{"q1":{"t1_us":23.0,"t2r_us":13.0},"q2":{"t1_us":39.0,"t2r_us":25.0}}"#;
        let parsed: NoiseParams = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.t_1qb_ns, 30.0);
        assert_eq!(parsed.t_cz_ns, 60.0);
        assert_eq!(parsed.cz_gap_ns, 5.0);
        parsed.validate().unwrap();
    }

    #[test]
    fn output_is_valid_dm() {
        let cfg = DmeConfig::enumerated(pure_state("0").unwrap(), pure_state("+i").unwrap(), 4, PI);
        let mask = QmeMask::new(0b0110, 4).unwrap();
        let circ = build_dme2_circuit(&cfg, &mask).unwrap();
        let input = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix()).try_into_dm();
        let out = simulate_noisy(&circ, &input, &NoiseParams::device()).unwrap();
        // Construction through DensityMatrix::new enforces the DM
        // contract; spot-check trace anyway.
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
    }
}
