//! Circuit IR and the partial-swap compiler.
//!
//! Circuits are ordered lists of *moments*: sets of gate ops on disjoint
//! qubits that execute in parallel. Depth counts moments. A zero-duration
//! `VirtualZ` shares a moment with the `PhasedX` it dresses, so a merged
//! single-qubit layer is one moment regardless of how many frame updates
//! it carries.
//!
//! The compiler lowers e^{−i·SWAP·δ} to the native gate set — `PhasedX`,
//! `VirtualZ`, and `Cz` — as a fixed 7-moment template: four single-qubit
//! layers interleaved with three CZs. The template comes from writing
//! e^{−i·SWAP·δ} = e^{−iδ/2}·exp(−i(δ/2)(XX+YY+ZZ)) and pushing the
//! canonical three-CNOT circuit for the exponential through the
//! CNOT = (𝟙⊗H)·CZ·(𝟙⊗H) identity, absorbing the dressing Hadamards into
//! the neighboring layers:
//!
//! ```text
//! e^{−i·SWAP·δ} ≅ [H ⊗ 𝟙] CZ [H·Rz(δ) ⊗ Rx(δ)] CZ [S·H ⊗ Rx(−δ)·S] CZ [H·S† ⊗ 𝟙]
//! ```
//!
//! (matrix products, rightmost layer applied first; S = diag(1, i); the
//! dropped global phase is e^{−iδ/2}).
//!
//! An N-step protocol circuit chains N such blocks, inserting the
//! coin-flip gate of each step into the single-qubit layer that follows
//! its third CZ. Interior block boundaries fuse the closing layer, the
//! coin gate, and the next block's opening layer into one moment, giving
//! exactly 6N+1 moments: depth 25 at N = 4, 49 at N = 8, 73 at N = 12.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dme::{qme_gate, DmeConfig, QmeMask};
use crate::gates::{self, GateKind, GateOp};
use crate::linalg::{CMatrix, C64};
use crate::{Error, Result};

/// Parallel gate ops on disjoint qubits, optionally tagged with the
/// protocol step they implement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Moment {
    pub ops: Vec<GateOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl Moment {
    pub fn new(ops: Vec<GateOp>) -> Result<Self> {
        let m = Moment { ops, tag: None };
        m.validate()?;
        Ok(m)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    /// At most one physical gate per qubit; zero-duration `VirtualZ`
    /// frame updates may share a qubit with the gate they dress. Ops are
    /// applied in list order, which only matters for such shared qubits.
    pub fn validate(&self) -> Result<()> {
        let mut physical: Vec<usize> = Vec::new();
        for op in &self.ops {
            if matches!(op.kind, GateKind::VirtualZ { .. }) {
                continue;
            }
            for &q in &op.qubits {
                if physical.contains(&q) {
                    return Err(Error::InvalidArgument(format!(
                        "qubit {q} carries two physical gates in one moment"
                    )));
                }
                physical.push(q);
            }
        }
        Ok(())
    }

    /// Wall-clock span of the moment: the longest op in it.
    pub fn duration_ns(&self) -> f64 {
        self.ops.iter().map(|op| op.dur_ns).fold(0.0, f64::max)
    }

    /// True when every op is a single-qubit gate.
    pub fn is_single_qubit_layer(&self) -> bool {
        self.ops.iter().all(|op| op.qubits.len() == 1)
    }

    /// Qubits touched by any op, without duplicates.
    pub fn qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> = self.ops.iter().flat_map(|op| op.qubits.iter().copied()).collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    }
}

/// Moment-ordered gate program on a fixed register.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Circuit {
    pub qubit_count: usize,
    pub moments: Vec<Moment>,
}

impl Circuit {
    pub fn new(qubit_count: usize) -> Self {
        Circuit { qubit_count, moments: Vec::new() }
    }

    pub fn push(&mut self, moment: Moment) -> Result<()> {
        moment.validate()?;
        if let Some(&q) = moment.qubits().iter().find(|&&q| q >= self.qubit_count) {
            return Err(Error::InvalidArgument(format!(
                "qubit {q} out of range for a {}-qubit circuit",
                self.qubit_count
            )));
        }
        self.moments.push(moment);
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.moments.len()
    }

    pub fn cz_count(&self) -> usize {
        self.moments
            .iter()
            .flat_map(|m| &m.ops)
            .filter(|op| matches!(op.kind, GateKind::Cz | GateKind::CzGeneral { .. }))
            .count()
    }

    /// Re-checks every moment; deserialized circuits are validated here
    /// before simulation.
    pub fn validate(&self) -> Result<()> {
        for m in &self.moments {
            m.validate()?;
            if let Some(&q) = m.qubits().iter().find(|&&q| q >= self.qubit_count) {
                return Err(Error::InvalidArgument(format!(
                    "qubit {q} out of range for a {}-qubit circuit",
                    self.qubit_count
                )));
            }
        }
        Ok(())
    }

    pub fn unitary(&self) -> Result<CMatrix> {
        circuit_unitary(self)
    }
}

/// Number of moments.
pub fn depth(c: &Circuit) -> usize {
    c.depth()
}

/// Lift an op unitary onto the full register. `qubits[0]` addresses the
/// highest-order index bit of `u`, matching the register convention that
/// qubit 0 is the leading tensor factor.
pub fn embed(u: &CMatrix, qubits: &[usize], qubit_count: usize) -> Result<CMatrix> {
    let k = qubits.len();
    if u.rows() != 1 << k || u.cols() != 1 << k {
        return Err(Error::Dimension {
            expected: format!("{0}x{0}", 1 << k),
            got: format!("{}x{}", u.rows(), u.cols()),
        });
    }
    if qubits.iter().any(|&q| q >= qubit_count) {
        return Err(Error::InvalidArgument(format!(
            "qubits {qubits:?} out of range for {qubit_count} qubits"
        )));
    }
    let dim = 1usize << qubit_count;
    // Bit of full index addressing qubit q (qubit 0 = most significant).
    let bit = |idx: usize, q: usize| idx >> (qubit_count - 1 - q) & 1;
    let mut out = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let untouched_match = (0..qubit_count)
                .filter(|q| !qubits.contains(q))
                .all(|q| bit(r, q) == bit(c, q));
            if !untouched_match {
                continue;
            }
            let mut ur = 0usize;
            let mut uc = 0usize;
            for (j, &q) in qubits.iter().enumerate() {
                ur |= bit(r, q) << (k - 1 - j);
                uc |= bit(c, q) << (k - 1 - j);
            }
            out[(r, c)] = u[(ur, uc)];
        }
    }
    Ok(out)
}

/// Product of the circuit's moments, first moment rightmost.
pub fn circuit_unitary(c: &Circuit) -> Result<CMatrix> {
    c.validate()?;
    let dim = 1usize << c.qubit_count;
    let mut total = CMatrix::identity(dim);
    for m in &c.moments {
        for op in &m.ops {
            let lifted = embed(&gates::unitary_of(op), &op.qubits, c.qubit_count)?;
            total = lifted.matmul(&total);
        }
    }
    Ok(total)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Angles (θ, φ, v) such that `u` ≅ PhasedX(θ, φ)·VirtualZ(v) up to a
/// global phase, solved from the ZXZ Euler form of the 2×2 unitary.
pub fn phased_x_virtual_z_angles(u: &CMatrix) -> Result<(f64, f64, f64)> {
    if u.rows() != 2 || u.cols() != 2 {
        return Err(Error::Dimension {
            expected: "2x2".into(),
            got: format!("{}x{}", u.rows(), u.cols()),
        });
    }
    let residual = u.matmul(&u.adjoint()).max_abs_diff(&CMatrix::identity(2));
    if residual > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "matrix is not unitary (|UU^H - I| = {residual:.3e})"
        )));
    }
    // Det-normalize into SU(2): entries become cos(θ/2)·e^{−i(β+ε)/2} and
    // −i·sin(θ/2)·e^{−i(β−ε)/2} for U = Rz(β)·Rx(θ)·Rz(ε) up to phase.
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let root = det.sqrt();
    let u00 = u[(0, 0)] / root;
    let u01 = u[(0, 1)] / root;
    let c = u00.norm();
    let s = u01.norm();
    let theta = 2.0 * s.atan2(c);
    let (beta, eps) = if s < 1e-9 {
        (0.0, -2.0 * u00.arg())
    } else if c < 1e-9 {
        (-2.0 * (u01.arg() + PI / 2.0), 0.0)
    } else {
        let sum = -2.0 * u00.arg();
        let diff = -2.0 * (u01.arg() + PI / 2.0);
        ((sum + diff) / 2.0, (sum - diff) / 2.0)
    };
    Ok((theta, wrap_angle(-beta), wrap_angle(beta + eps)))
}

/// Collapse a run of single-qubit gates on one qubit into the canonical
/// (PhasedX, VirtualZ) pair, VirtualZ applied first. An empty run yields
/// the identity pair PhasedX(0, 0), VirtualZ(0).
pub fn merge_single_qubit_run(qubit: usize, run: &[GateOp]) -> Result<(GateOp, GateOp)> {
    let mut product = CMatrix::identity(2);
    for op in run {
        if op.qubits != [qubit] {
            return Err(Error::InvalidArgument(format!(
                "run contains an op on qubits {:?}, expected [{qubit}]",
                op.qubits
            )));
        }
        product = gates::unitary_of(op).matmul(&product);
    }
    let (theta, phi, vz) = phased_x_virtual_z_angles(&product)?;
    Ok((GateOp::phased_x(theta, phi, qubit), GateOp::virtual_z(vz, qubit)))
}

/// Merge per-qubit unitaries into one single-qubit-layer moment: for each
/// qubit, VirtualZ then PhasedX, sharing the moment.
fn layer_moment(per_qubit: &[(usize, CMatrix)]) -> Result<Moment> {
    let mut ops = Vec::with_capacity(2 * per_qubit.len());
    for (qubit, u) in per_qubit {
        let (theta, phi, vz) = phased_x_virtual_z_angles(u)?;
        ops.push(GateOp::virtual_z(vz, *qubit));
        ops.push(GateOp::phased_x(theta, phi, *qubit));
    }
    Moment::new(ops)
}

/// diag(1, i).
fn s_gate() -> CMatrix {
    let mut m = CMatrix::identity(2);
    m[(1, 1)] = C64::new(0.0, 1.0);
    m
}

/// The four single-qubit layers of the partial-swap template, in
/// application order; element k is (qubit-0 unitary, qubit-1 unitary).
pub(crate) fn dswap_layers(delta: f64) -> [[CMatrix; 2]; 4] {
    let h = gates::hadamard();
    let s = s_gate();
    let eye = CMatrix::identity(2);
    [
        [h.matmul(&s.adjoint()), eye.clone()],
        [s.matmul(&h), gates::rx(-delta).matmul(&s)],
        [h.matmul(&gates::rz(delta)), gates::rx(delta)],
        [h, eye],
    ]
}

/// Lower e^{−i·SWAP·δ} to 3 CZs and 4 single-qubit layers (7 moments).
/// The circuit unitary matches the target up to a global phase.
pub fn decompose_dswap(delta: f64) -> Result<Circuit> {
    if !delta.is_finite() || delta.abs() >= 2.0 * PI {
        return Err(Error::InvalidArgument(format!(
            "swap angle {delta} outside (-2*pi, 2*pi)"
        )));
    }
    let layers = dswap_layers(delta);
    let mut c = Circuit::new(2);
    for (k, layer) in layers.iter().enumerate() {
        c.push(layer_moment(&[(0, layer[0].clone()), (1, layer[1].clone())])?)?;
        if k < 3 {
            c.push(Moment::new(vec![GateOp::cz(0, 1)])?)?;
        }
    }
    Ok(c)
}

/// Compile an N-step run under one coin mask into the merged 6N+1-moment
/// circuit. Coin gates and interior block boundaries are fused into
/// single-qubit layers, so the depth is independent of the mask.
pub fn build_dme2_circuit(cfg: &DmeConfig, mask: &QmeMask) -> Result<Circuit> {
    cfg.validate()?;
    if mask.steps() != cfg.steps {
        return Err(Error::InvalidArgument(format!(
            "mask covers {} steps, config has {}",
            mask.steps(),
            cfg.steps
        )));
    }
    let axis = cfg.resolve_axis()?;
    let layers = dswap_layers(cfg.delta());
    let coin_u = |step: usize| -> Result<CMatrix> {
        if mask.bit(step) {
            gates::rotation(axis, PI)
        } else {
            Ok(CMatrix::identity(2))
        }
    };

    let n = cfg.steps;
    let mut c = Circuit::new(2);
    c.push(
        layer_moment(&[(0, layers[0][0].clone()), (1, layers[0][1].clone())])?
            .with_tag("step 1".to_string()),
    )?;
    for k in 0..n {
        let tag = format!("step {}", k + 1);
        for layer in &layers[1..=2] {
            c.push(Moment::new(vec![GateOp::cz(0, 1)])?.with_tag(tag.clone()))?;
            c.push(
                layer_moment(&[(0, layer[0].clone()), (1, layer[1].clone())])?
                    .with_tag(tag.clone()),
            )?;
        }
        c.push(Moment::new(vec![GateOp::cz(0, 1)])?.with_tag(tag.clone()))?;
        // Closing layer: L3, the step's coin gate, and (inside the run)
        // the next block's opening layer, fused per qubit.
        let q1 = coin_u(k)?.matmul(&layers[3][1]);
        let (q0, q1, tag) = if k + 1 < n {
            (
                layers[0][0].matmul(&layers[3][0]),
                layers[0][1].matmul(&q1),
                format!("step {} qme", k + 1),
            )
        } else {
            (layers[3][0].clone(), q1, format!("step {} qme", k + 1))
        };
        c.push(layer_moment(&[(0, q0), (1, q1)])?.with_tag(tag))?;
    }
    Ok(c)
}

/// The same program without boundary fusion: each step is the 7-moment
/// swap template followed by an explicit coin-gate moment (8N moments).
/// Kept for auditing the merge — its unitary matches the merged circuit
/// up to a global phase.
pub fn build_dme2_circuit_unmerged(cfg: &DmeConfig, mask: &QmeMask) -> Result<Circuit> {
    cfg.validate()?;
    if mask.steps() != cfg.steps {
        return Err(Error::InvalidArgument(format!(
            "mask covers {} steps, config has {}",
            mask.steps(),
            cfg.steps
        )));
    }
    let axis = cfg.resolve_axis()?;
    let layers = dswap_layers(cfg.delta());
    let mut c = Circuit::new(2);
    for k in 0..cfg.steps {
        let tag = format!("step {}", k + 1);
        for (j, layer) in layers.iter().enumerate() {
            c.push(
                layer_moment(&[(0, layer[0].clone()), (1, layer[1].clone())])?
                    .with_tag(tag.clone()),
            )?;
            if j < 3 {
                c.push(Moment::new(vec![GateOp::cz(0, 1)])?.with_tag(tag.clone()))?;
            }
        }
        c.push(
            Moment::new(vec![qme_gate(axis, mask.bit(k))?])?.with_tag(format!("step {} qme", k + 1)),
        )?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dme::{dme2_with_masks, DmeConfig};
    use crate::gates::{phase_insensitive_distance, swap_pow, unitary_of};
    use crate::qstate::{cardinal_state, pure_state, Cardinal};
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn dswap_template_matches_target_on_grid() {
        let grid = [
            -PI / 64.0,
            PI / 64.0,
            -PI / 16.0,
            PI / 16.0,
            -PI / 8.0,
            PI / 8.0,
            -PI / 4.0,
            PI / 4.0,
            PI / 2.0,
        ];
        for delta in grid {
            let circ = decompose_dswap(delta).unwrap();
            let u = circ.unitary().unwrap();
            let d = phase_insensitive_distance(&u, &swap_pow(delta));
            assert!(d < 1e-9, "delta={delta}: distance {d}");
        }
    }

    #[test]
    fn dswap_template_structure() {
        let circ = decompose_dswap(PI / 8.0).unwrap();
        assert_eq!(circ.depth(), 7);
        assert_eq!(circ.cz_count(), 3);
        for (i, m) in circ.moments.iter().enumerate() {
            if i % 2 == 0 {
                assert!(m.is_single_qubit_layer());
                // Canonical layer: VirtualZ then PhasedX on each qubit.
                assert_eq!(m.ops.len(), 4);
                assert!(matches!(m.ops[0].kind, GateKind::VirtualZ { .. }));
                assert!(matches!(m.ops[1].kind, GateKind::PhasedX { .. }));
                assert!((m.duration_ns() - gates::T_1QB_NS).abs() < 1e-12);
            } else {
                assert!(matches!(m.ops[0].kind, GateKind::Cz));
                assert!((m.duration_ns() - gates::T_CZ_NS).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dswap_degenerate_angles() {
        let id = decompose_dswap(0.0).unwrap().unitary().unwrap();
        assert!(phase_insensitive_distance(&id, &CMatrix::identity(4)) < 1e-12);
        let full = decompose_dswap(PI / 2.0).unwrap().unitary().unwrap();
        assert!(phase_insensitive_distance(&full, &gates::swap()) < 1e-12);
        assert!(decompose_dswap(2.0 * PI).is_err());
        assert!(decompose_dswap(f64::NAN).is_err());
    }

    #[test]
    fn merge_examples() {
        let (px, vz) = merge_single_qubit_run(
            0,
            &[GateOp::new(GateKind::PhasedX { theta: PI / 2.0, phi: 0.0 }, vec![0]).unwrap()],
        )
        .unwrap();
        match (px.kind, vz.kind) {
            (GateKind::PhasedX { theta, phi }, GateKind::VirtualZ { phi: v }) => {
                assert!((theta - PI / 2.0).abs() < 1e-12);
                assert!(phi.abs() < 1e-12);
                assert!(v.abs() < 1e-12);
            }
            other => panic!("unexpected kinds {other:?}"),
        }

        let (px, vz) = merge_single_qubit_run(
            0,
            &[GateOp::virtual_z(0.8, 0)],
        )
        .unwrap();
        match (px.kind, vz.kind) {
            (GateKind::PhasedX { theta, .. }, GateKind::VirtualZ { phi: v }) => {
                assert!(theta.abs() < 1e-12);
                assert!((v - 0.8).abs() < 1e-12);
            }
            other => panic!("unexpected kinds {other:?}"),
        }
    }

    #[test]
    fn hadamard_merges_to_quarter_turn() {
        let (theta, phi, vz) = phased_x_virtual_z_angles(&gates::hadamard()).unwrap();
        assert!((theta - PI / 2.0).abs() < 1e-12, "theta = {theta}");
        let rebuilt = gates::phased_x(theta, phi).matmul(&gates::rz(vz));
        assert!(phase_insensitive_distance(&rebuilt, &gates::hadamard()) < 1e-10);
    }

    #[test]
    fn empty_run_is_identity_pair() {
        let (px, vz) = merge_single_qubit_run(1, &[]).unwrap();
        match (px.kind, vz.kind) {
            (GateKind::PhasedX { theta, phi }, GateKind::VirtualZ { phi: v }) => {
                assert_eq!((theta, phi, v), (0.0, 0.0, 0.0));
            }
            other => panic!("unexpected kinds {other:?}"),
        }
        assert_eq!(px.qubits, vec![1]);
    }

    #[test]
    fn merge_random_runs() {
        let mut rng = stream_rng(0xc0de, 1);
        for _ in 0..20 {
            let len = rng.gen_range(1..6);
            let run: Vec<GateOp> = (0..len)
                .map(|_| match rng.gen_range(0..3) {
                    0 => GateOp::phased_x(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0),
                    1 => GateOp::virtual_z(rng.gen_range(-3.0..3.0), 0),
                    _ => GateOp::new(GateKind::H, vec![0]).unwrap(),
                })
                .collect();
            let mut product = CMatrix::identity(2);
            for op in &run {
                product = unitary_of(op).matmul(&product);
            }
            let (px, vz) = merge_single_qubit_run(0, &run).unwrap();
            let merged = unitary_of(&px).matmul(&unitary_of(&vz));
            let d = phase_insensitive_distance(&merged, &product);
            assert!(d < 1e-10, "distance {d}");
        }
        assert!(merge_single_qubit_run(0, &[GateOp::virtual_z(0.3, 1)]).is_err());
    }

    #[test]
    fn protocol_circuit_depths() {
        let sigma = pure_state("+i").unwrap();
        for (steps, want_depth) in [(1usize, 7usize), (4, 25), (8, 49), (12, 73)] {
            let cfg = DmeConfig::enumerated(
                pure_state("+").unwrap(),
                sigma.clone(),
                steps,
                PI / 2.0,
            );
            let mask = QmeMask::new(0, steps).unwrap();
            let circ = build_dme2_circuit(&cfg, &mask).unwrap();
            assert_eq!(circ.depth(), want_depth);
            assert_eq!(circ.depth(), 6 * steps + 1);
            assert_eq!(circ.cz_count(), 3 * steps);
            // Layers and CZs alternate, ending on a layer.
            for (i, m) in circ.moments.iter().enumerate() {
                if i % 2 == 0 {
                    assert!(m.is_single_qubit_layer(), "moment {i}");
                } else {
                    assert!(matches!(m.ops[0].kind, GateKind::Cz), "moment {i}");
                }
            }
            // A flipped-coin mask must not change the shape.
            let mask1 = QmeMask::new((1 << steps) - 1, steps).unwrap();
            assert_eq!(build_dme2_circuit(&cfg, &mask1).unwrap().depth(), want_depth);
        }
    }

    #[test]
    fn merged_matches_unmerged() {
        let mut rng = stream_rng(0xc0de, 2);
        for _ in 0..50 {
            let cardinal = Cardinal::ALL[rng.gen_range(0..6)];
            let steps = rng.gen_range(1..=5);
            let theta = rng.gen_range(0.3..3.1);
            let cfg = DmeConfig::enumerated(
                cardinal_state(cardinal),
                pure_state("0").unwrap(),
                steps,
                theta,
            );
            let mask = QmeMask::new(rng.gen_range(0..1u64 << steps), steps).unwrap();
            let merged = build_dme2_circuit(&cfg, &mask).unwrap().unitary().unwrap();
            let unmerged = build_dme2_circuit_unmerged(&cfg, &mask).unwrap().unitary().unwrap();
            let d = phase_insensitive_distance(&merged, &unmerged);
            assert!(d < 1e-9, "{cardinal:?} N={steps} theta={theta}: distance {d}");
        }
    }

    #[test]
    fn compiled_circuit_reproduces_protocol() {
        let mut rng = stream_rng(0xc0de, 3);
        for _ in 0..10 {
            let cardinal = Cardinal::ALL[rng.gen_range(0..6)];
            let steps = rng.gen_range(1..=4);
            let theta = rng.gen_range(0.3..2.9);
            let cfg = DmeConfig::enumerated(
                cardinal_state(cardinal),
                pure_state("+i").unwrap(),
                steps,
                theta,
            );
            let mask = QmeMask::new(rng.gen_range(0..1u64 << steps), steps).unwrap();
            let u = build_dme2_circuit(&cfg, &mask).unwrap().unitary().unwrap();
            let omega0 = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix());
            let from_circuit = u.conjugate(&omega0);
            let run = dme2_with_masks(&cfg, &[mask]).unwrap();
            let d = run.per_mask_final[0].joint.matrix().max_abs_diff(&from_circuit);
            assert!(d < 1e-9, "{cardinal:?} N={steps}: diff {d}");
        }
    }

    #[test]
    fn mask_average_over_compiled_circuits_matches_enumeration() {
        let cfg = DmeConfig::enumerated(
            pure_state("+").unwrap(),
            pure_state("+i").unwrap(),
            3,
            1.2,
        );
        let run = crate::dme::dme2_enumerate(&cfg).unwrap();
        let omega0 = cfg.sigma_in.matrix().kron(cfg.rho_in.matrix());
        let mut avg = CMatrix::zeros(4, 4);
        for idx in 0..8u64 {
            let mask = QmeMask::new(idx, 3).unwrap();
            let u = build_dme2_circuit(&cfg, &mask).unwrap().unitary().unwrap();
            avg = avg.add(&u.conjugate(&omega0));
        }
        avg = avg.scale_re(1.0 / 8.0);
        assert!(run.joint[3].matrix().max_abs_diff(&avg) < 1e-9);
    }

    #[test]
    fn mask_length_must_match_config() {
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("0").unwrap(), 3, 1.0);
        let mask = QmeMask::new(0, 4).unwrap();
        assert!(build_dme2_circuit(&cfg, &mask).is_err());
    }

    #[test]
    fn unitary_of_simple_circuits() {
        let empty = Circuit::new(2);
        assert_eq!(circuit_unitary(&empty).unwrap().max_abs_diff(&CMatrix::identity(4)), 0.0);

        let mut cz = Circuit::new(2);
        cz.push(Moment::new(vec![GateOp::cz(0, 1)]).unwrap()).unwrap();
        let u = cz.unitary().unwrap();
        assert!((u[(3, 3)] - c64(-1.0, 0.0)).norm() < 1e-15);
        assert!((u[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn embedding_conventions() {
        let x = gates::pauli_x();
        let on0 = embed(&x, &[0], 2).unwrap();
        assert_eq!(on0.max_abs_diff(&x.kron(&CMatrix::identity(2))), 0.0);
        let on1 = embed(&x, &[1], 2).unwrap();
        assert_eq!(on1.max_abs_diff(&CMatrix::identity(2).kron(&x)), 0.0);

        // Listing the qubits of an asymmetric two-qubit gate in reverse
        // order swaps the roles of its index bits.
        let g = gates::cz_general(0.2, 0.7, 1.1);
        let fwd = embed(&g, &[0, 1], 2).unwrap();
        let rev = embed(&g, &[1, 0], 2).unwrap();
        assert!((fwd[(1, 1)] - rev[(2, 2)]).norm() < 1e-15);
        assert!((fwd[(2, 2)] - rev[(1, 1)]).norm() < 1e-15);
        assert!((fwd[(3, 3)] - rev[(3, 3)]).norm() < 1e-15);

        assert!(embed(&x, &[2], 2).is_err());
        assert!(embed(&x, &[0, 1], 2).is_err());
    }

    #[test]
    fn moment_rejects_physical_collisions() {
        assert!(Moment::new(vec![GateOp::phased_x(1.0, 0.0, 0), GateOp::phased_x(1.0, 0.0, 0)])
            .is_err());
        assert!(Moment::new(vec![GateOp::phased_x(1.0, 0.0, 0), GateOp::cz(0, 1)]).is_err());
        // VirtualZ + PhasedX on the same qubit in one moment is the
        // canonical layer form and must stay legal.
        assert!(
            Moment::new(vec![GateOp::virtual_z(0.5, 0), GateOp::phased_x(1.0, 0.0, 0)]).is_ok()
        );
    }

    #[test]
    fn circuit_json_round_trip() {
        let cfg = DmeConfig::enumerated(pure_state("+").unwrap(), pure_state("+i").unwrap(), 2, 1.0);
        let mask = QmeMask::new(0b10, 2).unwrap();
        let circ = build_dme2_circuit(&cfg, &mask).unwrap();
        let json = serde_json::to_string(&circ).unwrap();
        let back: Circuit = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.depth(), circ.depth());
        let d = back.unitary().unwrap().max_abs_diff(&circ.unitary().unwrap());
        assert_eq!(d, 0.0);
        assert_eq!(back.moments[0].tag, circ.moments[0].tag);
    }

    #[test]
    fn out_of_range_qubit_rejected() {
        let mut c = Circuit::new(1);
        assert!(c.push(Moment::new(vec![GateOp::cz(0, 1)]).unwrap()).is_err());
    }
}
