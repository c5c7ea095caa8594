//! Gate vocabulary and unitary constructors.
//!
//! The native set is PhasedX (a microwave X rotation conjugated by frame
//! phases), zero-duration VirtualZ, and the CZ family; SwapPow is the
//! composite partial-SWAP reference e^{−i·SWAP·δ}, and QmeMark records a
//! coin-resolved instruction dephasing pulse (identity or R_ν(π)) so that a
//! circuit is a complete record of one randomized execution.
//!
//! Phase convention: SwapPow(δ) := e^{−iSWAPδ} = cos δ·𝟙 − i sin δ·SWAP.
//! Unitary equality is always asserted phase-insensitively via
//! [`phase_insensitive_distance`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, C64};
use crate::{Error, Result};

/// Single-qubit gate duration, nanoseconds.
pub const T_1QB_NS: f64 = 30.0;
/// Two-qubit (CZ) gate duration, nanoseconds.
pub const T_CZ_NS: f64 = 60.0;
/// Idle spacing appended after each CZ, nanoseconds.
pub const CZ_GAP_NS: f64 = 5.0;

fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]])
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_rows(&[vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]])
}

pub fn swap() -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| {
        let (i1, i2) = (i / 2, i % 2);
        let (j1, j2) = (j / 2, j % 2);
        if i1 == j2 && i2 == j1 {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

/// R_x(θ) = e^{−iθX/2}.
pub fn rx(theta: f64) -> CMatrix {
    let (cos, sin) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMatrix::from_rows(&[vec![c(cos, 0.0), c(0.0, -sin)], vec![c(0.0, -sin), c(cos, 0.0)]])
}

/// R_y(θ) = e^{−iθY/2}.
pub fn ry(theta: f64) -> CMatrix {
    let (cos, sin) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMatrix::from_rows(&[vec![c(cos, 0.0), c(-sin, 0.0)], vec![c(sin, 0.0), c(cos, 0.0)]])
}

/// R_z(θ) = e^{−iθZ/2}.
pub fn rz(theta: f64) -> CMatrix {
    CMatrix::from_rows(&[
        vec![c((theta / 2.0).cos(), -(theta / 2.0).sin()), c(0.0, 0.0)],
        vec![c(0.0, 0.0), c((theta / 2.0).cos(), (theta / 2.0).sin())],
    ])
}

/// PhasedX(θ, φ) = R_z(−φ)·R_x(θ)·R_z(φ): an X rotation in a frame advanced
/// by φ about Z.
pub fn phased_x(theta: f64, phi: f64) -> CMatrix {
    rz(-phi).matmul(&rx(theta)).matmul(&rz(phi))
}

/// e^{−i(angle/2)·(ν·σ)} about a unit axis ν.
pub fn rotation(axis: [f64; 3], angle: f64) -> Result<CMatrix> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("rotation axis norm {norm} is not 1")));
    }
    let sigma = pauli_x()
        .scale_re(axis[0])
        .add(&pauli_y().scale_re(axis[1]))
        .add(&pauli_z().scale_re(axis[2]));
    let (cos, sin) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    Ok(CMatrix::identity(2).scale_re(cos).add(&sigma.scale(c(0.0, -sin))))
}

/// diag(1, e^{−iφ01}, e^{−iφ10}, e^{−iφ11}); (0,0,π) is the standard CZ.
pub fn cz_general(phi01: f64, phi10: f64, phi11: f64) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 1)] = c(phi01.cos(), -phi01.sin());
    m[(2, 2)] = c(phi10.cos(), -phi10.sin());
    m[(3, 3)] = c(phi11.cos(), -phi11.sin());
    m
}

/// cos δ·𝟙 − i sin δ·SWAP.
pub fn swap_pow(delta: f64) -> CMatrix {
    CMatrix::identity(4)
        .scale_re(delta.cos())
        .add(&swap().scale(c(0.0, -delta.sin())))
}

/// min over global phase of ‖a − e^{iφ}b‖_F. The optimum is at
/// φ* = arg Tr(b†a); the distance is evaluated entrywise at φ* so that
/// near-zero results keep full precision.
pub fn phase_insensitive_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap = b.adjoint().matmul(a).trace();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    a.sub(&b.scale(phase)).frobenius_norm()
}

/// Gate vocabulary; payloads hold the continuous parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    PhasedX { theta: f64, phi: f64 },
    VirtualZ { phi: f64 },
    H,
    Cz,
    CzGeneral { phi01: f64, phi10: f64, phi11: f64 },
    Cnot,
    SwapPow { delta: f64 },
    /// Coin-resolved instruction dephasing pulse: R_ν(π) when the coin is
    /// true, an idle of one single-qubit gate duration otherwise.
    QmeMark { axis: [f64; 3], coin: bool },
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::PhasedX { .. }
            | GateKind::VirtualZ { .. }
            | GateKind::H
            | GateKind::QmeMark { .. } => 1,
            GateKind::Cz | GateKind::CzGeneral { .. } | GateKind::Cnot | GateKind::SwapPow { .. } => 2,
        }
    }

    /// Canonical duration by kind. SwapPow is a composite reference that is
    /// decomposed before any timing-sensitive use; it carries the two-qubit
    /// slot duration formally.
    pub fn duration_ns(&self) -> f64 {
        match self {
            GateKind::VirtualZ { .. } => 0.0,
            GateKind::PhasedX { .. } | GateKind::H | GateKind::QmeMark { .. } => T_1QB_NS,
            GateKind::Cz | GateKind::CzGeneral { .. } | GateKind::Cnot | GateKind::SwapPow { .. } => T_CZ_NS,
        }
    }
}

/// One gate application: kind, target qubit indices (first index is the
/// control for CNOT), and wall-clock duration in nanoseconds.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub dur_ns: f64,
}

impl GateOp {
    pub fn new(kind: GateKind, qubits: Vec<usize>) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(Error::InvalidArgument(format!(
                "{:?} acts on {} qubit(s), got {:?}",
                kind,
                kind.arity(),
                qubits
            )));
        }
        let mut unique = qubits.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != qubits.len() {
            return Err(Error::InvalidArgument(format!("repeated qubit in {qubits:?}")));
        }
        let dur_ns = kind.duration_ns();
        Ok(GateOp { kind, qubits, dur_ns })
    }

    pub fn phased_x(theta: f64, phi: f64, qubit: usize) -> Self {
        GateOp::new(GateKind::PhasedX { theta, phi }, vec![qubit]).unwrap()
    }

    pub fn virtual_z(phi: f64, qubit: usize) -> Self {
        GateOp::new(GateKind::VirtualZ { phi }, vec![qubit]).unwrap()
    }

    pub fn cz(a: usize, b: usize) -> Self {
        GateOp::new(GateKind::Cz, vec![a, b]).unwrap()
    }
}

/// Unitary of a gate in its own qubit order (`qubits[0]` is the high-order
/// tensor factor).
pub fn unitary_of(g: &GateOp) -> CMatrix {
    match &g.kind {
        GateKind::PhasedX { theta, phi } => phased_x(*theta, *phi),
        GateKind::VirtualZ { phi } => rz(*phi),
        GateKind::H => hadamard(),
        GateKind::Cz => cz_general(0.0, 0.0, std::f64::consts::PI),
        GateKind::CzGeneral { phi01, phi10, phi11 } => cz_general(*phi01, *phi10, *phi11),
        GateKind::Cnot => CMatrix::from_real_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]),
        GateKind::SwapPow { delta } => swap_pow(*delta),
        GateKind::QmeMark { axis, coin } => {
            if *coin {
                rotation(*axis, std::f64::consts::PI).expect("validated axis")
            } else {
                CMatrix::identity(2)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    kind: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    params: serde_json::Map<String, serde_json::Value>,
    qubits: Vec<usize>,
    dur_ns: f64,
}

impl Serialize for GateOp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut params = serde_json::Map::new();
        let mut put = |k: &str, v: f64| {
            params.insert(k.into(), serde_json::json!(v));
        };
        let kind = match &self.kind {
            GateKind::PhasedX { theta, phi } => {
                put("theta", *theta);
                put("phi", *phi);
                "phased_x"
            }
            GateKind::VirtualZ { phi } => {
                put("phi", *phi);
                "virtual_z"
            }
            GateKind::H => "h",
            GateKind::Cz => "cz",
            GateKind::CzGeneral { phi01, phi10, phi11 } => {
                put("phi01", *phi01);
                put("phi10", *phi10);
                put("phi11", *phi11);
                "cz_general"
            }
            GateKind::Cnot => "cnot",
            GateKind::SwapPow { delta } => {
                put("delta", *delta);
                "swap_pow"
            }
            GateKind::QmeMark { axis, coin } => {
                params.insert("axis".into(), serde_json::json!(axis));
                params.insert("coin".into(), serde_json::json!(coin));
                "qme_mark"
            }
        };
        GateJson { kind: kind.into(), params, qubits: self.qubits.clone(), dur_ns: self.dur_ns }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GateOp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = GateJson::deserialize(deserializer)?;
        let f = |key: &str| -> std::result::Result<f64, D::Error> {
            raw.params
                .get(key)
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| D::Error::custom(format!("missing numeric param `{key}`")))
        };
        let kind = match raw.kind.as_str() {
            "phased_x" => GateKind::PhasedX { theta: f("theta")?, phi: f("phi")? },
            "virtual_z" => GateKind::VirtualZ { phi: f("phi")? },
            "h" => GateKind::H,
            "cz" => GateKind::Cz,
            "cz_general" => GateKind::CzGeneral {
                phi01: f("phi01")?,
                phi10: f("phi10")?,
                phi11: f("phi11")?,
            },
            "cnot" => GateKind::Cnot,
            "swap_pow" => GateKind::SwapPow { delta: f("delta")? },
            "qme_mark" => {
                let axis: [f64; 3] = raw
                    .params
                    .get("axis")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .ok_or_else(|| D::Error::custom("missing axis param"))?;
                let coin = raw
                    .params
                    .get("coin")
                    .and_then(serde_json::Value::as_bool)
                    .ok_or_else(|| D::Error::custom("missing coin param"))?;
                GateKind::QmeMark { axis, coin }
            }
            other => return Err(D::Error::custom(format!("unknown gate kind `{other}`"))),
        };
        let mut op = GateOp::new(kind, raw.qubits).map_err(|e| D::Error::custom(e.to_string()))?;
        op.dur_ns = raw.dur_ns;
        Ok(op)
    }
}
