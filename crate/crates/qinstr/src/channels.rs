//! Kraus channels: construction, application, composition, Choi form.
//!
//! The two analytic families used throughout are amplitude damping
//!
//! ```text
//! A₁ = [[1, 0], [0, √(1−p)]],   A₂ = [[0, √p], [0, 0]]
//! ```
//!
//! and the thermal decoherence channel built from the time-parametrized
//! amplitude-damping pair A_{i,Γ₁}(t) (p = 1 − e^{−Γ₁t}) together with the
//! dephasing triple
//!
//! ```text
//! D₁ = e^{−Γφt/2}·𝟙,   D₂ = diag(√(1−e^{−Γφt}), 0),   D₃ = diag(0, √(1−e^{−Γφt}))
//! ```
//!
//! composed as the six products A_i·D_j. Off-diagonals then decay by
//! e^{−Γ₁t/2−Γφt}, the familiar 1/T2 = 1/(2T1) + Γφ combination.

use crate::linalg::{self, partial_trace, CMatrix, Keep, C64};
use crate::qstate::DensityMatrix;
use crate::{Error, Result};

/// Trace-preservation tolerance for accepting a Kraus set.
pub const TP_TOL: f64 = 1e-10;

/// A completely positive trace-preserving map in Kraus form.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    kraus: Vec<CMatrix>,
    dim: usize,
}

impl KrausChannel {
    /// Validates operator shapes and Σ K†K = 𝟙 within [`TP_TOL`].
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let dim = match kraus.first() {
            Some(k) if k.is_square() => k.rows(),
            _ => return Err(Error::InvalidArgument("empty or non-square Kraus set".into())),
        };
        if kraus.iter().any(|k| k.rows() != dim || k.cols() != dim) {
            return Err(Error::Dimension {
                expected: format!("{dim}x{dim}"),
                got: "mixed Kraus shapes".into(),
            });
        }
        let channel = KrausChannel { kraus, dim };
        let residual = channel.tp_residual();
        if residual > TP_TOL {
            return Err(Error::InvalidArgument(format!(
                "Kraus set is not trace-preserving (residual {residual:.3e})"
            )));
        }
        Ok(channel)
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel { kraus: vec![CMatrix::identity(dim)], dim }
    }

    /// Single-Kraus channel ρ ↦ UρU†.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        KrausChannel::new(vec![u.clone()])
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// max |Σ K†K − 𝟙|.
    pub fn tp_residual(&self) -> f64 {
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            acc = acc.add(&k.adjoint().matmul(k));
        }
        acc.max_abs_diff(&CMatrix::identity(self.dim))
    }

    /// Kraus entries as JSON, for debugging dumps only.
    pub fn kraus_json(&self) -> serde_json::Value {
        let ops: Vec<serde_json::Value> = self
            .kraus
            .iter()
            .map(|k| {
                let re: Vec<Vec<f64>> =
                    (0..k.rows()).map(|i| (0..k.cols()).map(|j| k[(i, j)].re).collect()).collect();
                let im: Vec<Vec<f64>> =
                    (0..k.rows()).map(|i| (0..k.cols()).map(|j| k[(i, j)].im).collect()).collect();
                serde_json::json!({ "re": re, "im": im })
            })
            .collect();
        serde_json::json!({ "dim": self.dim, "kraus": ops })
    }
}

/// 𝓐_p: decays |1⟩ population toward |0⟩ with probability p.
pub fn amplitude_damping(p: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("damping probability {p} outside [0,1]")));
    }
    let mut a1 = CMatrix::identity(2);
    a1[(1, 1)] = C64::new((1.0 - p).sqrt(), 0.0);
    let mut a2 = CMatrix::zeros(2, 2);
    a2[(0, 1)] = C64::new(p.sqrt(), 0.0);
    KrausChannel::new(vec![a1, a2])
}

/// 𝓐_p conjugated into the eigenbasis V: damps toward the pure state V|0⟩.
pub fn amplitude_damping_in_basis(p: f64, v: &CMatrix) -> Result<KrausChannel> {
    let plain = amplitude_damping(p)?;
    let kraus = plain
        .kraus()
        .iter()
        .map(|k| v.matmul(k).matmul(&v.adjoint()))
        .collect();
    KrausChannel::new(kraus)
}

/// Thermal decoherence for an idle (or gate) window of `t` seconds: the six
/// Kraus products A_i·D_j in fixed (i, j) enumeration order.
pub fn decoherence_channel(gamma1: f64, gamma_phi: f64, t: f64) -> Result<KrausChannel> {
    if gamma1 < 0.0 || gamma_phi < 0.0 || t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rates and time must be nonnegative (gamma1={gamma1}, gamma_phi={gamma_phi}, t={t})"
        )));
    }
    let p_decay = 1.0 - (-gamma1 * t).exp();
    let mut a1 = CMatrix::identity(2);
    a1[(1, 1)] = C64::new((-gamma1 * t / 2.0).exp(), 0.0);
    let mut a2 = CMatrix::zeros(2, 2);
    a2[(0, 1)] = C64::new(p_decay.sqrt(), 0.0);

    let keep = (-gamma_phi * t).exp();
    let d1 = CMatrix::identity(2).scale_re(keep.sqrt());
    let mut d2 = CMatrix::zeros(2, 2);
    d2[(0, 0)] = C64::new((1.0 - keep).sqrt(), 0.0);
    let mut d3 = CMatrix::zeros(2, 2);
    d3[(1, 1)] = C64::new((1.0 - keep).sqrt(), 0.0);

    let mut kraus = Vec::with_capacity(6);
    for a in [&a1, &a2] {
        for d in [&d1, &d2, &d3] {
            kraus.push(a.matmul(d));
        }
    }
    KrausChannel::new(kraus)
}

/// ρ ↦ λρ + (1−λ)𝟙/2. CP requires λ ∈ [−1/3, 1].
pub fn depolarizing(lambda: f64) -> Result<KrausChannel> {
    if !(-1.0 / 3.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "depolarizing parameter {lambda} outside [-1/3, 1]"
        )));
    }
    let w0 = ((1.0 + 3.0 * lambda) / 4.0).sqrt();
    let w = ((1.0 - lambda) / 4.0).sqrt();
    KrausChannel::new(vec![
        CMatrix::identity(2).scale_re(w0),
        crate::gates::pauli_x().scale_re(w),
        crate::gates::pauli_y().scale_re(w),
        crate::gates::pauli_z().scale_re(w),
    ])
}

/// Raw Kraus action Σ K m K† without density-matrix validation; the workhorse
/// for inner simulation loops.
pub fn apply_mat(c: &KrausChannel, m: &CMatrix) -> Result<CMatrix> {
    if m.rows() != c.dim || m.cols() != c.dim {
        return Err(Error::Dimension {
            expected: format!("{0}x{0}", c.dim),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let mut out = CMatrix::zeros(c.dim, c.dim);
    for k in &c.kraus {
        out = out.add(&k.conjugate(m));
    }
    Ok(out)
}

/// Validated channel application.
pub fn apply(c: &KrausChannel, m: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(apply_mat(c, m.matrix())?)
}

/// Applies a single-qubit channel to one qubit of a two-qubit state by
/// lifting each Kraus operator with 𝟙 on the spectator qubit.
pub fn apply_to_qubit(c: &KrausChannel, m: &CMatrix, qubit: usize) -> Result<CMatrix> {
    if c.dim != 2 {
        return Err(Error::Dimension { expected: "2x2 channel".into(), got: format!("{0}x{0}", c.dim) });
    }
    if m.rows() != 4 || m.cols() != 4 {
        return Err(Error::Dimension { expected: "4x4".into(), got: format!("{}x{}", m.rows(), m.cols()) });
    }
    if qubit > 1 {
        return Err(Error::InvalidArgument(format!("qubit index {qubit} on a two-qubit state")));
    }
    let i2 = CMatrix::identity(2);
    let mut out = CMatrix::zeros(4, 4);
    for k in &c.kraus {
        let lifted = if qubit == 0 { k.kron(&i2) } else { i2.kron(k) };
        out = out.add(&lifted.conjugate(m));
    }
    Ok(out)
}

/// Channel composition: `then` after `first` (i.e. ρ ↦ then(first(ρ))).
pub fn compose(first: &KrausChannel, then: &KrausChannel) -> Result<KrausChannel> {
    if first.dim != then.dim {
        return Err(Error::Dimension {
            expected: format!("{0}x{0}", first.dim),
            got: format!("{0}x{0}", then.dim),
        });
    }
    let mut kraus = Vec::with_capacity(first.kraus.len() * then.kraus.len());
    for b in &then.kraus {
        for a in &first.kraus {
            kraus.push(b.matmul(a));
        }
    }
    KrausChannel::new(kraus)
}

/// Choi matrix J = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|); the input system is the first
/// tensor factor. The identity channel gives Σ_ij |ii⟩⟨jj| = 2·Φ⁺ for d = 2.
pub fn choi(c: &KrausChannel) -> CMatrix {
    let d = c.dim;
    let mut j = CMatrix::zeros(d * d, d * d);
    for k in &c.kraus {
        // E(|i><j|) = K|i><j|K† has entries K[r,i]·conj(K[s,j]).
        for i in 0..d {
            for jj in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        j[(i * d + r, jj * d + s)] += k[(r, i)] * k[(s, jj)].conj();
                    }
                }
            }
        }
    }
    j
}

/// CPTP diagnostics: trace-preservation residual and the smallest Choi
/// eigenvalue (negative values signal CP violation).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CptpReport {
    pub tp_residual: f64,
    pub min_choi_eig: f64,
}

impl CptpReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.tp_residual <= tol && self.min_choi_eig >= -tol
    }
}

pub fn is_cptp(c: &KrausChannel) -> CptpReport {
    let j = choi(c).symmetrize();
    let eig = linalg::herm_eig(&j).expect("Choi matrix is Hermitian by construction");
    CptpReport {
        tp_residual: c.tp_residual(),
        min_choi_eig: eig.values.first().copied().unwrap_or(0.0),
    }
}

/// CPTP diagnostics for a raw Choi matrix (dim d·d for a d-dimensional
/// channel): TP means Tr_out J = 𝟙 (the first factor is the input).
pub fn choi_cptp_report(j: &CMatrix) -> Result<CptpReport> {
    let d2 = j.rows();
    let d = (d2 as f64).sqrt().round() as usize;
    if d * d != d2 || !j.is_square() {
        return Err(Error::Dimension { expected: "d^2 x d^2".into(), got: format!("{}x{}", j.rows(), j.cols()) });
    }
    let tp_residual = if d == 2 {
        partial_trace(j, Keep::First)?.max_abs_diff(&CMatrix::identity(2))
    } else {
        // General partial trace over the output (second) factor.
        let mut red = CMatrix::zeros(d, d);
        for i in 0..d {
            for jj in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..d {
                    acc += j[(i * d + k, jj * d + k)];
                }
                red[(i, jj)] = acc;
            }
        }
        red.max_abs_diff(&CMatrix::identity(d))
    };
    let eig = linalg::herm_eig(&j.symmetrize())?;
    Ok(CptpReport { tp_residual, min_choi_eig: eig.values.first().copied().unwrap_or(0.0) })
}
