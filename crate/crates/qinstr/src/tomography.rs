//! Shot-based measurement, readout calibration, and state/process
//! reconstruction.
//!
//! Readout on each qubit is a classical assignment channel: the device
//! reports bit i with probability A[i][j] given the qubit is really in j.
//! Calibration is captured by a per-qubit β matrix mapping Pauli
//! expectations onto outcome probabilities, p⃗ = β·(⟨𝟙⟩, ⟨Z⟩); with ideal
//! readout β = [[½, ½], [½, −½]], and the multi-qubit β is the tensor
//! product of the single-qubit ones (so every entry of the two-qubit β has
//! magnitude ¼ in the ideal case). Inverting β turns measured histograms
//! back into Z-string expectation estimates.
//!
//! State tomography measures the state under all 3^n pre-rotation settings
//! drawn from {R_y(−π/2), R_x(π/2), 𝟙} per qubit (mapping X, Y, Z onto the
//! measurement axis), builds a least-squares linear-inversion estimate from
//! the over-specified equation set, and then refines it by maximizing the
//! multinomial likelihood over the Cholesky-style parameterization
//! ρ = T†T/Tr(T†T), which is physical by construction. The optimizer is a
//! derivative-free simplex descent with restarts; its best-so-far trace is
//! monotone.
//!
//! Process tomography of a single-qubit channel sends in the four states
//! {|0⟩, |1⟩, |+⟩, |i⟩}, reconstructs each output, and assembles the χ
//! matrix in the Pauli basis {𝟙, X, Y, Z}, normalized so Tr(χ) = 1 for a
//! trace-preserving map. Sampling noise can make χ unphysical, so a
//! Dykstra-corrected alternating projection in Choi space (eigenvalue
//! clipping ∩ the trace-preservation affine constraint) returns the
//! closest CPTP map within tolerance.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{self, CptpReport, KrausChannel};
use crate::gates;
use crate::linalg::{self, CMatrix, C64};
use crate::qstate::DensityMatrix;
use crate::seeding;
use crate::{Error, Result};

/// Probability floor inside the likelihood; avoids ln(0) on impossible
/// outcomes that nonetheless collected a stray count.
const PROB_FLOOR: f64 = 1e-12;

/// Dykstra projection stopping threshold and iteration cap.
// The loop returns the TP-projected iterate, whose distance to the PSD
// cone is of order the convergence residual; keep the residual two orders
// below the 1e-9 physicality tolerance callers check against.
const CPTP_TOL: f64 = 1e-11;
const CPTP_MAX_ITERS: usize = 100_000;

// ---------------------------------------------------------------------------
// Pre-rotations and measurement settings

/// Pre-measurement rotation on one qubit; each maps one Pauli axis onto Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prerotation {
    /// R_y(−π/2): measures X.
    #[serde(rename = "Ry-90")]
    YMinus90,
    /// R_x(π/2): measures Y.
    #[serde(rename = "Rx90")]
    X90,
    /// Identity: measures Z.
    #[serde(rename = "I")]
    Identity,
}

impl Prerotation {
    pub const ALL: [Prerotation; 3] =
        [Prerotation::YMinus90, Prerotation::X90, Prerotation::Identity];

    pub fn matrix(&self) -> CMatrix {
        match self {
            Prerotation::YMinus90 => gates::ry(-std::f64::consts::FRAC_PI_2),
            Prerotation::X90 => gates::rx(std::f64::consts::FRAC_PI_2),
            Prerotation::Identity => CMatrix::identity(2),
        }
    }
}

/// One measurement setting: a pre-rotation per qubit, qubit 0 first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TomoSetting(pub Vec<Prerotation>);

impl TomoSetting {
    pub fn qubit_count(&self) -> usize {
        self.0.len()
    }

    /// Tensor-product rotation, qubit 0 as the leading factor.
    pub fn matrix(&self) -> CMatrix {
        let mut r = CMatrix::identity(1);
        for p in &self.0 {
            r = r.kron(&p.matrix());
        }
        r
    }
}

/// The complete 3^n settings, outer qubit varying slowest.
pub fn all_settings(qubit_count: usize) -> Vec<TomoSetting> {
    let mut out = vec![Vec::new()];
    for _ in 0..qubit_count {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                Prerotation::ALL.iter().map(move |p| {
                    let mut s = prefix.clone();
                    s.push(*p);
                    s
                })
            })
            .collect();
    }
    out.into_iter().map(TomoSetting).collect()
}

// ---------------------------------------------------------------------------
// Readout model and β calibration

/// Classical readout assignment channels, one 2×2 column-stochastic matrix
/// per qubit: entry [i][j] = P(report i | qubit in j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    per_qubit: Vec<[[f64; 2]; 2]>,
}

impl ReadoutModel {
    pub fn new(per_qubit: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        if per_qubit.is_empty() {
            return Err(Error::InvalidArgument("readout model needs at least one qubit".into()));
        }
        for (q, a) in per_qubit.iter().enumerate() {
            for (col, (&p0, &p1)) in a[0].iter().zip(&a[1]).enumerate() {
                if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&p1) {
                    return Err(Error::InvalidArgument(format!(
                        "readout probabilities for qubit {q} outside [0, 1]"
                    )));
                }
                if (p0 + p1 - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "assignment column {col} of qubit {q} sums to {}",
                        p0 + p1
                    )));
                }
            }
        }
        Ok(ReadoutModel { per_qubit })
    }

    /// Perfect readout on `qubit_count` qubits.
    pub fn ideal(qubit_count: usize) -> Self {
        ReadoutModel { per_qubit: vec![[[1.0, 0.0], [0.0, 1.0]]; qubit_count] }
    }

    /// Equal 0↔1 misassignment probability `flip` on every qubit.
    pub fn symmetric(qubit_count: usize, flip: f64) -> Result<Self> {
        ReadoutModel::new(vec![[[1.0 - flip, flip], [flip, 1.0 - flip]]; qubit_count])
    }

    pub fn qubit_count(&self) -> usize {
        self.per_qubit.len()
    }

    /// Full assignment matrix on the 2^n outcome space.
    pub fn assignment_full(&self) -> CMatrix {
        kron_real(&self.per_qubit)
    }
}

/// Per-qubit readout calibration matrices; the n-qubit β is their tensor
/// product. `correct` inverts the calibration, turning an outcome histogram
/// into Z-string expectation estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaMatrix {
    per_qubit: Vec<[[f64; 2]; 2]>,
}

/// β for a given readout model: β_q = A_q · [[½, ½], [½, −½]], from
/// p_true = ((1+⟨Z⟩)/2, (1−⟨Z⟩)/2) composed with the assignment channel.
pub fn beta_from_readout(rm: &ReadoutModel) -> BetaMatrix {
    let per_qubit = rm
        .per_qubit
        .iter()
        .map(|a| {
            [
                [(a[0][0] + a[0][1]) / 2.0, (a[0][0] - a[0][1]) / 2.0],
                [(a[1][0] + a[1][1]) / 2.0, (a[1][0] - a[1][1]) / 2.0],
            ]
        })
        .collect();
    BetaMatrix { per_qubit }
}

impl BetaMatrix {
    pub fn qubit_count(&self) -> usize {
        self.per_qubit.len()
    }

    pub fn single(&self, qubit: usize) -> [[f64; 2]; 2] {
        self.per_qubit[qubit]
    }

    /// Full 2^n × 2^n map from Z-string expectations to probabilities.
    pub fn full(&self) -> CMatrix {
        kron_real(&self.per_qubit)
    }

    fn inverse_full(&self) -> Result<CMatrix> {
        let inverses = self
            .per_qubit
            .iter()
            .map(|b| {
                let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
                if det.abs() < 1e-12 {
                    return Err(Error::InvalidArgument(
                        "beta matrix is singular and cannot correct readout".into(),
                    ));
                }
                Ok([[b[1][1] / det, -b[0][1] / det], [-b[1][0] / det, b[0][0] / det]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(kron_real(&inverses))
    }

    /// Z-string expectation estimates from an outcome distribution.
    /// Index s flags which qubits carry a Z (qubit 0 = high bit); entry 0
    /// is the trivial string and comes back ≈ 1 for normalized input.
    pub fn correct(&self, probabilities: &[f64]) -> Result<Vec<f64>> {
        let dim = 1usize << self.qubit_count();
        if probabilities.len() != dim {
            return Err(Error::Dimension {
                expected: format!("{dim} outcome probabilities"),
                got: probabilities.len().to_string(),
            });
        }
        let inv = self.inverse_full()?;
        Ok((0..dim)
            .map(|s| (0..dim).map(|k| inv[(s, k)].re * probabilities[k]).sum())
            .collect())
    }
}

/// Tensor product of per-qubit real 2×2 matrices, first qubit leading.
fn kron_real(per_qubit: &[[[f64; 2]; 2]]) -> CMatrix {
    let mut m = CMatrix::identity(1);
    for a in per_qubit {
        let block = CMatrix::from_real_rows(&[a[0].to_vec(), a[1].to_vec()]);
        m = m.kron(&block);
    }
    m
}

// ---------------------------------------------------------------------------
// Measurement simulation

/// Exact outcome distribution for one setting under a readout model:
/// Born probabilities of the rotated state pushed through the assignment
/// channels.
pub fn outcome_probabilities(
    m: &DensityMatrix,
    setting: &TomoSetting,
    rm: &ReadoutModel,
) -> Result<Vec<f64>> {
    let n = setting.qubit_count();
    if n != rm.qubit_count() {
        return Err(Error::Dimension {
            expected: format!("{} pre-rotations", rm.qubit_count()),
            got: n.to_string(),
        });
    }
    let dim = 1usize << n;
    if m.dim() != dim {
        return Err(Error::Dimension {
            expected: format!("{dim}x{dim}"),
            got: format!("{0}x{0}", m.dim()),
        });
    }
    let rotated = setting.matrix().conjugate(m.matrix());
    let born: Vec<f64> = (0..dim).map(|k| rotated[(k, k)].re.max(0.0)).collect();
    let a = rm.assignment_full();
    Ok((0..dim).map(|i| (0..dim).map(|k| a[(i, k)].re * born[k]).sum()).collect())
}

/// Counts from one measurement setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TomoRecordWire", into = "TomoRecordWire")]
pub struct TomoRecord {
    pub setting: TomoSetting,
    /// Histogram over computational outcomes; fractional values are allowed
    /// so exact probabilities can flow through the same pipeline.
    pub counts: Vec<f64>,
    pub shots: f64,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct TomoRecordWire {
    setting: TomoSetting,
    counts: BTreeMap<String, f64>,
    shots: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl From<TomoRecord> for TomoRecordWire {
    fn from(r: TomoRecord) -> Self {
        let n = r.setting.qubit_count();
        let counts = r
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (format!("{k:0width$b}", width = n), c))
            .collect();
        TomoRecordWire { setting: r.setting, counts, shots: r.shots, seed: r.seed }
    }
}

impl TryFrom<TomoRecordWire> for TomoRecord {
    type Error = Error;

    fn try_from(w: TomoRecordWire) -> Result<Self> {
        let n = w.setting.qubit_count();
        let dim = 1usize << n;
        let mut counts = vec![0.0; dim];
        for (key, value) in &w.counts {
            let idx = usize::from_str_radix(key, 2).map_err(|_| {
                Error::InvalidArgument(format!("outcome key `{key}` is not a bit string"))
            })?;
            if key.len() != n || idx >= dim {
                return Err(Error::InvalidArgument(format!(
                    "outcome key `{key}` does not address {n} qubits"
                )));
            }
            counts[idx] = *value;
        }
        Ok(TomoRecord { setting: w.setting, counts, shots: w.shots, seed: w.seed })
    }
}

/// Multinomial sampling of one setting; deterministic per seed.
pub fn measure_shots(
    m: &DensityMatrix,
    setting: &TomoSetting,
    shots: u64,
    rm: &ReadoutModel,
    seed: u64,
) -> Result<TomoRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let p = outcome_probabilities(m, setting, rm)?;
    let total: f64 = p.iter().sum();
    let mut counts = vec![0.0; p.len()];
    let mut rng = seeding::stream_rng(seed, 0);
    for _ in 0..shots {
        let mut u = rng.gen::<f64>() * total;
        let mut outcome = p.len() - 1;
        for (k, &pk) in p.iter().enumerate() {
            if u < pk {
                outcome = k;
                break;
            }
            u -= pk;
        }
        counts[outcome] += 1.0;
    }
    Ok(TomoRecord { setting: setting.clone(), counts, shots: shots as f64, seed: Some(seed) })
}

/// Sample every setting of the full tomography set, one derived RNG stream
/// per setting so records are independent and order-insensitive.
pub fn measure_all(
    m: &DensityMatrix,
    shots: u64,
    rm: &ReadoutModel,
    base_seed: u64,
) -> Result<Vec<TomoRecord>> {
    all_settings(rm.qubit_count())
        .iter()
        .enumerate()
        .map(|(i, s)| measure_shots(m, s, shots, rm, seeding::derive_seed(base_seed, i as u64)))
        .collect()
}

/// Infinite-shot records: counts are the exact outcome probabilities.
pub fn exact_records(m: &DensityMatrix, rm: &ReadoutModel) -> Result<Vec<TomoRecord>> {
    all_settings(rm.qubit_count())
        .iter()
        .map(|s| {
            Ok(TomoRecord {
                setting: s.clone(),
                counts: outcome_probabilities(m, s, rm)?,
                shots: 1.0,
                seed: None,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// State tomography

/// Reconstruction result with diagnostic detail.
#[derive(Clone, Debug)]
pub struct TomoFit {
    pub dm: DensityMatrix,
    /// Best negative log-likelihood after each optimizer iteration;
    /// non-increasing by construction.
    pub nll_trace: Vec<f64>,
    /// True when linear inversion was degenerate and the maximally mixed
    /// state seeded the likelihood fit instead.
    pub mixed_seed: bool,
}

/// Maximum-likelihood state reconstruction from a complete set of
/// measurement records. `beta` both corrects the linear-inversion seed and
/// defines the likelihood's outcome probabilities.
pub fn state_tomography(records: &[TomoRecord], beta: &BetaMatrix) -> Result<DensityMatrix> {
    state_tomography_detailed(records, beta).map(|fit| fit.dm)
}

pub fn state_tomography_detailed(records: &[TomoRecord], beta: &BetaMatrix) -> Result<TomoFit> {
    let n = beta.qubit_count();
    let dim = 1usize << n;
    if n > 2 {
        return Err(Error::InvalidArgument(format!(
            "state tomography supports 1 or 2 qubits, got {n}"
        )));
    }
    for r in records {
        if r.setting.qubit_count() != n || r.counts.len() != dim {
            return Err(Error::Dimension {
                expected: format!("{n}-qubit records"),
                got: format!("{}-qubit setting", r.setting.qubit_count()),
            });
        }
        if r.counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("record with empty counts".into()));
        }
    }
    for required in all_settings(n) {
        if !records.iter().any(|r| r.setting == required) {
            return Err(Error::InvalidArgument(format!(
                "measurement settings are incomplete: missing {:?}",
                required.0
            )));
        }
    }

    let (seed_dm, mixed_seed) = linear_inversion_seed(records, beta, n)?;
    let t0 = factor_params(&seed_dm, dim)?;

    // Precompute per-record rotations and the β map once; the likelihood
    // is evaluated thousands of times.
    let rotations: Vec<CMatrix> = records.iter().map(|r| r.setting.matrix()).collect();
    let beta_full = beta.full();
    let nll = |params: &[f64]| -> f64 {
        let rho = match rho_from_params(params, dim) {
            Some(r) => r,
            None => return f64::MAX / 4.0,
        };
        let mut total = 0.0;
        for (r, rot) in records.iter().zip(&rotations) {
            let rotated = rot.conjugate(&rho);
            let born: Vec<f64> = (0..dim).map(|k| rotated[(k, k)].re.max(0.0)).collect();
            let zvec = z_string_expectations(&born);
            for (k, &c) in r.counts.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let p: f64 = (0..dim).map(|s| beta_full[(k, s)].re * zvec[s]).sum();
                total -= c * p.max(PROB_FLOOR).ln();
            }
        }
        total
    };

    let seed_f = nll(&t0);
    let mut best = t0.clone();
    let mut best_f = seed_f;
    let mut trace = vec![best_f];
    for &scale in &[0.05, 0.01, 0.002] {
        let (x, f, mut run_trace) = nelder_mead(&nll, &best, best_f, scale, 400 * dim * dim);
        trace.append(&mut run_trace);
        if f < best_f {
            best_f = f;
            best = x;
        }
    }

    // Within numerical resolution of the likelihood the basin is flat;
    // noise-level "improvements" would otherwise random-walk the estimate
    // away from a seed that is already optimal (exact-probability input).
    if seed_f - best_f <= 1e-9 * (1.0 + seed_f.abs()) {
        best = t0;
    }
    let rho = rho_from_params(&best, dim)
        .ok_or_else(|| Error::InvalidArgument("likelihood optimum degenerated".into()))?;
    Ok(TomoFit { dm: DensityMatrix::new(rho)?, nll_trace: trace, mixed_seed })
}

/// Z-string expectations of an outcome distribution: ⟨Z_s⟩ with a Z on
/// every qubit flagged in s (qubit 0 = high bit).
fn z_string_expectations(probabilities: &[f64]) -> Vec<f64> {
    let dim = probabilities.len();
    (0..dim)
        .map(|s| {
            probabilities
                .iter()
                .enumerate()
                .map(|(k, &p)| if (k & s).count_ones() % 2 == 0 { p } else { -p })
                .sum()
        })
        .collect()
}

fn pauli1(i: usize) -> CMatrix {
    match i {
        0 => CMatrix::identity(2),
        1 => gates::pauli_x(),
        2 => gates::pauli_y(),
        _ => gates::pauli_z(),
    }
}

/// Pauli string with base-4 digits of `idx`, qubit 0 as the most
/// significant digit.
fn pauli_string(idx: usize, qubit_count: usize) -> CMatrix {
    let mut m = CMatrix::identity(1);
    for q in 0..qubit_count {
        let digit = (idx >> (2 * (qubit_count - 1 - q))) & 3;
        m = m.kron(&pauli1(digit));
    }
    m
}

/// Least-squares solve of the over-specified rotated-expectation equations,
/// then an eigenvalue clip to the physical cone. Falls back to the
/// maximally mixed state when the normal equations are degenerate.
fn linear_inversion_seed(
    records: &[TomoRecord],
    beta: &BetaMatrix,
    n: usize,
) -> Result<(CMatrix, bool)> {
    let dim = 1usize << n;
    let unknowns = dim * dim - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for r in records {
        let total: f64 = r.counts.iter().sum();
        let p_hat: Vec<f64> = r.counts.iter().map(|c| c / total).collect();
        let zvec = beta.correct(&p_hat)?;
        let rot = r.setting.matrix();
        for (s, &z) in zvec.iter().enumerate().skip(1) {
            // Observable measured by Z-string s under this rotation.
            let zs = pauli_string(z_string_pauli_index(s, n), n);
            let obs = rot.adjoint().matmul(&zs).matmul(&rot);
            let row = (1..=unknowns)
                .map(|q| obs.matmul(&pauli_string(q, n)).trace().re / dim as f64)
                .collect();
            rows.push(row);
            rhs.push(z);
        }
    }

    // Normal equations G x = r.
    let mut g = vec![vec![0.0; unknowns]; unknowns];
    let mut r_vec = vec![0.0; unknowns];
    for (row, &b) in rows.iter().zip(&rhs) {
        for i in 0..unknowns {
            r_vec[i] += row[i] * b;
            for j in 0..unknowns {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    let coeffs = match solve_real(g, r_vec) {
        Some(x) => x,
        None => return Ok((CMatrix::identity(dim).scale_re(1.0 / dim as f64), true)),
    };

    let mut rho = CMatrix::identity(dim);
    for (q, &c) in coeffs.iter().enumerate() {
        rho = rho.add(&pauli_string(q + 1, n).scale_re(c));
    }
    rho = rho.scale_re(1.0 / dim as f64);

    // Clip to the physical cone and keep strictly positive for factoring.
    let eig = linalg::herm_eig(&rho.symmetrize())?;
    let mut clipped = CMatrix::zeros(dim, dim);
    let mut total = 0.0;
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam > 0.0 {
            total += lam;
            for i in 0..dim {
                for j in 0..dim {
                    clipped[(i, j)] += eig.vectors[(i, k)] * eig.vectors[(j, k)].conj() * lam;
                }
            }
        }
    }
    if total <= 0.0 {
        return Ok((CMatrix::identity(dim).scale_re(1.0 / dim as f64), true));
    }
    clipped = clipped.scale_re(1.0 / total);
    let jitter = 1e-9;
    let seeded = clipped
        .add(&CMatrix::identity(dim).scale_re(jitter))
        .scale_re(1.0 / (1.0 + dim as f64 * jitter));
    Ok((seeded, false))
}

/// Pauli-string index (base 4, digits ∈ {0: 𝟙, 3: Z}) of Z-string s.
fn z_string_pauli_index(s: usize, n: usize) -> usize {
    let mut idx = 0;
    for q in 0..n {
        let bit = (s >> (n - 1 - q)) & 1;
        idx = idx * 4 + if bit == 1 { 3 } else { 0 };
    }
    idx
}

/// Gaussian elimination with partial pivoting; None on a degenerate pivot.
pub(crate) fn solve_real(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in col + 1..k {
            let f = a[row][col] / pivot_row[col];
            for (c, &pv) in pivot_row.iter().enumerate().skip(col) {
                a[row][c] -= f * pv;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in row + 1..k {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Parameter layout of the lower-triangular factor T with ρ = T†T/Tr(T†T):
/// row-by-row, diagonal entries real, off-diagonal entries (re, im).
fn rho_from_params(params: &[f64], dim: usize) -> Option<CMatrix> {
    let mut t = CMatrix::zeros(dim, dim);
    let mut at = 0;
    for i in 0..dim {
        for j in 0..=i {
            if i == j {
                t[(i, j)] = C64::new(params[at], 0.0);
                at += 1;
            } else {
                t[(i, j)] = C64::new(params[at], params[at + 1]);
                at += 2;
            }
        }
    }
    let g = t.adjoint().matmul(&t);
    let tr = g.trace().re;
    if tr < 1e-14 {
        return None;
    }
    Some(g.scale_re(1.0 / tr))
}

/// Lower-triangular T with T†T = m, via Cholesky in reversed index order.
fn factor_params(m: &CMatrix, dim: usize) -> Result<Vec<f64>> {
    let flip = CMatrix::from_fn(dim, dim, |i, j| {
        if i + j == dim - 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let reversed = flip.matmul(m).matmul(&flip);
    let l = cholesky_lower(&reversed)?;
    let t = flip.matmul(&l.adjoint()).matmul(&flip);
    let mut params = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..=i {
            if i == j {
                params.push(t[(i, j)].re);
            } else {
                params.push(t[(i, j)].re);
                params.push(t[(i, j)].im);
            }
        }
    }
    Ok(params)
}

fn cholesky_lower(m: &CMatrix) -> Result<CMatrix> {
    let dim = m.rows();
    let mut l = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            if i == j {
                if acc.re <= 0.0 {
                    return Err(Error::NotPositiveSemidefinite { min_eig: acc.re });
                }
                l[(i, j)] = C64::new(acc.re.sqrt(), 0.0);
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Standard simplex descent (reflection/expansion/contraction/shrink).
/// Returns the best vertex, its value, and the best-so-far value after each
/// iteration.
pub(crate) fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    f0: f64,
    scale: f64,
    max_iters: usize,
) -> (Vec<f64>, f64, Vec<f64>) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += scale;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut trace = Vec::with_capacity(max_iters);
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best_f = simplex[0].1;
        let worst_f = simplex[dim].1;
        trace.push(best_f);
        if worst_f - best_f < 1e-10 * (1.0 + best_f.abs()) {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|c| simplex[..dim].iter().map(|(x, _)| x[c]).sum::<f64>() / dim as f64)
            .collect();
        let blend = |alpha: f64| -> Vec<f64> {
            (0..dim).map(|c| centroid[c] + alpha * (simplex[dim].0[c] - centroid[c])).collect()
        };

        let reflected = blend(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = blend(-2.0);
            let fe = f(&expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let contracted = blend(0.5);
            let fc = f(&contracted);
            if fc < simplex[dim].1 {
                simplex[dim] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                for k in 1..=dim {
                    let x: Vec<f64> = (0..dim)
                        .map(|c| simplex[0].0[c] + 0.5 * (simplex[k].0[c] - simplex[0].0[c]))
                        .collect();
                    let fx = f(&x);
                    simplex[k] = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, trace)
}

// ---------------------------------------------------------------------------
// Process tomography

/// Reconstructed channel outputs for the four spanning input states.
#[derive(Clone, Debug)]
pub struct ProcessOutputs {
    pub zero: DensityMatrix,
    pub one: DensityMatrix,
    pub plus: DensityMatrix,
    pub plus_i: DensityMatrix,
}

impl ProcessOutputs {
    pub fn new(
        zero: DensityMatrix,
        one: DensityMatrix,
        plus: DensityMatrix,
        plus_i: DensityMatrix,
    ) -> Result<Self> {
        for dm in [&zero, &one, &plus, &plus_i] {
            if dm.dim() != 2 {
                return Err(Error::Dimension {
                    expected: "2x2".into(),
                    got: format!("{0}x{0}", dm.dim()),
                });
            }
        }
        Ok(ProcessOutputs { zero, one, plus, plus_i })
    }
}

/// The four spanning input states, in the order (|0⟩, |1⟩, |+⟩, |i⟩).
pub fn process_inputs() -> [DensityMatrix; 4] {
    ["0", "1", "+", "+i"].map(|label| {
        crate::qstate::pure_state(label).expect("cardinal labels are valid")
    })
}

/// χ matrix of a single-qubit map in the Pauli basis {𝟙, X, Y, Z},
/// normalized to Tr(χ) = 1 for a trace-preserving map:
/// E(ρ) = Σ_mn χ_mn P_m ρ P_n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProcessMapWire", into = "ProcessMapWire")]
pub struct ProcessMap {
    chi: CMatrix,
    cptp_projected: bool,
}

#[derive(Serialize, Deserialize)]
struct ProcessMapWire {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    basis: String,
    cptp_projected: bool,
}

impl From<ProcessMap> for ProcessMapWire {
    fn from(p: ProcessMap) -> Self {
        let grid = |f: fn(&C64) -> f64| {
            (0..4).map(|i| (0..4).map(|j| f(&p.chi[(i, j)])).collect()).collect()
        };
        ProcessMapWire {
            re: grid(|c| c.re),
            im: grid(|c| c.im),
            basis: "IXYZ".into(),
            cptp_projected: p.cptp_projected,
        }
    }
}

impl TryFrom<ProcessMapWire> for ProcessMap {
    type Error = Error;

    fn try_from(w: ProcessMapWire) -> Result<Self> {
        if w.basis != "IXYZ" {
            return Err(Error::InvalidArgument(format!(
                "unsupported process basis `{}`",
                w.basis
            )));
        }
        if w.re.len() != 4 || w.im.len() != 4 {
            return Err(Error::Dimension { expected: "4x4".into(), got: w.re.len().to_string() });
        }
        let chi = CMatrix::from_fn(4, 4, |i, j| C64::new(w.re[i][j], w.im[i][j]));
        ProcessMap::new(chi, w.cptp_projected)
    }
}

impl ProcessMap {
    pub fn new(chi: CMatrix, cptp_projected: bool) -> Result<Self> {
        if chi.rows() != 4 || chi.cols() != 4 {
            return Err(Error::Dimension {
                expected: "4x4".into(),
                got: format!("{}x{}", chi.rows(), chi.cols()),
            });
        }
        let residual = chi.hermiticity_residual();
        if residual > 1e-8 {
            return Err(Error::NotHermitian { residual });
        }
        Ok(ProcessMap { chi: chi.symmetrize(), cptp_projected })
    }

    pub fn chi(&self) -> &CMatrix {
        &self.chi
    }

    pub fn cptp_projected(&self) -> bool {
        self.cptp_projected
    }

    /// The identity process: all weight on the 𝟙𝟙 element.
    pub fn identity() -> Self {
        let mut chi = CMatrix::zeros(4, 4);
        chi[(0, 0)] = C64::new(1.0, 0.0);
        ProcessMap { chi, cptp_projected: true }
    }

    /// χ of an operator-sum channel via Pauli expansion of each Kraus
    /// operator: K = Σ_m a_m P_m with a_m = Tr(P_m K)/2, χ_mn = Σ a_m a̅_n.
    pub fn from_kraus(c: &KrausChannel) -> Result<Self> {
        if c.dim() != 2 {
            return Err(Error::Dimension {
                expected: "2x2 channel".into(),
                got: format!("{0}x{0}", c.dim()),
            });
        }
        let mut chi = CMatrix::zeros(4, 4);
        for k in c.kraus() {
            let a: Vec<C64> =
                (0..4).map(|m| pauli1(m).matmul(k).trace() * C64::new(0.5, 0.0)).collect();
            for m in 0..4 {
                for n in 0..4 {
                    chi[(m, n)] += a[m] * a[n].conj();
                }
            }
        }
        ProcessMap::new(chi, false)
    }

    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        ProcessMap::from_kraus(&KrausChannel::from_unitary(u)?)
    }

    /// Choi matrix (input system first) of this χ.
    pub fn choi(&self) -> CMatrix {
        let w = pauli_vec_basis();
        w.matmul(&self.chi).matmul(&w.adjoint())
    }

    /// TP residual and smallest Choi eigenvalue.
    pub fn cptp_report(&self) -> Result<CptpReport> {
        channels::choi_cptp_report(&self.choi())
    }

    /// Apply the map to a state: E(ρ) = Σ χ_mn P_m ρ P_n.
    pub fn apply(&self, m: &CMatrix) -> Result<CMatrix> {
        if m.rows() != 2 || m.cols() != 2 {
            return Err(Error::Dimension {
                expected: "2x2".into(),
                got: format!("{}x{}", m.rows(), m.cols()),
            });
        }
        let mut out = CMatrix::zeros(2, 2);
        for p in 0..4 {
            for q in 0..4 {
                let term = pauli1(p).matmul(m).matmul(&pauli1(q)).scale(self.chi[(p, q)]);
                out = out.add(&term);
            }
        }
        Ok(out)
    }
}

/// Columns are the vectorized Paulis |w_m⟩ with components
/// w_m[(i, r)] = (P_m)_{r i}, the basis in which χ ↔ Choi is a rescaled
/// rotation: J = W χ W†, χ = W† J W / 4.
fn pauli_vec_basis() -> CMatrix {
    CMatrix::from_fn(4, 4, |row, m| {
        let (i, r) = (row / 2, row % 2);
        pauli1(m)[(r, i)]
    })
}

/// χ from the four reconstructed mappings. The coherences are recovered
/// linearly: E(|0⟩⟨1|) = E_+ + iE_i − (1+i)/2 · (E_0 + E_1).
pub fn process_tomography(outputs: &ProcessOutputs) -> Result<ProcessMap> {
    let e00 = outputs.zero.matrix();
    let e11 = outputs.one.matrix();
    let sum = e00.add(e11);
    let e01 = outputs
        .plus
        .matrix()
        .add(&outputs.plus_i.matrix().scale(C64::new(0.0, 1.0)))
        .sub(&sum.scale(C64::new(0.5, 0.5)));
    let e10 = e01.adjoint();

    let mut j = CMatrix::zeros(4, 4);
    for (i, jj, block) in [(0, 0, e00), (1, 1, e11)] {
        for r in 0..2 {
            for s in 0..2 {
                j[(i * 2 + r, jj * 2 + s)] = block[(r, s)];
            }
        }
    }
    for r in 0..2 {
        for s in 0..2 {
            j[(r, 2 + s)] = e01[(r, s)];
            j[(2 + r, s)] = e10[(r, s)];
        }
    }

    let w = pauli_vec_basis();
    let chi = w.adjoint().matmul(&j).matmul(&w).scale_re(0.25);
    ProcessMap::new(chi, false)
}

/// Reconstruction mode for channel process tomography.
#[derive(Clone, Debug)]
pub enum TomoMode {
    /// Use exact output states directly.
    Exact,
    /// Reconstruct each output by shot-based state tomography.
    Shots { shots: u64, rm: ReadoutModel, seed: u64 },
}

/// End-to-end process tomography of a single-qubit channel: prepare the
/// four spanning inputs, push them through the channel, reconstruct, and
/// assemble χ (unprojected; follow with [`cptp_project`]).
pub fn process_tomography_of_channel(c: &KrausChannel, mode: &TomoMode) -> Result<ProcessMap> {
    let mut outputs = Vec::with_capacity(4);
    for (index, input) in process_inputs().iter().enumerate() {
        let exact = channels::apply(c, input)?;
        let reconstructed = match mode {
            TomoMode::Exact => exact,
            TomoMode::Shots { shots, rm, seed } => {
                if rm.qubit_count() != 1 {
                    return Err(Error::InvalidArgument(
                        "channel tomography needs a single-qubit readout model".into(),
                    ));
                }
                let records =
                    measure_all(&exact, *shots, rm, seeding::derive_seed(*seed, index as u64))?;
                state_tomography(&records, &beta_from_readout(rm))?
            }
        };
        outputs.push(reconstructed);
    }
    let [zero, one, plus, plus_i]: [DensityMatrix; 4] =
        outputs.try_into().expect("four inputs produce four outputs");
    process_tomography(&ProcessOutputs::new(zero, one, plus, plus_i)?)
}

/// Dykstra-corrected alternating projection onto CP (Choi eigenvalue clip)
/// ∩ TP (affine partial-trace constraint), in Choi space.
pub fn cptp_project(p: &ProcessMap) -> Result<ProcessMap> {
    let mut x = p.choi().symmetrize();
    let mut p_inc = CMatrix::zeros(4, 4);
    let mut q_inc = CMatrix::zeros(4, 4);
    let mut residual = f64::MAX;
    for _ in 0..CPTP_MAX_ITERS {
        let y = psd_clip(&x.add(&p_inc))?;
        p_inc = x.add(&p_inc).sub(&y);
        let z = tp_project(&y.add(&q_inc))?;
        q_inc = y.add(&q_inc).sub(&z);
        residual = z.max_abs_diff(&y);
        x = z;
        if residual < CPTP_TOL {
            let w = pauli_vec_basis();
            let chi = w.adjoint().matmul(&x).matmul(&w).scale_re(0.25);
            return ProcessMap::new(chi, true);
        }
    }
    Err(Error::NoConvergence { what: "CPTP projection", residual })
}

fn psd_clip(j: &CMatrix) -> Result<CMatrix> {
    linalg::func_herm(&j.symmetrize(), |lam| C64::new(lam.max(0.0), 0.0))
}

/// Orthogonal projection onto {J : Tr_out J = 𝟙}; the output system is the
/// second tensor factor.
fn tp_project(j: &CMatrix) -> Result<CMatrix> {
    let reduced = linalg::partial_trace(j, linalg::Keep::First)?;
    let delta = reduced.sub(&CMatrix::identity(2));
    Ok(j.sub(&delta.kron(&CMatrix::identity(2)).scale_re(0.5)))
}

// ---------------------------------------------------------------------------
// Fidelity metrics

/// F_p(χ, χ′) = Tr(√(√χ′ χ √χ′))²; both inputs are eigenvalue-clipped to
/// the PSD cone first so that nearly-physical maps are comparable.
pub fn process_fidelity(a: &ProcessMap, b: &ProcessMap) -> Result<f64> {
    let sqrt_b = linalg::func_herm(&b.chi.symmetrize(), |lam| C64::new(lam.max(0.0).sqrt(), 0.0))?;
    let inner = sqrt_b.matmul(&a.chi).matmul(&sqrt_b).symmetrize();
    let root = linalg::func_herm(&inner, |lam| C64::new(lam.max(0.0).sqrt(), 0.0))?;
    let f = root.trace().re.powi(2);
    Ok(f.clamp(0.0, 1.0))
}

/// Average gate fidelity from process fidelity: F_g = (d·F_p + 1)/(d + 1).
pub fn gate_fidelity(a: &ProcessMap, b: &ProcessMap, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let fp = process_fidelity(a, b)?;
    Ok((d as f64 * fp + 1.0) / (d as f64 + 1.0))
}
