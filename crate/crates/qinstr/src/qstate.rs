//! Density matrices and state-level metrics.
//!
//! States are validated at construction: Hermitian within 1e-9, unit trace
//! within 1e-9, eigenvalues ≥ −1e-9. Entropy is reported in nats throughout
//! (S = −Tr ρ ln ρ); callers wanting bits must divide by ln 2.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{self, partial_trace, sqrtm_psd, trace_norm, CMatrix, Keep, C64};
use crate::{Error, Result};

/// Hermiticity / trace tolerance for accepting a candidate density matrix.
pub const DM_TOL: f64 = 1e-9;

/// Validated density matrix (2×2 or 4×4 in this crate).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    /// Optional human-readable tag carried through outputs ("+i", "sigma_in", ...).
    pub label: Option<String>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace, and positivity.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Dimension {
                expected: "square".into(),
                got: format!("{}x{}", mat.rows(), mat.cols()),
            });
        }
        let residual = mat.hermiticity_residual();
        if residual > DM_TOL {
            return Err(Error::NotHermitian { residual });
        }
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > DM_TOL || trace.im.abs() > DM_TOL {
            return Err(Error::TraceNotOne { trace: trace.re });
        }
        let eig = linalg::herm_eig(&mat.symmetrize())?;
        let min_eig = eig.values.first().copied().unwrap_or(0.0);
        if min_eig < -DM_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eig });
        }
        Ok(DensityMatrix { mat, label: None })
    }

    /// Clips negative eigenvalues to zero and renormalizes the trace,
    /// returning the repaired state and the total clipped magnitude.
    ///
    /// This is the acceptance path for finite-sampling artifacts (e.g. linear
    /// tomography inversions); the magnitude should be logged by callers so
    /// silent large repairs cannot hide.
    pub fn repair(mat: CMatrix) -> Result<(Self, f64)> {
        if !mat.is_square() {
            return Err(Error::Dimension {
                expected: "square".into(),
                got: format!("{}x{}", mat.rows(), mat.cols()),
            });
        }
        let residual = mat.hermiticity_residual();
        if residual > 1e-6 {
            return Err(Error::NotHermitian { residual });
        }
        let eig = linalg::herm_eig(&mat.symmetrize())?;
        let clipped: f64 = eig.values.iter().filter(|l| **l < 0.0).map(|l| -l).sum();
        let n = eig.values.len();
        let mut d = CMatrix::zeros(n, n);
        let total: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
        if total <= 0.0 {
            return Err(Error::TraceNotOne { trace: 0.0 });
        }
        for i in 0..n {
            d[(i, i)] = C64::new(eig.values[i].max(0.0) / total, 0.0);
        }
        let repaired = eig.vectors.matmul(&d).matmul(&eig.vectors.adjoint());
        Ok((DensityMatrix { mat: repaired, label: None }, clipped))
    }

    /// Rank-1 projector |ψ⟩⟨ψ| from an unnormalized ket.
    pub fn from_ket(ket: &[C64]) -> Result<Self> {
        let norm_sq: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(Error::InvalidArgument("zero ket".into()));
        }
        let n = ket.len();
        let mat = CMatrix::from_fn(n, n, |i, j| ket[i] * ket[j].conj() / norm_sq);
        DensityMatrix::new(mat)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            mat: CMatrix::identity(dim).scale_re(1.0 / dim as f64),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Tr(ρ²); 1 for pure states, 1/d for the maximally mixed state.
    pub fn purity(&self) -> f64 {
        self.mat.matmul(&self.mat).trace().re
    }

    /// U ρ U† as a new validated state.
    pub fn evolve(&self, u: &CMatrix) -> Result<Self> {
        DensityMatrix::new(u.conjugate(&self.mat))
    }

    /// Reduced state of one qubit of a two-qubit state.
    pub fn reduce(&self, keep: Keep) -> Result<Self> {
        DensityMatrix::new(partial_trace(&self.mat, keep)?)
    }
}

/// The six cardinal pure states of the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinal {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl Cardinal {
    pub const ALL: [Cardinal; 6] = [
        Cardinal::Zero,
        Cardinal::One,
        Cardinal::Plus,
        Cardinal::Minus,
        Cardinal::PlusI,
        Cardinal::MinusI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Cardinal::Zero => "0",
            Cardinal::One => "1",
            Cardinal::Plus => "+",
            Cardinal::Minus => "-",
            Cardinal::PlusI => "+i",
            Cardinal::MinusI => "-i",
        }
    }

    pub fn ket(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Cardinal::Zero => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            Cardinal::One => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            Cardinal::Plus => [C64::new(h, 0.0), C64::new(h, 0.0)],
            Cardinal::Minus => [C64::new(h, 0.0), C64::new(-h, 0.0)],
            Cardinal::PlusI => [C64::new(h, 0.0), C64::new(0.0, h)],
            Cardinal::MinusI => [C64::new(h, 0.0), C64::new(0.0, -h)],
        }
    }

    pub fn bloch(self) -> BlochVector {
        match self {
            Cardinal::Zero => BlochVector { x: 0.0, y: 0.0, z: 1.0 },
            Cardinal::One => BlochVector { x: 0.0, y: 0.0, z: -1.0 },
            Cardinal::Plus => BlochVector { x: 1.0, y: 0.0, z: 0.0 },
            Cardinal::Minus => BlochVector { x: -1.0, y: 0.0, z: 0.0 },
            Cardinal::PlusI => BlochVector { x: 0.0, y: 1.0, z: 0.0 },
            Cardinal::MinusI => BlochVector { x: 0.0, y: -1.0, z: 0.0 },
        }
    }
}

impl std::str::FromStr for Cardinal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Cardinal::Zero),
            "1" => Ok(Cardinal::One),
            "+" => Ok(Cardinal::Plus),
            "-" => Ok(Cardinal::Minus),
            "+i" => Ok(Cardinal::PlusI),
            "-i" => Ok(Cardinal::MinusI),
            other => Err(Error::UnknownState(other.into())),
        }
    }
}

/// Projector onto one of the six cardinal states, by label.
pub fn pure_state(name: &str) -> Result<DensityMatrix> {
    let cardinal: Cardinal = name.parse()?;
    Ok(cardinal_state(cardinal))
}

/// Projector onto a cardinal state.
pub fn cardinal_state(cardinal: Cardinal) -> DensityMatrix {
    DensityMatrix::from_ket(&cardinal.ket())
        .expect("cardinal kets are normalized")
        .with_label(cardinal.label())
}

/// Bloch-sphere coordinates of a single-qubit state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// ρ = (𝟙 + x·X + y·Y + z·Z)/2; requires |r| ≤ 1 within tolerance.
    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        if self.norm() > 1.0 + DM_TOL {
            return Err(Error::InvalidArgument(format!(
                "Bloch vector norm {} exceeds 1",
                self.norm()
            )));
        }
        let m = CMatrix::from_rows(&[
            vec![C64::new((1.0 + self.z) / 2.0, 0.0), C64::new(self.x / 2.0, -self.y / 2.0)],
            vec![C64::new(self.x / 2.0, self.y / 2.0), C64::new((1.0 - self.z) / 2.0, 0.0)],
        ]);
        DensityMatrix::new(m)
    }
}

/// Bloch vector (Tr ρX, Tr ρY, Tr ρZ) of a single-qubit state.
pub fn bloch(m: &DensityMatrix) -> Result<BlochVector> {
    if m.dim() != 2 {
        return Err(Error::Dimension { expected: "2x2".into(), got: format!("{0}x{0}", m.dim()) });
    }
    let a = m.matrix();
    Ok(BlochVector {
        x: 2.0 * a[(0, 1)].re,
        y: -2.0 * a[(0, 1)].im,
        z: a[(0, 0)].re - a[(1, 1)].re,
    })
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: format!("{0}x{0}", a.dim()),
            got: format!("{0}x{0}", b.dim()),
        });
    }
    Ok(())
}

/// Tr √m for Hermitian PSD `m`, with eigenvalues below 1e-13·λ_max treated
/// as exact zeros. The clip keeps √ from amplifying eigensolver noise at
/// rank-deficient inputs (a spurious 1e-14 eigenvalue would otherwise
/// contribute 1e-7 to the trace).
pub(crate) fn trace_sqrt_psd(m: &CMatrix) -> Result<f64> {
    let eig = linalg::herm_eig(m)?;
    let max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = 1e-13 * max;
    Ok(eig.values.iter().filter(|l| **l > cutoff).map(|l| l.sqrt()).sum())
}

/// Uhlmann fidelity F = Tr(√(√b a √b))², symmetric, in [0, 1].
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let rb = sqrtm_psd(&b.matrix().symmetrize())?;
    let inner = rb.matmul(a.matrix()).matmul(&rb).symmetrize();
    let f = trace_sqrt_psd(&inner)?.powi(2);
    Ok(f.clamp(0.0, 1.0))
}

/// ½‖a − b‖₁.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(0.5 * trace_norm(&a.matrix().sub(b.matrix()).symmetrize()))
}

/// −Tr ρ ln ρ in nats, with 0·ln 0 := 0.
pub fn von_neumann_entropy(m: &DensityMatrix) -> f64 {
    let eig = linalg::herm_eig(&m.matrix().symmetrize()).expect("validated state");
    eig.values
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| -l * l.ln())
        .sum()
}

/// I(Ω) = S(Tr₂Ω) + S(Tr₁Ω) − S(Ω) for a two-qubit state, in nats.
pub fn mutual_information(omega: &DensityMatrix) -> Result<f64> {
    if omega.dim() != 4 {
        return Err(Error::Dimension { expected: "4x4".into(), got: format!("{0}x{0}", omega.dim()) });
    }
    let first = omega.reduce(Keep::First)?;
    let second = omega.reduce(Keep::Second)?;
    Ok(von_neumann_entropy(&first) + von_neumann_entropy(&second) - von_neumann_entropy(omega))
}

/// Two-qubit concurrence: max(0, λ₁−λ₂−λ₃−λ₄) with λᵢ the descending
/// eigenvalues of √(√Ω Ω̃ √Ω), Ω̃ = (Y⊗Y) Ω* (Y⊗Y).
pub fn concurrence(omega: &DensityMatrix) -> Result<f64> {
    if omega.dim() != 4 {
        return Err(Error::Dimension { expected: "4x4".into(), got: format!("{0}x{0}", omega.dim()) });
    }
    let y = CMatrix::from_rows(&[
        vec![C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
        vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
    ]);
    let yy = y.kron(&y);
    let tilde = yy.matmul(&omega.matrix().conj()).matmul(&yy);
    let root = sqrtm_psd(&omega.matrix().symmetrize())?;
    let m = root.matmul(&tilde).matmul(&root).symmetrize();
    let eig = linalg::herm_eig(&m)?;
    let mut lambdas: Vec<f64> = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

#[derive(Serialize, Deserialize)]
struct DmJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let re = (0..n).map(|i| (0..n).map(|j| self.mat[(i, j)].re).collect()).collect();
        let im = (0..n).map(|i| (0..n).map(|j| self.mat[(i, j)].im).collect()).collect();
        DmJson { dim: n, re, im }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = DmJson::deserialize(deserializer)?;
        let n = raw.dim;
        let shape_ok = raw.re.len() == n
            && raw.im.len() == n
            && raw.re.iter().all(|r| r.len() == n)
            && raw.im.iter().all(|r| r.len() == n);
        if !shape_ok {
            return Err(D::Error::custom("re/im shape does not match dim"));
        }
        let mat = CMatrix::from_fn(n, n, |i, j| Complex64::new(raw.re[i][j], raw.im[i][j]));
        DensityMatrix::new(mat).map_err(|e| D::Error::custom(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_herm;
    use crate::seeding::stream_rng;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub fn random_dm(rng: &mut impl Rng, dim: usize) -> DensityMatrix {
        let a = CMatrix::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = a.matmul(&a.adjoint());
        let t = p.trace().re;
        DensityMatrix::new(p.scale_re(1.0 / t)).unwrap()
    }

    fn random_unitary(rng: &mut impl Rng, dim: usize) -> CMatrix {
        let h = CMatrix::from_fn(dim, dim, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .symmetrize();
        expm_herm(&h, 1.0).unwrap()
    }

    fn bell_phi_plus() -> DensityMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::from_ket(&[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap()
    }

    #[test]
    fn cardinal_state_matrices() {
        let zero = pure_state("0").unwrap();
        assert_eq!(zero.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(zero.matrix()[(1, 1)], c(0.0, 0.0));

        let plus = pure_state("+").unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plus.matrix()[(i, j)] - c(0.5, 0.0)).norm() < 1e-15);
            }
        }

        let plus_i = pure_state("+i").unwrap();
        assert!((plus_i.matrix()[(0, 1)] - c(0.0, -0.5)).norm() < 1e-15);
        assert!((plus_i.matrix()[(1, 0)] - c(0.0, 0.5)).norm() < 1e-15);

        assert!(matches!(pure_state("up"), Err(Error::UnknownState(_))));
    }

    #[test]
    fn cardinal_bloch_vectors() {
        for cardinal in Cardinal::ALL {
            let state = cardinal_state(cardinal);
            let b = bloch(&state).unwrap();
            let want = cardinal.bloch();
            assert!((b.x - want.x).abs() < 1e-12);
            assert!((b.y - want.y).abs() < 1e-12);
            assert!((b.z - want.z).abs() < 1e-12);
        }
    }

    #[test]
    fn bloch_round_trip() {
        let mut rng = stream_rng(202, 0);
        for _ in 0..30 {
            let dm = random_dm(&mut rng, 2);
            let b = bloch(&dm).unwrap();
            let back = b.density_matrix().unwrap();
            assert!(back.matrix().max_abs_diff(dm.matrix()) < 1e-12);
        }
        let mixed = DensityMatrix::maximally_mixed(2);
        let b = bloch(&mixed).unwrap();
        assert!(b.norm() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_states() {
        let not_unit_trace = CMatrix::identity(2);
        assert!(matches!(DensityMatrix::new(not_unit_trace), Err(Error::TraceNotOne { .. })));

        let mut non_psd = CMatrix::zeros(2, 2);
        non_psd[(0, 0)] = c(1.5, 0.0);
        non_psd[(1, 1)] = c(-0.5, 0.0);
        assert!(matches!(
            DensityMatrix::new(non_psd),
            Err(Error::NotPositiveSemidefinite { .. })
        ));

        let mut non_herm = CMatrix::identity(2).scale_re(0.5);
        non_herm[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(non_herm), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn repair_clips_and_renormalizes() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(1.02, 0.0);
        m[(1, 1)] = c(-0.02, 0.0);
        let (fixed, clipped) = DensityMatrix::repair(m).unwrap();
        assert!((clipped - 0.02).abs() < 1e-12);
        assert!((fixed.matrix().trace().re - 1.0).abs() < 1e-12);
        assert!((fixed.matrix()[(1, 1)].re).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let zero = pure_state("0").unwrap();
        let one = pure_state("1").unwrap();
        let plus = pure_state("+").unwrap();
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(state_fidelity(&zero, &one).unwrap() < 1e-12);
        assert!((state_fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric_and_matches_pure_overlap() {
        let mut rng = stream_rng(202, 1);
        for _ in 0..25 {
            let a = random_dm(&mut rng, 2);
            let b = random_dm(&mut rng, 2);
            let f_ab = state_fidelity(&a, &b).unwrap();
            let f_ba = state_fidelity(&b, &a).unwrap();
            assert!((f_ab - f_ba).abs() < 1e-9);
        }
        // Pure-pure pairs: F = |<ψ|φ>|².
        for _ in 0..25 {
            let u = random_unitary(&mut rng, 2);
            let v = random_unitary(&mut rng, 2);
            let psi = [u[(0, 0)], u[(1, 0)]];
            let phi = [v[(0, 0)], v[(1, 0)]];
            let overlap = (psi[0].conj() * phi[0] + psi[1].conj() * phi[1]).norm_sqr();
            let f = state_fidelity(
                &DensityMatrix::from_ket(&psi).unwrap(),
                &DensityMatrix::from_ket(&phi).unwrap(),
            )
            .unwrap();
            assert!((f - overlap).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_distance_examples() {
        let zero = pure_state("0").unwrap();
        let one = pure_state("1").unwrap();
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-12);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_distance(&zero, &mixed).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fuchs_van_de_graaff_bounds() {
        let mut rng = stream_rng(202, 2);
        for _ in 0..200 {
            let a = random_dm(&mut rng, 2);
            let b = random_dm(&mut rng, 2);
            let f = state_fidelity(&a, &b).unwrap();
            let d = trace_distance(&a, &b).unwrap();
            assert!(1.0 - f.sqrt() <= d + 1e-9, "lower bound violated: F={f} D={d}");
            assert!(d <= (1.0 - f).sqrt() + 1e-9, "upper bound violated: F={f} D={d}");
        }
    }

    #[test]
    fn entropy_examples() {
        let pure = pure_state("+i").unwrap();
        assert!(von_neumann_entropy(&pure).abs() < 1e-10);
        let half = DensityMatrix::maximally_mixed(2);
        assert!((von_neumann_entropy(&half) - 2f64.ln()).abs() < 1e-12);
        let quarter = DensityMatrix::maximally_mixed(4);
        assert!((von_neumann_entropy(&quarter) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_examples() {
        let mut rng = stream_rng(202, 3);
        let a = random_dm(&mut rng, 2);
        let b = random_dm(&mut rng, 2);
        let product = DensityMatrix::new(a.matrix().kron(b.matrix())).unwrap();
        assert!(mutual_information(&product).unwrap().abs() < 1e-9);

        assert!((mutual_information(&bell_phi_plus()).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-9);

        // ½(|00><00| + |11><11|)
        let mut cc = CMatrix::zeros(4, 4);
        cc[(0, 0)] = c(0.5, 0.0);
        cc[(3, 3)] = c(0.5, 0.0);
        let cc = DensityMatrix::new(cc).unwrap();
        assert!((mutual_information(&cc).unwrap() - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&bell_phi_plus()).unwrap() - 1.0).abs() < 1e-9);

        let mut rng = stream_rng(202, 4);
        for _ in 0..10 {
            let a = random_dm(&mut rng, 2);
            let b = random_dm(&mut rng, 2);
            let product = DensityMatrix::new(a.matrix().kron(b.matrix())).unwrap();
            assert!(concurrence(&product).unwrap() < 1e-9);
        }
    }

    #[test]
    fn werner_state_concurrence() {
        // p·Φ⁺ + (1−p)·I/4 has concurrence max(0, (3p−1)/2): the spin-flipped
        // state equals the state itself, so the λᵢ are its eigenvalues
        // {(1+3p)/4, (1−p)/4 ×3} and λ₁−λ₂−λ₃−λ₄ = (3p−1)/2.
        let p = 0.5;
        let werner = DensityMatrix::new(
            bell_phi_plus()
                .matrix()
                .scale_re(p)
                .add(&CMatrix::identity(4).scale_re((1.0 - p) / 4.0)),
        )
        .unwrap();
        let closed_form: f64 = (3.0 * p - 1.0) / 2.0;
        assert!((closed_form - 0.25).abs() < 1e-15);
        assert!((concurrence(&werner).unwrap() - closed_form).abs() < 1e-9);

        // Below p = 1/3 the state is separable.
        let sep = DensityMatrix::new(
            bell_phi_plus()
                .matrix()
                .scale_re(0.2)
                .add(&CMatrix::identity(4).scale_re(0.8 / 4.0)),
        )
        .unwrap();
        assert!(concurrence(&sep).unwrap() < 1e-9);
    }

    #[test]
    fn entanglement_metrics_are_locally_invariant() {
        let mut rng = stream_rng(202, 5);
        for _ in 0..50 {
            let omega = random_dm(&mut rng, 4);
            let u = random_unitary(&mut rng, 2);
            let v = random_unitary(&mut rng, 2);
            let local = u.kron(&v);
            let rotated = omega.evolve(&local).unwrap();
            let dc = (concurrence(&omega).unwrap() - concurrence(&rotated).unwrap()).abs();
            let dmi = (mutual_information(&omega).unwrap() - mutual_information(&rotated).unwrap()).abs();
            assert!(dc < 1e-9, "concurrence changed by {dc}");
            assert!(dmi < 1e-9, "mutual information changed by {dmi}");
        }
    }

    #[test]
    fn purity_and_reduce() {
        let mut rng = stream_rng(202, 6);
        let a = random_dm(&mut rng, 2);
        let b = random_dm(&mut rng, 2);
        let joint = DensityMatrix::new(a.matrix().kron(b.matrix())).unwrap();
        assert!(joint.reduce(Keep::First).unwrap().matrix().max_abs_diff(a.matrix()) < 1e-12);
        assert!(joint.reduce(Keep::Second).unwrap().matrix().max_abs_diff(b.matrix()) < 1e-12);
        assert!((pure_state("0").unwrap().purity() - 1.0).abs() < 1e-12);
        assert!((DensityMatrix::maximally_mixed(2).purity() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = stream_rng(202, 7);
        for dim in [2usize, 4] {
            let dm = random_dm(&mut rng, dim);
            let text = serde_json::to_string(&dm).unwrap();
            assert!(text.contains("\"dim\""));
            let back: DensityMatrix = serde_json::from_str(&text).unwrap();
            assert!(back.matrix().max_abs_diff(dm.matrix()) < 1e-12);
        }
        let bad = r#"{"dim":2,"re":[[1.0,0.0],[0.0,0.5]],"im":[[0.0,0.0],[0.0,0.0]]}"#;
        assert!(serde_json::from_str::<DensityMatrix>(bad).is_err());
    }
}
