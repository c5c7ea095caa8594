//! Dense complex matrix kernel.
//!
//! Everything downstream works with small matrices (2×2 and 4×4 states and
//! unitaries, 4×4 Choi matrices), so this module keeps a plain row-major
//! `Vec<Complex64>` representation and favors clarity over asymptotics.
//! Hermitian eigendecomposition uses cyclic Jacobi rotations, which is
//! dependency-free and numerically robust at these sizes; matrix functions
//! (exp, sqrt) and norms are built on top of it.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;

/// Hermiticity tolerance: inputs within this residual are symmetrized before
/// eigendecomposition, anything worse is rejected.
pub const HERM_TOL: f64 = 1e-10;

/// Eigenvalues in [−PSD_FLOOR, 0) are clipped to zero; below that the matrix
/// is treated as genuinely indefinite.
pub const PSD_FLOOR: f64 = 1e-10;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from nested row slices; rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        CMatrix::from_fn(r, c, |i, j| rows[i][j])
    }

    /// Real matrix entry helper for tests and literal tables.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        CMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, other: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// A B A†, the conjugation that applies a unitary to a density matrix.
    pub fn conjugate(&self, b: &CMatrix) -> Self {
        self.matmul(b).matmul(&self.adjoint())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |M − M†| over entries; 0 for exactly Hermitian matrices.
    pub fn hermiticity_residual(&self) -> f64 {
        assert!(self.is_square(), "hermiticity of non-square matrix");
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_residual() <= tol
    }

    /// (M + M†)/2.
    pub fn symmetrize(&self) -> Self {
        self.add(&self.adjoint()).scale_re(0.5)
    }

    /// Kronecker product; self is the high-order (first) factor.
    pub fn kron(&self, other: &CMatrix) -> Self {
        let (ra, ca) = (self.rows, self.cols);
        let (rb, cb) = (other.rows, other.cols);
        CMatrix::from_fn(ra * rb, ca * cb, |i, j| {
            self[(i / rb, j / cb)] * other[(i % rb, j % cb)]
        })
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Subsystem kept by [`partial_trace`] on a 2-qubit operator laid out as
/// (first ⊗ second).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of a 4×4 operator over the discarded qubit.
///
/// `Keep::First` returns Tr₂(m) (traces out the second tensor factor),
/// `Keep::Second` returns Tr₁(m).
pub fn partial_trace(m: &CMatrix, keep: Keep) -> Result<CMatrix> {
    if (m.rows(), m.cols()) != (4, 4) {
        return Err(Error::Dimension {
            expected: "4x4".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let mut out = CMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..2 {
                acc += match keep {
                    Keep::First => m[(2 * i + k, 2 * j + k)],
                    Keep::Second => m[(2 * k + i, 2 * k + j)],
                };
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix: `matrix = V diag(values) V†`.
pub struct HermEig {
    /// Ascending real eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

/// Cyclic Jacobi eigendecomposition for Hermitian matrices.
///
/// The input is checked against [`HERM_TOL`] and symmetrized, then rotated
/// until the off-diagonal mass is at machine-precision scale. Eigenvalues are
/// returned ascending.
pub fn herm_eig(m: &CMatrix) -> Result<HermEig> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: "square".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let residual = m.hermiticity_residual();
    if residual > HERM_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(1.0);

    let off_norm = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += 2.0 * a[(p, q)].norm_sqr();
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _sweep in 0..100 {
        if off_norm(&a) <= 1e-14 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                // Phase factor makes the pivot real; then an ordinary real
                // Jacobi rotation annihilates it. Combined 2x2 unitary:
                //   J = [[c, s], [-s·e^{-iφ}, c·e^{-iφ}]],  apq = |apq|·e^{iφ}.
                let phase = apq / apq.norm();
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let jpp = C64::new(c, 0.0);
                let jpq = C64::new(s, 0.0);
                let jqp = -s * phase.conj();
                let jqq = c * phase.conj();

                // A <- J† A J, applied as column then row updates.
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * jpp + aiq * jqp;
                    a[(i, q)] = aip * jpq + aiq * jqq;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = jpp.conj() * apj + jqp.conj() * aqj;
                    a[(q, j)] = jpq.conj() * apj + jqq.conj() * aqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * jpp + viq * jqp;
                    v[(i, q)] = vip * jpq + viq * jqq;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    if !converged && off_norm(&a) > 1e-12 * scale {
        return Err(Error::NoConvergence { what: "Jacobi eigendecomposition", residual: off_norm(&a) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermEig { values, vectors })
}

/// e^{−i·scale·h} for Hermitian `h`; unitary to working precision.
pub fn expm_herm(h: &CMatrix, scale: f64) -> Result<CMatrix> {
    let eig = herm_eig(h)?;
    Ok(rebuild(&eig, |lam| {
        let phi = -scale * lam;
        C64::new(phi.cos(), phi.sin())
    }))
}

/// Principal square root of a positive semidefinite Hermitian matrix.
///
/// Eigenvalues within [`PSD_FLOOR`] below zero are clipped; anything lower is
/// rejected as genuinely indefinite.
pub fn sqrtm_psd(m: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    if let Some(&min) = eig.values.first() {
        if min < -PSD_FLOOR {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
    }
    Ok(rebuild(&eig, |lam| C64::new(lam.max(0.0).sqrt(), 0.0)))
}

/// Sum of singular values; for Hermitian input this is Σ|λᵢ|.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_square() && m.is_hermitian(HERM_TOL) {
        let eig = herm_eig(m).expect("hermitian within tolerance");
        return eig.values.iter().map(|l| l.abs()).sum();
    }
    // Singular values via the Hermitian PSD matrix M†M.
    let gram = m.adjoint().matmul(m).symmetrize();
    let eig = herm_eig(&gram).expect("gram matrix is hermitian");
    eig.values.iter().map(|l| l.max(0.0).sqrt()).sum()
}

fn rebuild(eig: &HermEig, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = eig.values.len();
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = f(eig.values[i]);
    }
    eig.vectors.matmul(&d).matmul(&eig.vectors.adjoint())
}

/// Applies an analytic function to a Hermitian matrix through its spectrum.
pub fn func_herm(m: &CMatrix, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    Ok(rebuild(&eig, f))
}
