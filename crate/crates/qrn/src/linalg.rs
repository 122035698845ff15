//! Dense complex matrices for small dimensions.
//!
//! Row-major storage is the single layout convention used across the crate;
//! the network encoding, the superoperator flattening and the file formats
//! all inherit it from here. Dimensions never exceed 16 (a two-qubit
//! superoperator), so every algorithm is chosen for robustness over speed:
//! the Hermitian eigensolver is a cyclic Jacobi iteration and the matrix
//! exponential is scaling-and-squaring with a truncated series.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// Input to the Hermitian eigensolver was not Hermitian.
    #[error("matrix is not Hermitian: ‖A − A†‖_F = {defect:.3e}")]
    NotHermitian { defect: f64 },
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::ONE);
        }
        m
    }

    /// Build from row-major complex entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "entry count {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    /// Build from row-major (re, im) pairs; convenient for literals in tests.
    pub fn from_parts(rows: usize, cols: usize, parts: &[(f64, f64)]) -> Self {
        let data = parts
            .iter()
            .map(|&(re, im)| Complex64::new(re, im))
            .collect();
        Self::from_vec(rows, cols, data)
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn add(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "dimension mismatch in add"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "dimension mismatch in sub"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scaled(&self, z: Complex64) -> CMatrix {
        let data = self.data.iter().map(|a| a * z).collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scaled_re(&self, x: f64) -> CMatrix {
        self.scaled(Complex64::new(x, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ‖A − A†‖_F, zero for exactly Hermitian input.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&adjoint(self)).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol
    }

    pub fn approx_eq(&self, rhs: &CMatrix, tol: f64) -> bool {
        (self.rows, self.cols) == (rhs.rows, rhs.cols) && self.sub(rhs).frobenius_norm() <= tol
    }
}

/// Standard complex matrix product.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(
        a.cols, b.rows,
        "dimension mismatch in matmul: {}x{} · {}x{}",
        a.rows, a.cols, b.rows, b.cols
    );
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == Complex64::ZERO {
                continue;
            }
            for j in 0..b.cols {
                let v = out.get(i, j) + aik * b.get(k, j);
                out.set(i, j, v);
            }
        }
    }
    out
}

/// Conjugate transpose A†.
pub fn adjoint(a: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.cols, a.rows);
    for i in 0..a.rows {
        for j in 0..a.cols {
            out.set(j, i, a.get(i, j).conj());
        }
    }
    out
}

/// [a, b] = ab − ba.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.is_square() && a.rows == b.rows && b.is_square(),
        "dimension mismatch in commutator"
    );
    matmul(a, b).sub(&matmul(b, a))
}

/// {a, b} = ab + ba.
pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert!(
        a.is_square() && a.rows == b.rows && b.is_square(),
        "dimension mismatch in anticommutator"
    );
    matmul(a, b).add(&matmul(b, a))
}

/// Kronecker product a ⊗ b, row-major.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.get(i, j);
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.set(i * b.rows + k, j * b.cols + l, aij * b.get(k, l));
                }
            }
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues ascending; eigenvector k is column k of `eigenvectors`, so
/// V diag(λ) V† reconstructs the input.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermEig {
    /// V diag(λ) V†, for reconstruction checks.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let mut d = CMatrix::zeros(n, n);
        for i in 0..n {
            d.set(i, i, Complex64::new(self.eigenvalues[i], 0.0));
        }
        matmul(
            &matmul(&self.eigenvectors, &d),
            &adjoint(&self.eigenvectors),
        )
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const HERMITICITY_TOL: f64 = 1e-10;

/// Hermitian eigendecomposition via cyclic complex Jacobi rotations.
///
/// Refuses input whose Hermiticity defect exceeds 1e-10 (relative to the
/// Frobenius norm for large matrices). Off-diagonal norm is driven below
/// 1e-12 · ‖A‖_F within at most 100 sweeps, which is plenty at these sizes.
pub fn herm_eig(a: &CMatrix) -> Result<HermEig, LinalgError> {
    assert!(a.is_square(), "herm_eig needs a square matrix");
    let defect = a.hermiticity_defect();
    if defect > HERMITICITY_TOL * a.frobenius_norm().max(1.0) {
        return Err(LinalgError::NotHermitian { defect });
    }

    let n = a.rows;
    let mut m = a.clone();
    // Symmetrize so rotations act on an exactly Hermitian matrix.
    m = m.add(&adjoint(&m)).scaled_re(0.5);
    let mut v = CMatrix::identity(n);
    let tol = 1e-12 * a.frobenius_norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += m.get(i, j).norm_sqr();
                    }
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                let mag = apq.norm();
                if mag <= tol / (n as f64) {
                    continue;
                }
                // Phase that makes the (p,q) entry real, then a real
                // Jacobi rotation that zeroes it.
                let u = apq / mag;
                let app = m.get(p, p).re;
                let aqq = m.get(q, q).re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let ubar = u.conj();

                // A ← J† A J with J = I except
                // J[p][p]=c, J[p][q]=s, J[q][p]=−s·ū, J[q][q]=c·ū.
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, akp * c - akq * s * ubar);
                    m.set(k, q, akp * s + akq * c * ubar);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, apk * c - aqk * s * u);
                    m.set(q, k, apk * s + aqk * c * u);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * c - vkq * s * ubar);
                    v.set(k, q, vkp * s + vkq * c * ubar);
                }
            }
        }
    }

    // Sort eigenvalues ascending, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors.set(k, new_col, v.get(k, old_col));
        }
    }

    Ok(HermEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
///
/// The argument is halved until its 1-norm is ≤ 0.5, the series is summed
/// until the term norm drops below 1e-16, and the result is squared back.
pub fn expm(a: &CMatrix) -> CMatrix {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.rows;

    let one_norm = (0..n)
        .map(|j| (0..n).map(|i| a.get(i, j).norm()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let squarings = if one_norm > 0.5 {
        (one_norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = a.scaled_re(0.5_f64.powi(squarings as i32));

    let mut sum = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=200 {
        term = matmul(&term, &b).scaled_re(1.0 / k as f64);
        sum = sum.add(&term);
        if term.frobenius_norm() < 1e-16 {
            break;
        }
    }

    for _ in 0..squarings {
        sum = matmul(&sum, &sum);
    }
    sum
}

// Pauli operators and friends, in the fixed basis convention used across
// the crate: |0⟩ is the σz eigenvector with eigenvalue +1 (excited state)
// and σ⁻ = |1⟩⟨0| maps it to the ground state |1⟩.

pub fn sigma_x() -> CMatrix {
    CMatrix::from_parts(2, 2, &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_parts(2, 2, &[(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_parts(2, 2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)])
}

/// σ⁺ = |0⟩⟨1| = (σx + iσy)/2.
pub fn sigma_plus() -> CMatrix {
    CMatrix::from_parts(2, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)])
}

/// σ⁻ = |1⟩⟨0| = (σx − iσy)/2.
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_parts(2, 2, &[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)])
}
