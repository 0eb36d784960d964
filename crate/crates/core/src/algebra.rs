//! Dense 2×2 / 4×4 complex linear algebra for two-qubit pure states and
//! product Kraus operators.
//!
//! Everything here is fixed-size and allocation-free. Basis ordering for the
//! two-qubit space is |00⟩, |01⟩, |10⟩, |11⟩ (Alice's qubit is the high bit).

use std::fmt;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::{NULL_TRACE, PSD_FLOOR};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AlgebraError {
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("operator is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("null element: trace {trace:e} is below the null threshold")]
    NullElement { trace: f64 },
    #[error("branch probability must be positive, got {0:e}")]
    NonPositiveProbability(f64),
}

/// A 2×2 complex matrix acting on one qubit.
#[derive(Clone, Copy, PartialEq)]
pub struct LocalOperator(pub [[Complex64; 2]; 2]);

impl fmt::Debug for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            m[0][0], m[0][1], m[1][0], m[1][1]
        )
    }
}

impl LocalOperator {
    pub fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self(m)
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self([
            [Complex64::from(m[0][0]), Complex64::from(m[0][1])],
            [Complex64::from(m[1][0]), Complex64::from(m[1][1])],
        ])
    }

    pub fn identity() -> Self {
        Self([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn zero() -> Self {
        Self([[ZERO; 2]; 2])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::from_real([[a, 0.0], [0.0, b]])
    }

    /// Pauli Z, |0⟩⟨0| − |1⟩⟨1|.
    pub fn pauli_z() -> Self {
        Self::diag(1.0, -1.0)
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[i][j]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    /// A†A, the POVM element of this Kraus operator.
    pub fn gram(&self) -> Self {
        self.adjoint() * *self
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for z in row.iter_mut() {
                *z *= s;
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn is_diagonal(&self) -> bool {
        self.0[0][1] == ZERO && self.0[1][0] == ZERO
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    /// Eigenvalues (ascending) of the Hermitian part of the matrix.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = 0.5 * (self.0[0][1] + self.0[1][0].conj());
        let mean = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Positive semidefinite up to an eigenvalue floor of −`PSD_FLOOR`.
    pub fn is_psd(&self) -> bool {
        self.is_hermitian(PSD_FLOOR) && self.hermitian_eigenvalues().0 >= -PSD_FLOOR
    }

    /// Positive square root of a positive semidefinite matrix.
    ///
    /// Uses the 2×2 identity √H = (H + √det(H)·1) / √(Tr H + 2√det(H)).
    pub fn sqrt_psd(&self) -> Self {
        let s = self.det().re.max(0.0).sqrt();
        let t = (self.trace().re + 2.0 * s).max(0.0).sqrt();
        if t == 0.0 {
            return Self::zero();
        }
        let mut out = *self;
        out.0[0][0] += s;
        out.0[1][1] += s;
        // Hermitise to remove rounding asymmetry.
        let off = 0.5 * (out.0[0][1] + out.0[1][0].conj());
        out.0[0][1] = off;
        out.0[1][0] = off.conj();
        out.0[0][0] = Complex64::from(out.0[0][0].re);
        out.0[1][1] = Complex64::from(out.0[1][1].re);
        out.scale(1.0 / t)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 {
            return None;
        }
        let m = &self.0;
        Some(Self([
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ]))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for LocalOperator {
    type Output = LocalOperator;

    fn mul(self, rhs: LocalOperator) -> LocalOperator {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        LocalOperator(out)
    }
}

impl Add for LocalOperator {
    type Output = LocalOperator;

    fn add(self, rhs: LocalOperator) -> LocalOperator {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

/// A 4×4 complex matrix on the two-qubit space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [[Complex64; 4]; 4]);

impl Mat4 {
    pub fn zero() -> Self {
        Self([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    /// Kronecker product A ⊗ B.
    pub fn kron(a: &LocalOperator, b: &LocalOperator) -> Self {
        let mut m = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                    }
                }
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    /// ⟨i|M|i⟩ for basis index `i` (0 = |00⟩, …, 3 = |11⟩).
    pub fn diagonal(&self, i: usize) -> f64 {
        self.0[i][i].re
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> Complex64 {
        let mut a = self.0;
        let mut det = ONE;
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
                .unwrap_or(col);
            if a[pivot][col].norm() == 0.0 {
                return ZERO;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for row in col + 1..4 {
                let factor = a[row][col] / a[col][col];
                for k in col..4 {
                    let v = a[col][k];
                    a[row][k] -= factor * v;
                }
            }
        }
        det
    }
}

impl Mul for Mat4 {
    type Output = Mat4;

    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut out = Mat4::zero();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        out
    }
}

impl Add for Mat4 {
    type Output = Mat4;

    fn add(self, rhs: Mat4) -> Mat4 {
        let mut out = self;
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

/// A possibly unnormalized two-qubit pure state with amplitudes
/// (a00, a01, a10, a11).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitPureState {
    pub amps: [Complex64; 4],
}

impl TwoQubitPureState {
    pub fn new(amps: [Complex64; 4]) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: [f64; 4]) -> Self {
        Self {
            amps: amps.map(Complex64::from),
        }
    }

    /// Computational basis state |ij⟩.
    pub fn basis(i: usize, j: usize) -> Self {
        let mut amps = [ZERO; 4];
        amps[2 * i + j] = ONE;
        Self { amps }
    }

    /// (|00⟩ + |11⟩)/√2
    pub fn bell_plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real([h, 0.0, 0.0, h])
    }

    /// (|00⟩ − |11⟩)/√2
    pub fn bell_minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real([h, 0.0, 0.0, -h])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-12
    }

    /// ⟨self|M|self⟩ for a Hermitian `m`.
    pub fn expectation(&self, m: &Mat4) -> f64 {
        let mut acc = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                acc += self.amps[i].conj() * m.0[i][j] * self.amps[j];
            }
        }
        acc.re
    }

    /// Concurrence 2|a00·a11 − a01·a10| / norm², in [0, 1].
    pub fn concurrence(&self) -> Result<f64, AlgebraError> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(AlgebraError::ZeroNorm);
        }
        let [a00, a01, a10, a11] = self.amps;
        Ok((2.0 * (a00 * a11 - a01 * a10).norm() / n).min(1.0))
    }
}

/// Applies the product Kraus operator A ⊗ B to `s` without renormalizing.
pub fn apply_product_kraus(
    a: &LocalOperator,
    b: &LocalOperator,
    s: &TwoQubitPureState,
) -> TwoQubitPureState {
    let mut out = [ZERO; 4];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = ZERO;
            for k in 0..2 {
                for l in 0..2 {
                    acc += a.0[i][k] * b.0[j][l] * s.amps[2 * k + l];
                }
            }
            out[2 * i + j] = acc;
        }
    }
    TwoQubitPureState { amps: out }
}

/// Concurrence of a pure state; see [`TwoQubitPureState::concurrence`].
pub fn concurrence_pure(s: &TwoQubitPureState) -> Result<f64, AlgebraError> {
    s.concurrence()
}

/// One local factor w·[[1+x, ξ], [ξ*, 1−x]] of a product POVM element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGramParams {
    pub w: f64,
    pub x: f64,
    pub xi: Complex64,
}

impl LocalGramParams {
    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            xi: ZERO,
        }
    }

    pub fn reconstruct(&self) -> LocalOperator {
        let w = self.w;
        LocalOperator([
            [Complex64::from(w * (1.0 + self.x)), w * self.xi],
            [w * self.xi.conj(), Complex64::from(w * (1.0 - self.x))],
        ])
    }

    /// w ≥ 0, |x| ≤ 1 and |ξ|² ≤ 1 − x², each up to `PSD_FLOOR`.
    pub fn is_valid(&self) -> bool {
        self.w >= 0.0
            && self.x.abs() <= 1.0 + PSD_FLOOR
            && self.xi.norm_sqr() <= 1.0 - self.x * self.x + PSD_FLOOR
    }
}

/// Inverse of [`LocalGramParams::reconstruct`] for a positive operator.
///
/// Null operators (Tr H ≤ 1e-14) are reported as [`AlgebraError::NullElement`],
/// distinct from non-positive input.
pub fn gram_params(h: &LocalOperator) -> Result<LocalGramParams, AlgebraError> {
    if !h.is_psd() {
        let min_eigenvalue = if h.is_hermitian(PSD_FLOOR) {
            h.hermitian_eigenvalues().0
        } else {
            f64::NAN
        };
        return Err(AlgebraError::NotPositive { min_eigenvalue });
    }
    let trace = h.trace().re;
    if trace <= NULL_TRACE {
        return Err(AlgebraError::NullElement { trace });
    }
    Ok(LocalGramParams {
        w: trace / 2.0,
        x: ((h.0[0][0].re - h.0[1][1].re) / trace).clamp(-1.0, 1.0),
        xi: 2.0 * h.0[0][1] / trace,
    })
}

/// Branch concurrence det(G)^{1/4} / p for a product POVM element G.
pub fn concurrence_from_gram(g: &Mat4, p_branch: f64) -> Result<f64, AlgebraError> {
    if p_branch <= 0.0 || p_branch.is_nan() {
        return Err(AlgebraError::NonPositiveProbability(p_branch));
    }
    let det = g.det().re.max(0.0);
    Ok(det.powf(0.25) / p_branch)
}

/// 2×2 matrix with independent standard Gaussian real and imaginary parts.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R) -> LocalOperator {
    let mut m = [[ZERO; 2]; 2];
    for row in m.iter_mut() {
        for z in row.iter_mut() {
            *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    LocalOperator(m)
}

/// Unitary from Gram–Schmidt on the columns of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> LocalOperator {
    let g = random_operator(rng);
    let c0 = [g.0[0][0], g.0[1][0]];
    let n0 = (c0[0].norm_sqr() + c0[1].norm_sqr()).sqrt();
    let u0 = [c0[0] / n0, c0[1] / n0];
    let c1 = [g.0[0][1], g.0[1][1]];
    let proj = u0[0].conj() * c1[0] + u0[1].conj() * c1[1];
    let v1 = [c1[0] - proj * u0[0], c1[1] - proj * u0[1]];
    let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
    let u1 = [v1[0] / n1, v1[1] / n1];
    LocalOperator([[u0[0], u1[0]], [u0[1], u1[1]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SEED: u64 = 0x5eed_a16e;

    #[test]
    fn identity_kraus_keeps_bell_state() {
        let out = apply_product_kraus(
            &LocalOperator::identity(),
            &LocalOperator::identity(),
            &TwoQubitPureState::bell_plus(),
        );
        assert_eq!(out, TwoQubitPureState::bell_plus());
        assert!((out.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projector_on_bell_state() {
        let out = apply_product_kraus(
            &LocalOperator::diag(1.0, 0.0),
            &LocalOperator::identity(),
            &TwoQubitPureState::bell_plus(),
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amps[0].re - h).abs() < 1e-15);
        assert_eq!(out.amps[3], ZERO);
        assert!((out.norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partial_strength_kraus() {
        let t = std::f64::consts::PI / 6.0;
        let out = apply_product_kraus(
            &LocalOperator::diag(t.cos(), t.sin()),
            &LocalOperator::identity(),
            &TwoQubitPureState::bell_plus(),
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [t.cos() * h, 0.0, 0.0, t.sin() * h];
        for (a, e) in out.amps.iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-15 && a.im == 0.0);
        }
        assert!((out.norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn concurrence_examples() {
        assert!((TwoQubitPureState::bell_plus().concurrence().unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(TwoQubitPureState::basis(0, 1).concurrence().unwrap(), 0.0);
        let s = TwoQubitPureState::from_real([0.2f64.sqrt(), 0.0, 0.0, 0.8f64.sqrt()]);
        assert!((s.concurrence().unwrap() - 0.8).abs() < 1e-15);
        let zero = TwoQubitPureState::from_real([0.0; 4]);
        assert_eq!(zero.concurrence(), Err(AlgebraError::ZeroNorm));
    }

    #[test]
    fn gram_params_examples() {
        let p = gram_params(&LocalOperator::identity()).unwrap();
        assert_eq!((p.w, p.x, p.xi), (1.0, 0.0, ZERO));
        let p = gram_params(&LocalOperator::diag(2.0, 0.0)).unwrap();
        assert_eq!((p.w, p.x, p.xi), (1.0, 1.0, ZERO));
        let p = gram_params(&LocalOperator::from_real([[1.5, 0.5], [0.5, 0.5]])).unwrap();
        assert!((p.w - 1.0).abs() < 1e-15);
        assert!((p.x - 0.5).abs() < 1e-15);
        assert!((p.xi - Complex64::from(0.5)).norm() < 1e-15);
    }

    #[test]
    fn gram_params_errors_are_distinct() {
        assert!(matches!(
            gram_params(&LocalOperator::diag(1.0, -0.5)),
            Err(AlgebraError::NotPositive { .. })
        ));
        assert!(matches!(
            gram_params(&LocalOperator::zero()),
            Err(AlgebraError::NullElement { .. })
        ));
        assert!(matches!(
            gram_params(&LocalOperator::diag(1e-15, 0.0)),
            Err(AlgebraError::NullElement { .. })
        ));
        // Tiny negative eigenvalue from rounding is absorbed.
        assert!(gram_params(&LocalOperator::diag(1.0, -1e-13)).is_ok());
    }

    #[test]
    fn concurrence_from_gram_examples() {
        assert_eq!(concurrence_from_gram(&Mat4::identity(), 1.0).unwrap(), 1.0);
        // Diagonal element with w = 0.45, x = y = 1/3.
        let s = 1.0 / 3.0;
        let a = LocalOperator::diag(0.45 * (1.0 + s), 0.45 * (1.0 - s));
        let b = LocalOperator::diag(1.0 + s, 1.0 - s);
        let g = Mat4::kron(&a, &b);
        assert!((concurrence_from_gram(&g, 0.5).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            concurrence_from_gram(&g, 0.0),
            Err(AlgebraError::NonPositiveProbability(_))
        ));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..1000 {
            let h = random_operator(&mut rng).gram();
            let s = h.sqrt_psd();
            assert!((s * s).max_abs_diff(&h) < 1e-10 * (1.0 + h.trace().re));
            assert!(s.is_psd());
        }
    }

    #[test]
    fn det4_matches_kron_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        for _ in 0..200 {
            let a = random_operator(&mut rng);
            let b = random_operator(&mut rng);
            let lhs = Mat4::kron(&a, &b).det();
            let rhs = a.det() * a.det() * b.det() * b.det();
            assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
        for _ in 0..100 {
            let u = random_unitary(&mut rng);
            assert!(u.gram().max_abs_diff(&LocalOperator::identity()) < 1e-12);
        }
    }
}
