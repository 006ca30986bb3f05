//! Dense complex matrix kernels.
//!
//! Everything in the solver is built from a handful of operations on small
//! dense matrices: the matrix exponential (scaling and squaring around a
//! fixed degree-13 Padé approximant), the φ-functions used by the exponential
//! trapezoidal rule, LU solves with a reciprocal condition number, Hermitian
//! spectral decompositions and the spectral radius.
//!
//! Scalars are always [`Complex64`]; a real problem is a complex problem whose
//! imaginary parts happen to vanish.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix, row/column semantics as in `nalgebra`.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

/// Relative tolerance for the Hermitian check, applied before symmetrizing.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Reciprocal condition numbers below this are treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatfunError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix has {expected} rows, right-hand side has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is numerically singular (rcond = {rcond:e})")]
    SingularMatrix { rcond: f64 },
    #[error("matrix is not Hermitian (relative defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, MatfunError>;

fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(MatfunError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Maximum absolute column sum.
pub fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m, &s| f64::max(m, s))
}

pub fn vec_norm_inf(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Block-diagonal matrix with the given square blocks.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(n, m);
    let (mut r, mut col) = (0, 0);
    for b in blocks {
        out.view_mut((r, col), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        col += b.ncols();
    }
    out
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the [13/13] approximant meets unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential `e^{tA}`.
pub fn expm(a: &CMatrix, t: f64) -> Result<CMatrix> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let scaled = a * c(t);
    let norm = norm1(&scaled);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let x = scaled * c(0.5f64.powi(squarings));
    let mut r = pade13(&x)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade13(x: &CMatrix) -> Result<CMatrix> {
    let n = x.nrows();
    let b = |k: usize| c(PADE13[k]);
    let eye = identity(n);
    let x2 = x * x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;

    let u_inner = &x6 * (&x6 * b(13) + &x4 * b(11) + &x2 * b(9))
        + &x6 * b(7)
        + &x4 * b(5)
        + &x2 * b(3)
        + &eye * b(1);
    let u = x * u_inner;
    let v = &x6 * (&x6 * b(12) + &x4 * b(10) + &x2 * b(8))
        + &x6 * b(6)
        + &x4 * b(4)
        + &x2 * b(2)
        + &eye * b(0);

    let p = &v + &u;
    let q = v - u;
    let lu = q.lu();
    lu.solve(&p).ok_or(MatfunError::SingularMatrix { rcond: 0.0 })
}

/// `e^{hA}`, `φ₁(hA)` and `φ₂(hA)` from one exponential of the augmented
/// block matrix `[[hA, I, 0], [0, 0, I], [0, 0, 0]]`.
#[derive(Debug, Clone)]
pub struct PhiSet {
    pub exp: CMatrix,
    pub phi1: CMatrix,
    pub phi2: CMatrix,
}

pub fn phi_set(a: &CMatrix, h: f64) -> Result<PhiSet> {
    let n = ensure_square(a)?;
    let mut w = CMatrix::zeros(3 * n, 3 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&(a * c(h)));
    for i in 0..n {
        w[(i, n + i)] = c(1.0);
        w[(n + i, 2 * n + i)] = c(1.0);
    }
    let e = expm(&w, 1.0)?;
    Ok(PhiSet {
        exp: e.view((0, 0), (n, n)).into_owned(),
        phi1: e.view((0, n), (n, n)).into_owned(),
        phi2: e.view((0, 2 * n), (n, n)).into_owned(),
    })
}

/// `φ₁(hA) = (hA)⁻¹(e^{hA} − I)`, continuous at singular `A`.
pub fn phi1(a: &CMatrix, h: f64) -> Result<CMatrix> {
    Ok(phi_set(a, h)?.phi1)
}

/// `φ₂(hA) = (hA)⁻²(e^{hA} − I − hA)`, continuous at singular `A`.
pub fn phi2(a: &CMatrix, h: f64) -> Result<CMatrix> {
    Ok(phi_set(a, h)?.phi2)
}

/// Solution of a dense linear system together with the reciprocal 1-norm
/// condition number of the coefficient matrix.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: CMatrix,
    pub rcond: f64,
}

/// LU factorization with partial pivoting, retained for repeated solves.
#[derive(Debug, Clone)]
pub struct Factorization {
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    pub rcond: f64,
    pub inverse: CMatrix,
}

impl Factorization {
    pub fn new(m: &CMatrix) -> Result<Self> {
        ensure_square(m)?;
        let lu = m.clone().lu();
        let inverse = match lu.try_inverse() {
            Some(inv) if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => inv,
            _ => return Err(MatfunError::SingularMatrix { rcond: 0.0 }),
        };
        let rcond = rcond_with_inverse(m, &inverse);
        if rcond < SINGULAR_RCOND {
            return Err(MatfunError::SingularMatrix { rcond });
        }
        Ok(Factorization { lu, rcond, inverse })
    }

    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if rhs.nrows() != self.inverse.nrows() {
            return Err(MatfunError::DimensionMismatch {
                expected: self.inverse.nrows(),
                found: rhs.nrows(),
            });
        }
        self.lu
            .solve(rhs)
            .ok_or(MatfunError::SingularMatrix { rcond: self.rcond })
    }

    pub fn solve_vec(&self, rhs: &CVector) -> Result<CVector> {
        let m = CMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let x = self.solve(&m)?;
        Ok(x.column(0).into_owned())
    }
}

fn rcond_with_inverse(m: &CMatrix, inverse: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let prod = norm1(m) * norm1(inverse);
    if prod > 0.0 && prod.is_finite() {
        1.0 / prod
    } else {
        0.0
    }
}

/// Reciprocal 1-norm condition number `1/(‖M‖₁‖M⁻¹‖₁)`; 0 for singular or
/// non-square input.
pub fn rcond(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return 0.0;
    }
    match m.clone().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => rcond_with_inverse(m, &inv),
        _ => 0.0,
    }
}

/// Solves `M X = rhs`, failing with [`MatfunError::SingularMatrix`] when the
/// reciprocal condition number falls below [`SINGULAR_RCOND`].
pub fn solve_linear(m: &CMatrix, rhs: &CMatrix) -> Result<LinearSolution> {
    let f = Factorization::new(m)?;
    let x = f.solve(rhs)?;
    Ok(LinearSolution { x, rcond: f.rcond })
}

/// Ascending eigenvalues with a unitary matrix of eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct HermitianEigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermitianEigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Relative anti-Hermitian part `‖A − A*‖_F / ‖A‖_F` (zero for `A = 0`).
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let scale = a.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / scale
}

pub fn hermitian_eig(a: &CMatrix) -> Result<HermitianEigenSystem> {
    ensure_square(a)?;
    let defect = hermitian_defect(a);
    if defect > HERMITIAN_TOL {
        return Err(MatfunError::NotHermitian { defect });
    }
    let sym = (a + a.adjoint()) * c(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(MatfunError::NoConvergence)?;

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMatrix::from_fn(a.nrows(), a.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok(HermitianEigenSystem { eigenvalues, eigenvectors })
}

/// `V diag(f(λ)) V*`.
pub fn funm_hermitian<F>(e: &HermitianEigenSystem, f: F) -> CMatrix
where
    F: Fn(f64) -> Complex64,
{
    let v = &e.eigenvectors;
    let mut scaled = v.clone();
    for (k, &lambda) in e.eigenvalues.iter().enumerate() {
        let fk = f(lambda);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= fk);
    }
    scaled * v.adjoint()
}

/// Eigenvalues of a general square matrix via the complex Schur form.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(MatfunError::NoConvergence)?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

pub fn spectral_radius(a: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x)))
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::zeros(2, 2);
        assert_eq!(expm(&z, 3.7).unwrap(), identity(2));
    }

    #[test]
    fn expm_diagonal() {
        let a = real(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let e = expm(&a, 1.0).unwrap();
        let want = real(2, 2, &[(-1.0f64).exp(), 0.0, 0.0, (-2.0f64).exp()]);
        assert!(close(&e, &want, 1e-15));
    }

    #[test]
    fn expm_nilpotent_terminates() {
        let a = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a, 1.0).unwrap();
        assert!(close(&e, &real(2, 2, &[1.0, 1.0, 0.0, 1.0]), 1e-15));
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let a = real(1, 1, &[-40.0]);
        let e = expm(&a, 1.0).unwrap();
        assert!(((e[(0, 0)].re - (-40.0f64).exp()) / (-40.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn expm_rejects_rectangular() {
        assert_eq!(
            expm(&CMatrix::zeros(2, 3), 1.0).unwrap_err(),
            MatfunError::NotSquare { rows: 2, cols: 3 }
        );
        assert!(phi1(&CMatrix::zeros(1, 2), 1.0).is_err());
    }

    #[test]
    fn phi_at_zero() {
        let z = CMatrix::zeros(3, 3);
        let p = phi_set(&z, 0.5).unwrap();
        assert!(close(&p.phi1, &identity(3), 1e-15));
        assert!(close(&p.phi2, &(identity(3) * c(0.5)), 1e-15));
    }

    #[test]
    fn phi_nilpotent() {
        let n = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p1 = phi1(&n, 1.0).unwrap();
        assert!(close(&p1, &(identity(2) + &n * c(0.5)), 1e-15));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let rhs = real(2, 1, &[3.0, -4.0]);
        let s = solve_linear(&identity(2), &rhs).unwrap();
        assert!(close(&s.x, &rhs, 0.0));
        assert_eq!(s.rcond, 1.0);
        let s = solve_linear(&real(1, 1, &[2.0]), &real(1, 1, &[4.0])).unwrap();
        assert!((s.x[(0, 0)].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn solve_upper_triangular() {
        let m = real(2, 2, &[1.0, -0.9, 0.0, 1.0]);
        let rhs = real(2, 1, &[1.0, 1.0]);
        let s = solve_linear(&m, &rhs).unwrap();
        assert!(close(&s.x, &real(2, 1, &[1.9, 1.0]), 1e-15));
        assert!(close(&(&m * &s.x), &rhs, 1e-15));
    }

    #[test]
    fn solve_singular() {
        let m = real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            solve_linear(&m, &identity(2)),
            Err(MatfunError::SingularMatrix { .. })
        ));
        let near = real(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-17]);
        assert!(solve_linear(&near, &identity(2)).is_err());
    }

    #[test]
    fn hermitian_eig_diagonal_sorted() {
        let e = hermitian_eig(&real(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues.len(), 2);
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-15);
        // eigenvectors are a (phase-)permutation of the identity
        for k in 0..2 {
            let mags: Vec<f64> = e.eigenvectors.column(k).iter().map(|z| z.norm()).collect();
            assert!(mags.iter().filter(|&&m| (m - 1.0).abs() < 1e-14).count() == 1);
        }
        assert!(e.eigenvectors[(1, 0)].norm() > 0.99);
    }

    #[test]
    fn hermitian_eig_swap() {
        let e = hermitian_eig(&real(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_eig_rejects_nonhermitian() {
        let a = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&a), Err(MatfunError::NotHermitian { .. })));
    }

    #[test]
    fn funm_examples() {
        let a = real(2, 2, &[2.0, 1.0, 1.0, -3.0]);
        let e = hermitian_eig(&a).unwrap();
        assert!(close(&funm_hermitian(&e, c), &a, 1e-14));

        let e = hermitian_eig(&real(1, 1, &[std::f64::consts::FRAC_PI_3])).unwrap();
        let cos = funm_hermitian(&e, |x| c(x.cos()));
        assert!((cos[(0, 0)].re - 0.5).abs() < 1e-15);

        let e = hermitian_eig(&real(1, 1, &[-4.0])).unwrap();
        let s = funm_hermitian(&e, |x| c(x.abs().sqrt()));
        assert!((s[(0, 0)].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&CMatrix::zeros(2, 2)).unwrap(), 0.0);
        assert!(spectral_radius(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap() < 1e-15);
        assert!((spectral_radius(&(identity(3) * c(0.9))).unwrap() - 0.9).abs() < 1e-15);
        // rotation generator: eigenvalues ±i
        let rot = real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_diag_layout() {
        let b = block_diag(&[real(1, 1, &[1.0]), real(2, 2, &[2.0, 3.0, 4.0, 5.0])]);
        assert_eq!(b.shape(), (3, 3));
        assert_eq!(b[(1, 2)], c(3.0));
        assert_eq!(b[(0, 1)], c(0.0));
    }
}
