//! Complex Hermitian linear algebra and circular complex Gaussian sampling.
//!
//! All covariance matrices handled by this crate are Hermitian, and most are
//! positive definite. [`HermitianMatrix`] enforces the symmetry invariant at
//! construction: validated inputs must be Hermitian to within
//! [`HERMITIAN_TOL`], and every stored matrix is symmetrized as `(A + A†)/2`
//! so downstream factorizations never see accumulated asymmetry.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Double-precision complex scalar.
pub type C64 = Complex<f64>;
/// Dynamically sized complex matrix.
pub type CMatrix = DMatrix<C64>;
/// Dynamically sized complex column vector.
pub type CVector = DVector<C64>;

/// Maximum absolute deviation `|A(i,j) - conj(A(j,i))|` accepted by
/// [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not Hermitian: max |A(i,j) - conj(A(j,i))| = {deviation:e} exceeds {HERMITIAN_TOL:e}")]
    NotHermitian { deviation: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("eigendecomposition failed to converge")]
    EigConvergence,
    #[error("matrix dimensions must be nonzero")]
    Empty,
}

// ---------------------------------------------------------------------------
// HermitianMatrix
// ---------------------------------------------------------------------------

/// A square complex matrix stored in exactly Hermitian form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HermitianMatrixData", into = "HermitianMatrixData")]
pub struct HermitianMatrix {
    m: CMatrix,
}

/// Serialized form: row-major entries as `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct HermitianMatrixData {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl From<HermitianMatrix> for HermitianMatrixData {
    fn from(h: HermitianMatrix) -> Self {
        let n = h.dim();
        let entries = (0..n)
            .map(|i| (0..n).map(|j| [h.m[(i, j)].re, h.m[(i, j)].im]).collect())
            .collect();
        HermitianMatrixData { dim: n, entries }
    }
}

impl TryFrom<HermitianMatrixData> for HermitianMatrix {
    type Error = String;

    fn try_from(d: HermitianMatrixData) -> Result<Self, String> {
        if d.entries.len() != d.dim || d.entries.iter().any(|row| row.len() != d.dim) {
            return Err(format!("entries do not form a {0}x{0} matrix", d.dim));
        }
        let m = CMatrix::from_fn(d.dim, d.dim, |i, j| {
            C64::new(d.entries[i][j][0], d.entries[i][j][1])
        });
        HermitianMatrix::new(m).map_err(|e| e.to_string())
    }
}

impl HermitianMatrix {
    /// Validate that `m` is Hermitian within [`HERMITIAN_TOL`], then store the
    /// symmetrized matrix `(m + m†)/2`.
    pub fn new(m: CMatrix) -> Result<Self, NumericsError> {
        if m.nrows() != m.ncols() {
            return Err(NumericsError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(NumericsError::Empty);
        }
        let mut deviation = 0.0f64;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                deviation = deviation.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if deviation > HERMITIAN_TOL {
            return Err(NumericsError::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrize a matrix known to be Hermitian up to floating-point noise.
    ///
    /// Intended for internally computed quantities (weighted outer-product
    /// sums, factorization outputs) where asymmetry is roundoff, not a bug.
    /// Panics if `m` is not square.
    pub fn symmetrized(m: CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrized requires a square matrix");
        let adj = m.adjoint();
        let half = C64::new(0.5, 0.0);
        Self { m: (m + adj) * half }
    }

    pub fn identity(n: usize) -> Self {
        Self { m: CMatrix::identity(n, n) }
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&d| C64::new(d, 0.0)));
        Self { m: CMatrix::from_diagonal(&v) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    /// Trace, which is real for a Hermitian matrix.
    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// `self * s` for a real scalar.
    pub fn scaled(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    /// `self + s * I` for a real scalar.
    pub fn add_scaled_identity(&self, s: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(s, 0.0);
        }
        Self { m }
    }

    /// Entry-wise sum with another Hermitian matrix of the same dimension.
    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.dim() != other.dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(Self { m: &self.m + &other.m })
    }
}

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`, and the input is
/// recovered as `U diag(λ) U†`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eig(a: &HermitianMatrix) -> Result<EigenDecomposition, NumericsError> {
    let eig = a
        .matrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(NumericsError::EigConvergence)?;
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Cholesky factorization that actually enforces positive definiteness.
///
/// nalgebra's complex Cholesky happily takes complex square roots of
/// negative pivots instead of failing, so the factor's diagonal must be
/// verified to be real and positive.
pub(crate) fn cholesky_pd(
    a: &HermitianMatrix,
) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>, NumericsError> {
    let chol = a
        .matrix()
        .clone()
        .cholesky()
        .ok_or(NumericsError::NotPositiveDefinite)?;
    for i in 0..a.dim() {
        let d = chol.l_dirty()[(i, i)];
        if d.re <= 0.0 || d.re.is_nan() || d.im.abs() > 1e-8 * d.re {
            return Err(NumericsError::NotPositiveDefinite);
        }
    }
    Ok(chol)
}

/// Inverse and log-determinant of a positive definite Hermitian matrix,
/// both obtained from one Cholesky factorization.
pub fn inverse_and_logdet(a: &HermitianMatrix) -> Result<(HermitianMatrix, f64), NumericsError> {
    let chol = cholesky_pd(a)?;
    let log_det = 2.0 * (0..a.dim()).map(|i| chol.l_dirty()[(i, i)].re.ln()).sum::<f64>();
    let inv = HermitianMatrix::symmetrized(chol.inverse());
    Ok((inv, log_det))
}

/// The quadratic form `z† A⁻¹ z` given the precomputed inverse `A⁻¹`.
pub fn quad_form(z: &CVector, a_inv: &HermitianMatrix) -> Result<f64, NumericsError> {
    if z.len() != a_inv.dim() {
        return Err(NumericsError::DimensionMismatch {
            expected: a_inv.dim(),
            actual: z.len(),
        });
    }
    let y = a_inv.matrix() * z;
    Ok(z.dotc(&y).re)
}

// ---------------------------------------------------------------------------
// Snapshots and sampling
// ---------------------------------------------------------------------------

/// A set of `K` complex `N`-vectors stored as the columns of an `N×K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: CMatrix,
}

impl SnapshotSet {
    pub fn new(data: CMatrix) -> Result<Self, NumericsError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(NumericsError::Empty);
        }
        Ok(Self { data })
    }

    /// Number of channels `N` (rows).
    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Number of range bins `K` (columns).
    pub fn bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, k: usize) -> CVector {
        self.data.column(k).into_owned()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }
}

/// Draw `count` i.i.d. samples from the circular complex Gaussian `CN(0, M)`.
///
/// A lower-triangular Cholesky factor `F` of `M` maps white noise (real and
/// imaginary parts each `N(0, 1/2)`) to the target covariance: `z = F w`
/// with `E[z z†] = F F† = M` exactly.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    m: &HermitianMatrix,
    count: usize,
    rng: &mut R,
) -> Result<SnapshotSet, NumericsError> {
    if count == 0 {
        return Err(NumericsError::Empty);
    }
    let chol = cholesky_pd(m)?;
    let n = m.dim();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut white = CMatrix::zeros(n, count);
    for k in 0..count {
        for i in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            white[(i, k)] = C64::new(re * scale, im * scale);
        }
    }
    SnapshotSet::new(chol.l() * white)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = substream(seed, "test-herm", 0);
        let b = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        HermitianMatrix::symmetrized(b)
    }

    fn random_pd(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = substream(seed, "test-pd", 0);
        let b = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        HermitianMatrix::symmetrized(&b * b.adjoint()).add_scaled_identity(0.1)
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.7, 0.0),
            C64::new(1.0, 0.0),
        ]);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(NumericsError::NotHermitian { .. })
        ));
    }

    #[test]
    fn rejects_non_square() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(HermitianMatrix::new(m), Err(NumericsError::NotSquare { .. })));
    }

    #[test]
    fn eig_identity() {
        let eig = hermitian_eig(&HermitianMatrix::identity(3)).unwrap();
        for v in &eig.eigenvalues {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn eig_diagonal_sorted_with_permutation_vectors() {
        let a = HermitianMatrix::from_diagonal(&[1.0, 2.0]);
        let eig = hermitian_eig(&a).unwrap();
        assert_relative_eq!(eig.eigenvalues[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(eig.eigenvalues[1], 1.0, max_relative = 1e-12);
        // Columns are (up to phase) permuted identity columns.
        for col in 0..2 {
            let c = eig.eigenvectors.column(col);
            let mags: Vec<f64> = c.iter().map(|z| z.norm()).collect();
            let mut sorted = mags.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(sorted[0] < 1e-12 && (sorted[1] - 1.0).abs() < 1e-12, "mags {mags:?}");
        }
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let a = random_hermitian(8, 11);
        let eig = hermitian_eig(&a).unwrap();
        let lam = CMatrix::from_diagonal(&DVector::from_iterator(
            8,
            eig.eigenvalues.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let rec = &eig.eigenvectors * lam * eig.eigenvectors.adjoint();
        let rel = (&rec - a.matrix()).norm() / a.frobenius_norm();
        assert!(rel < 1e-10, "reconstruction error {rel:e}");
        // Unitarity of U.
        let ident = &eig.eigenvectors * eig.eigenvectors.adjoint();
        assert!((ident - CMatrix::identity(8, 8)).norm() < 1e-10);
    }

    #[test]
    fn eig_eigenvalue_sum_matches_trace() {
        let a = random_pd(12, 5);
        let eig = hermitian_eig(&a).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        assert_relative_eq!(sum, a.trace(), max_relative = 1e-9);
    }

    #[test]
    fn inverse_identity() {
        let (inv, logdet) = inverse_and_logdet(&HermitianMatrix::identity(4)).unwrap();
        assert!((inv.matrix() - CMatrix::identity(4, 4)).norm() < 1e-12);
        assert!(logdet.abs() < 1e-12);
    }

    #[test]
    fn inverse_diagonal() {
        let (inv, logdet) = inverse_and_logdet(&HermitianMatrix::from_diagonal(&[2.0, 2.0])).unwrap();
        assert_relative_eq!(inv.entry(0, 0).re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(inv.entry(1, 1).re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(logdet, 4.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn logdet_of_correlated_pair() {
        // [[1, 0.9], [0.9, 1]] has determinant 1 - 0.81 = 0.19.
        let m = CMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0),
            C64::new(0.9, 0.0),
            C64::new(0.9, 0.0),
            C64::new(1.0, 0.0),
        ]);
        let a = HermitianMatrix::new(m).unwrap();
        let (_, logdet) = inverse_and_logdet(&a).unwrap();
        assert_relative_eq!(logdet, 0.19f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn inverse_satisfies_residual_bound() {
        let a = random_pd(10, 3);
        let (inv, _) = inverse_and_logdet(&a).unwrap();
        let resid = (a.matrix() * inv.matrix() - CMatrix::identity(10, 10)).norm();
        assert!(resid < 1e-9, "residual {resid:e}");
    }

    #[test]
    fn inverse_rejects_indefinite() {
        let a = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            inverse_and_logdet(&a),
            Err(NumericsError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn quad_form_unit_vector() {
        let z = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let v = quad_form(&z, &HermitianMatrix::identity(2)).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn quad_form_modulus_sum() {
        let z = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let v = quad_form(&z, &HermitianMatrix::identity(2)).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn quad_form_correlated_pair() {
        // z = (1, 1), A = [[1, 0.9], [0.9, 1]]: z† A⁻¹ z = 2/1.9.
        let m = CMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0),
            C64::new(0.9, 0.0),
            C64::new(0.9, 0.0),
            C64::new(1.0, 0.0),
        ]);
        let (inv, _) = inverse_and_logdet(&HermitianMatrix::new(m).unwrap()).unwrap();
        let z = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert_relative_eq!(quad_form(&z, &inv).unwrap(), 2.0 / 1.9, max_relative = 1e-10);
    }

    #[test]
    fn quad_form_dimension_mismatch() {
        let z = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        assert!(matches!(
            quad_form(&z, &HermitianMatrix::identity(2)),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let m = random_pd(4, 9);
        let a = sample_complex_gaussian(&m, 16, &mut substream(1, "s", 0)).unwrap();
        let b = sample_complex_gaussian(&m, 16, &mut substream(1, "s", 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn sampling_matches_diagonal_variances() {
        let m = HermitianMatrix::from_diagonal(&[4.0, 1.0]);
        let z = sample_complex_gaussian(&m, 50_000, &mut substream(21, "lln", 0)).unwrap();
        for (i, expect) in [4.0, 1.0].iter().enumerate() {
            let var: f64 = z.matrix().row(i).iter().map(|v| v.norm_sqr()).sum::<f64>()
                / z.bins() as f64;
            assert!(
                (var - expect).abs() / expect < 0.05,
                "coordinate {i}: variance {var} vs {expect}"
            );
        }
    }

    #[test]
    fn sampling_empirical_covariance_converges() {
        let m = random_pd(4, 33);
        let count = 100_000;
        let z = sample_complex_gaussian(&m, count, &mut substream(22, "lln", 1)).unwrap();
        let emp = z.matrix() * z.matrix().adjoint() / C64::new(count as f64, 0.0);
        let rel = (&emp - m.matrix()).norm() / m.frobenius_norm();
        assert!(rel < 0.05, "empirical covariance error {rel}");
    }

    #[test]
    fn sampling_rejects_indefinite() {
        let m = HermitianMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(sample_complex_gaussian(&m, 4, &mut substream(0, "x", 0)).is_err());
    }

    #[test]
    fn serde_round_trip_preserves_entries() {
        let a = random_pd(3, 77);
        let json = serde_json::to_string(&a).unwrap();
        let back: HermitianMatrix = serde_json::from_str(&json).unwrap();
        assert!((a.matrix() - back.matrix()).norm() < 1e-15);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_pd(n: usize) -> impl Strategy<Value = HermitianMatrix> {
            (0u64..1_000_000).prop_map(move |seed| random_pd(n, seed))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn inverse_residual_below_tolerance(a in arb_pd(6)) {
                let (inv, _) = inverse_and_logdet(&a).unwrap();
                let resid = (a.matrix() * inv.matrix() - CMatrix::identity(6, 6)).norm();
                prop_assert!(resid < 1e-9);
            }

            #[test]
            fn eigenvalue_sum_equals_trace(a in arb_pd(6)) {
                let eig = hermitian_eig(&a).unwrap();
                let sum: f64 = eig.eigenvalues.iter().sum();
                prop_assert!((sum - a.trace()).abs() <= 1e-9 * a.trace().abs().max(1.0));
            }

            #[test]
            fn quad_form_positive_for_nonzero(a in arb_pd(4), coords in prop::collection::vec(-10.0f64..10.0, 8)) {
                let z = CVector::from_fn(4, |i, _| C64::new(coords[2 * i], coords[2 * i + 1]));
                prop_assume!(z.norm() > 1e-6);
                let (inv, _) = inverse_and_logdet(&a).unwrap();
                prop_assert!(quad_form(&z, &inv).unwrap() > 0.0);
            }
        }
    }
}
