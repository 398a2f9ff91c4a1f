//! Small dense linear-algebra helpers shared by the problem blocks and the
//! parameter validators.
//!
//! Spectral quantities are estimated by power iteration on shifted
//! positive-semidefinite matrices; the test suite cross-checks them against a
//! dense eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A per-clique constraint block matrix.
///
/// Consensus problems use identity / negated-identity blocks, which keeps the
/// hot path free of dense matrix products and makes the distributed runtime
/// reproduce the centralized arithmetic bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Identity(usize),
    NegIdentity(usize),
    Dense(DMatrix<f64>),
}

impl LinearMap {
    pub fn nrows(&self) -> usize {
        match self {
            LinearMap::Identity(d) | LinearMap::NegIdentity(d) => *d,
            LinearMap::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            LinearMap::Identity(d) | LinearMap::NegIdentity(d) => *d,
            LinearMap::Dense(m) => m.ncols(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.ncols());
        match self {
            LinearMap::Identity(_) => v.clone(),
            LinearMap::NegIdentity(_) => -v,
            LinearMap::Dense(m) => m * v,
        }
    }

    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.nrows());
        match self {
            LinearMap::Identity(_) => v.clone(),
            LinearMap::NegIdentity(_) => -v,
            LinearMap::Dense(m) => m.transpose() * v,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearMap::Identity(d) => DMatrix::identity(*d, *d),
            LinearMap::NegIdentity(d) => -DMatrix::identity(*d, *d),
            LinearMap::Dense(m) => m.clone(),
        }
    }

    /// Gram matrix `MᵀM`.
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            LinearMap::Identity(d) | LinearMap::NegIdentity(d) => DMatrix::identity(*d, *d),
            LinearMap::Dense(m) => m.transpose() * m,
        }
    }

    /// Largest eigenvalue of `MᵀM` (exactly 1 for the identity variants).
    pub fn gram_lambda_max(&self) -> f64 {
        match self {
            LinearMap::Identity(_) | LinearMap::NegIdentity(_) => 1.0,
            LinearMap::Dense(m) => lambda_max_symmetric(&(m.transpose() * m)),
        }
    }
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-12;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic start vector with hash-scrambled entries. A structured
/// start (constant or linear in the index) can sit exactly orthogonal to the
/// top eigenvector of graph-structured matrices, locking the iteration onto
/// the wrong eigenvalue.
fn power_start(dim: usize, seed: u64) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |i, _| {
        0.5 + splitmix64(seed.wrapping_add(i as u64)) as f64 / u64::MAX as f64
    });
    v /= v.norm();
    v
}

fn power_iterate_psd(m: &DMatrix<f64>, seed: u64) -> f64 {
    let mut v = power_start(m.nrows(), seed);
    let mut lambda = 0.0_f64;
    for _ in 0..POWER_MAX_ITERS {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&mv);
        v = mv / norm;
        if (next - lambda).abs() <= POWER_REL_TOL * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// Rayleigh-quotient stopping rule. Two independent starts guard against an
/// unlucky orthogonal initialization.
fn lambda_max_psd(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    assert_eq!(dim, m.ncols(), "matrix must be square");
    if dim == 0 {
        return 0.0;
    }
    if dim == 1 {
        return m[(0, 0)].max(0.0);
    }
    power_iterate_psd(m, 0x5EED).max(power_iterate_psd(m, 0xACC0))
}

/// An upper bound on the spectral radius (infinity norm of the matrix).
fn spectral_radius_bound(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a general symmetric matrix.
pub fn lambda_max_symmetric(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    if dim == 0 {
        return 0.0;
    }
    if dim == 1 {
        return m[(0, 0)];
    }
    let bound = spectral_radius_bound(m);
    if bound == 0.0 {
        return 0.0;
    }
    // bound*I + M is PSD, so its top eigenvalue is reachable by plain power
    // iteration regardless of the sign pattern of M's spectrum.
    let shifted = DMatrix::identity(dim, dim) * bound + m;
    lambda_max_psd(&shifted) - bound
}

/// Smallest eigenvalue of a general symmetric matrix.
pub fn lambda_min_symmetric(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    if dim == 0 {
        return 0.0;
    }
    if dim == 1 {
        return m[(0, 0)];
    }
    let bound = spectral_radius_bound(m);
    if bound == 0.0 {
        return 0.0;
    }
    let shifted = DMatrix::identity(dim, dim) * bound - m;
    bound - lambda_max_psd(&shifted)
}

/// Check that `v` is finite and below the divergence guard.
pub fn check_finite(v: &DVector<f64>, iteration: usize, guard: f64) -> Result<()> {
    let norm = v.norm();
    if !norm.is_finite() || norm > guard {
        return Err(Error::Divergence { iteration, norm, guard });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_maps_are_noops() {
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(LinearMap::Identity(3).apply(&v), v);
        assert_eq!(LinearMap::NegIdentity(3).apply(&v), -&v);
        assert_eq!(LinearMap::Identity(3).gram_lambda_max(), 1.0);
        assert_eq!(LinearMap::NegIdentity(3).gram_lambda_max(), 1.0);
    }

    #[test]
    fn lambda_extremes_match_dense_eigensolver() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for dim in [2usize, 3, 5, 8, 13] {
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let sym = (&a + a.transpose()) * 0.5;
            let eig = sym.clone().symmetric_eigen().eigenvalues;
            let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(lambda_max_symmetric(&sym), hi, epsilon = 1e-8);
            assert_relative_eq!(lambda_min_symmetric(&sym), lo, epsilon = 1e-8);
        }
    }

    #[test]
    fn scalar_matrix_is_exact() {
        let m = DMatrix::identity(4, 4) * 2.5;
        assert_relative_eq!(lambda_max_symmetric(&m), 2.5, epsilon = 1e-12);
        assert_relative_eq!(lambda_min_symmetric(&m), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let m = DMatrix::zeros(3, 3);
        assert_eq!(lambda_max_symmetric(&m), 0.0);
        assert_eq!(lambda_min_symmetric(&m), 0.0);
    }

    #[test]
    fn path_mixing_matrix_extremes() {
        // Spectrum {1, 1/2, −1/2}; the −1/2 eigenvector (1, −2, 1) is
        // orthogonal to any index-linear start vector.
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5]);
        assert_relative_eq!(lambda_min_symmetric(&w), -0.5, epsilon = 1e-10);
        assert_relative_eq!(lambda_max_symmetric(&w), 1.0, epsilon = 1e-10);
    }
}
