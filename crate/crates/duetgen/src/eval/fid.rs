//! Distribution distance and spread over feature-vector sets.
//!
//! [`frechet_distance`] fits a Gaussian to each set and returns
//! `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2·(Σ_a Σ_b)^{1/2})`. The cross term is
//! the trace of the root of the symmetric product `Σ_a^{1/2} Σ_b Σ_a^{1/2}`
//! (PSD whenever both covariances are, so no complex arithmetic is needed);
//! it is evaluated as the sum of singular values of `Σ_a^{1/2} Σ_b^{1/2}`,
//! whose squares are exactly the eigenvalues of that symmetric product —
//! this form stays accurate when covariances are near-singular, where an
//! explicit eigendecomposition of the product loses the small eigenvalues
//! to rounding. Each factor root comes from a symmetric eigendecomposition.
//! Covariances use the n−1 denominator and are regularized by `+1e-6·I`
//! before the root. Tiny negative results (numerical noise down to −1e-8)
//! clamp to zero; anything more negative is reported as a numerical error.
//!
//! [`diversity`] is the mean Euclidean distance over all unordered pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const COVARIANCE_REGULARIZER: f64 = 1e-6;
const NEGATIVE_FLOOR: f64 = -1e-8;

fn check_set(set: &[Vec<f64>], name: &str) -> Result<usize> {
    if set.len() < 2 {
        return Err(Error::data(format!(
            "{name} set needs at least 2 feature vectors, got {}",
            set.len()
        )));
    }
    let dim = set[0].len();
    if dim == 0 {
        return Err(Error::data(format!("{name} set has empty feature vectors")));
    }
    for (i, v) in set.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::data(format!(
                "{name} set is ragged: vector 0 has {dim} entries, vector {i} has {}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!(
                "{name} set contains a non-finite feature (vector {i})"
            )));
        }
    }
    Ok(dim)
}

/// Sample mean and (n−1)-normalized covariance of a feature set.
fn gaussian_fit(set: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let dim = set[0].len();
    let mut mean = DVector::zeros(dim);
    for v in set {
        for (k, &x) in v.iter().enumerate() {
            mean[k] += x;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for v in set {
        let d = DVector::from_iterator(dim, v.iter().copied()) - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    (mean, cov)
}

/// Square root of a symmetric PSD matrix via eigendecomposition, clamping
/// small negative eigenvalues to zero.
fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * roots * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn frechet_distance(set_a: &[Vec<f64>], set_b: &[Vec<f64>]) -> Result<f64> {
    let dim_a = check_set(set_a, "first")?;
    let dim_b = check_set(set_b, "second")?;
    if dim_a != dim_b {
        return Err(Error::data(format!(
            "feature dimension mismatch: {dim_a} vs {dim_b}"
        )));
    }
    let (mu_a, mut cov_a) = gaussian_fit(set_a);
    let (mu_b, mut cov_b) = gaussian_fit(set_b);
    for k in 0..dim_a {
        cov_a[(k, k)] += COVARIANCE_REGULARIZER;
        cov_b[(k, k)] += COVARIANCE_REGULARIZER;
    }
    let root_a = symmetric_sqrt(&cov_a);
    let root_b = symmetric_sqrt(&cov_b);
    let cross_trace: f64 = (&root_a * &root_b).singular_values().iter().sum();
    let mean_term = (&mu_a - &mu_b).norm_squared();
    let value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross_trace;
    if value < NEGATIVE_FLOOR {
        return Err(Error::numerical(format!(
            "distribution distance came out {value}, below the numerical floor"
        )));
    }
    Ok(value.max(0.0))
}

/// Mean pairwise Euclidean distance over all unordered pairs in a set.
pub fn diversity(set: &[Vec<f64>]) -> Result<f64> {
    check_set(set, "diversity")?;
    let n = set.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = set[i]
                .iter()
                .zip(&set[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}
