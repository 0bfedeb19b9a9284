//! Fréchet distance between Gaussian fits of two feature sets (the FID
//! formula), on externally computed features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues down to `-EIG_TOL * max(1, |largest|)` are clipped to zero.
pub const EIG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl FeatureStats {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, mean has dimension {d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-8 {
            return Err(Error::Numeric(format!("covariance asymmetric by {asym}")));
        }
        Ok(Self {
            mean,
            covariance,
            count,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and sample covariance (divisor n - 1) of an n x d matrix
/// given as rows.
pub fn feature_stats(rows: &[Vec<f64>]) -> Result<FeatureStats> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "feature statistics need at least 2 samples, got {n}"
        )));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("feature rows must share a positive dimension".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let mut cov = centred.transpose() * &centred / (n as f64 - 1.0);
    cov = (&cov + cov.transpose()) * 0.5;
    FeatureStats::new(mean, cov, n)
}

fn clipped_eigenvalues(m: &DMatrix<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut values = eig.eigenvalues.clone();
    for v in values.iter_mut() {
        if *v < -EIG_TOL * scale {
            return Err(Error::Numeric(format!(
                "{what} has eigenvalue {v}; not positive semi-definite"
            )));
        }
        *v = v.max(0.0);
    }
    Ok((values, eig.eigenvectors))
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`, clamped at 0.
///
/// The trace of the product root is taken as the trace of
/// `(S_a^(1/2) S_b S_a^(1/2))^(1/2)`, a symmetric PSD matrix with the same
/// eigenvalues as `S_a S_b`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = &a.mean - &b.mean;
    let mean_term = diff.dot(&diff);

    let (va, qa) = clipped_eigenvalues(&a.covariance, "covariance A")?;
    clipped_eigenvalues(&b.covariance, "covariance B")?;
    let sqrt_a = &qa * DMatrix::from_diagonal(&va.map(f64::sqrt)) * qa.transpose();
    let inner = &sqrt_a * &b.covariance * &sqrt_a;
    let (vi, _) = clipped_eigenvalues(&inner, "covariance product")?;
    let tr_root: f64 = vi.iter().map(|v| v.sqrt()).sum();

    let value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_root;
    if value < -EIG_TOL * (1.0 + mean_term + a.covariance.trace() + b.covariance.trace()) {
        return Err(Error::Numeric(format!("Fréchet distance evaluated to {value}")));
    }
    Ok(value.max(0.0))
}
