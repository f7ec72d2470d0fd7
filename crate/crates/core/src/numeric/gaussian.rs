use super::{sym_eig, Matrix};
use crate::{Error, Result};

/// Mean vector and unbiased covariance of a feature set.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

pub fn gaussian_summary(features: &Matrix) -> Result<GaussianSummary> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let (mean, centered) = center(features);
    let mut covariance = centered.gram();
    covariance.scale(1.0 / (n - 1) as f64);
    Ok(GaussianSummary { mean, covariance })
}

fn center(features: &Matrix) -> (Vec<f64>, Matrix) {
    let n = features.rows();
    let mut mean = vec![0.0; features.cols()];
    for row in features.row_iter() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = features.clone();
    for i in 0..n {
        for (x, &m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    (mean, centered)
}

/// Squared Fréchet distance between the Gaussian fits (unbiased covariance)
/// of two samples: `‖μ₁ − μ₂‖² + Tr Σ₁ + Tr Σ₂ − 2 Tr((Σ₁Σ₂)^{1/2})`.
///
/// When a sample has fewer rows than features, the cross term is the
/// nuclear norm of `X̃₁X̃₂ᵀ / √((n₁−1)(n₂−1))` (centred data), which needs an
/// eigendecomposition of size `min(n₁, n₂)` instead of `d`.
pub fn frechet_distance(x1: &Matrix, x2: &Matrix) -> Result<f64> {
    if x1.cols() != x2.cols() {
        return Err(Error::DimensionMismatch {
            expected: x1.cols(),
            found: x2.cols(),
        });
    }
    let (n1, n2, d) = (x1.rows(), x2.rows(), x1.cols());
    if n1 < 2 || n2 < 2 {
        return Err(Error::invalid(format!(
            "covariance needs at least 2 samples, got {}",
            n1.min(n2)
        )));
    }
    if n1.min(n2) >= d {
        let g1 = gaussian_summary(x1)?;
        let g2 = gaussian_summary(x2)?;
        let mean_term: f64 = g1.mean.iter().zip(&g2.mean).map(|(a, b)| (a - b).powi(2)).sum();
        let cross = trace_sqrt_product(&g1.covariance, &g2.covariance)?;
        return Ok(mean_term + g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross);
    }
    let (m1, c1) = center(x1);
    let (m2, c2) = center(x2);
    let mean_term: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b).powi(2)).sum();
    let tr1 = c1.frobenius_norm().powi(2) / (n1 - 1) as f64;
    let tr2 = c2.frobenius_norm().powi(2) / (n2 - 1) as f64;
    let mut a = c1.matmul(&c2.transpose())?;
    a.scale(1.0 / (((n1 - 1) * (n2 - 1)) as f64).sqrt());
    // both products share the nonzero spectrum; take the smaller one
    let small = if n1 <= n2 { a.transpose().gram() } else { a.gram() };
    let values = sym_eig(&small, false)?.psd_values()?;
    let root = floored_sqrt(&values);
    let cross: f64 = values.iter().map(|&l| root(l)).sum();
    Ok(mean_term + tr1 + tr2 - 2.0 * cross)
}

/// Square root with eigenvalues at roundoff level treated as exact zeros.
/// Without the floor, `√ε` terms from rank-deficient covariances add up
/// to errors around 1e-8.
fn floored_sqrt(values: &[f64]) -> impl Fn(f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = values.len() as f64 * f64::EPSILON * max;
    move |l| if l <= floor { 0.0 } else { l.sqrt() }
}

/// `Tr((S1·S2)^{1/2})`, evaluated as `Σ √λᵢ(S1^{1/2} S2 S1^{1/2})`.
///
/// Both inputs must be PSD up to eigenvalue noise; noise is clamped to zero.
pub fn trace_sqrt_product(s1: &Matrix, s2: &Matrix) -> Result<f64> {
    if s1.rows() != s2.rows() || s1.cols() != s2.cols() {
        return Err(Error::DimensionMismatch {
            expected: s1.rows(),
            found: s2.rows(),
        });
    }
    let e1 = sym_eig(s1, true)?;
    let root = floored_sqrt(&e1.psd_values()?);
    let s1_half = e1.reconstruct_with(root)?;
    let middle = s1_half.matmul(s2)?.matmul(&s1_half)?.symmetrized()?;
    let values = sym_eig(&middle, false)?.psd_values()?;
    let root = floored_sqrt(&values);
    Ok(values.iter().map(|&l| root(l)).sum())
}
