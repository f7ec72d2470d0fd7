use super::Matrix;
use crate::{Error, Result};

/// Upper bound on cyclic Jacobi sweeps before reporting non-convergence.
pub const MAX_SWEEPS: usize = 50;

/// Largest dimension routed to the Jacobi solver by [`sym_eig`]; bigger
/// matrices go through Householder tridiagonalization and implicit QL.
pub const JACOBI_MAX_DIM: usize = 192;

/// Input asymmetry tolerated before symmetrization is considered a caller bug.
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in descending order, with eigenvectors stored column-wise in
/// the same order when requested.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
    pub vectors: Option<Matrix>,
}

impl EigenSpectrum {
    /// Tolerance below zero still accepted as numerical noise for PSD input.
    pub fn psd_tolerance(&self) -> f64 {
        let max_abs = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1e-8 * max_abs
    }

    /// Eigenvalues with tiny negatives clamped to zero. Anything more
    /// negative than [`Self::psd_tolerance`] means the input was not PSD.
    pub fn psd_values(&self) -> Result<Vec<f64>> {
        let tol = self.psd_tolerance();
        self.values
            .iter()
            .map(|&v| {
                if v < -tol {
                    Err(Error::NotPositiveSemidefinite { value: v, tol })
                } else {
                    Ok(v.max(0.0))
                }
            })
            .collect()
    }

    /// `V diag(f(λ)) Vᵀ`. Requires vectors.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let v = self
            .vectors
            .as_ref()
            .ok_or_else(|| Error::invalid("eigenvectors were not computed"))?;
        let n = v.rows();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for (k, &l) in mapped.iter().enumerate() {
                    acc += v[(i, k)] * l * v[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        Ok(out)
    }
}

fn check_symmetric(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let scale = a.frobenius_norm().max(1.0);
    if a.max_asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {:e})",
            a.max_asymmetry()
        )));
    }
    a.symmetrized()
}

/// Symmetric eigendecomposition. Small matrices use cyclic Jacobi,
/// larger ones Householder + implicit QL.
pub fn sym_eig(a: &Matrix, want_vectors: bool) -> Result<EigenSpectrum> {
    if a.rows() <= JACOBI_MAX_DIM {
        jacobi_eig(a, 1e-12, want_vectors)
    } else {
        tridiagonal_ql_eig(a, want_vectors)
    }
}

fn sort_descending(values: Vec<f64>, vectors: Option<Matrix>) -> EigenSpectrum {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = vectors.map(|v| {
        let mut out = Matrix::zeros(n, n);
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..n {
                out[(r, new_col)] = v[(r, old_col)];
            }
        }
        out
    });
    EigenSpectrum {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Cyclic Jacobi. Converged once the off-diagonal Frobenius norm drops
/// below `tol · ‖A‖_F`.
pub fn jacobi_eig(a: &Matrix, tol: f64, want_vectors: bool) -> Result<EigenSpectrum> {
    let mut a = check_symmetric(a)?;
    let n = a.rows();
    let mut v = want_vectors.then(|| Matrix::identity(n));
    let norm = a.frobenius_norm();
    if n == 0 || norm == 0.0 {
        let values = (0..n).map(|i| a[(i, i)]).collect();
        return Ok(sort_descending(values, v));
    }
    let target = tol * norm;

    let mut off = off_diagonal_norm(&a);
    let mut sweeps = 0;
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        off = off_diagonal_norm(&a);
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    Ok(sort_descending(values, v))
}

/// Householder tridiagonalization followed by implicit-shift QL
/// (the EISPACK tred2/tql2 pair). O(n³) with a small constant; used for
/// covariance matrices of wide embeddings.
pub fn tridiagonal_ql_eig(a: &Matrix, want_vectors: bool) -> Result<EigenSpectrum> {
    let mut v = check_symmetric(a)?;
    let n = v.rows();
    if n == 0 {
        return Ok(EigenSpectrum {
            values: Vec::new(),
            vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
        });
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(sort_descending(d, want_vectors.then_some(v)))
}

fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let max_iter = 30 * n.max(1);
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::NoConvergence {
                        sweeps: iter,
                        off_norm: e[l].abs(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk1 = v[(k, i + 1)];
                        let vk = v[(k, i)];
                        v[(k, i + 1)] = s * vk + c * vk1;
                        v[(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.gen_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_diag(&[1.0, 3.0]);
        let s = sym_eig(&a, false).unwrap();
        assert_eq!(s.values, vec![3.0, 1.0]);
    }

    #[test]
    fn two_by_two() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let s = sym_eig(&a, false).unwrap();
        assert!((s.values[0] - 3.0).abs() < 1e-12);
        assert!((s.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gives_ones() {
        let s = sym_eig(&Matrix::identity(5), false).unwrap();
        assert_eq!(s.values, vec![1.0; 5]);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a, false), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn trace_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symmetric(20, &mut rng);
        let s = sym_eig(&a, false).unwrap();
        let sum: f64 = s.values.iter().sum();
        assert!((sum - a.trace()).abs() <= 1e-8 * a.trace().abs().max(1.0));
    }

    #[test]
    fn jacobi_and_ql_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 7, 16, 40] {
            let a = random_symmetric(n, &mut rng);
            let j = jacobi_eig(&a, 1e-12, false).unwrap();
            let q = tridiagonal_ql_eig(&a, false).unwrap();
            for (x, y) in j.values.iter().zip(&q.values) {
                assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn ql_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symmetric(30, &mut rng);
        let s = tridiagonal_ql_eig(&a, true).unwrap();
        let r = s.reconstruct_with(|l| l).unwrap();
        let mut diff = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                diff += (a[(i, j)] - r[(i, j)]).powi(2);
            }
        }
        assert!(diff.sqrt() <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn psd_clamping() {
        let s = EigenSpectrum {
            values: vec![1.0, -1e-12],
            vectors: None,
        };
        assert_eq!(s.psd_values().unwrap(), vec![1.0, 0.0]);
        let bad = EigenSpectrum {
            values: vec![1.0, -1e-3],
            vectors: None,
        };
        assert!(bad.psd_values().is_err());
    }
}
