use rayon::prelude::*;

use super::Matrix;

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rows scaled to unit length; zero rows stay zero.
pub fn unit_rows(features: &Matrix) -> Matrix {
    let mut out = features.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Cosine similarity matrix. A zero row is similar (1) only to other
/// zero rows, so the kernel keeps a unit diagonal.
pub fn cosine_kernel(features: &Matrix) -> Matrix {
    let unit = unit_rows(features);
    let zero: Vec<bool> = features.row_iter().map(|r| norm(r) == 0.0).collect();
    let n = features.rows();
    let mut k = Matrix::zeros(n, n);
    if n == 0 {
        return k;
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = unit.row(i);
            (i..n)
                .map(|j| {
                    if zero[i] || zero[j] {
                        if zero[i] && zero[j] {
                            1.0
                        } else {
                            0.0
                        }
                    } else if i == j {
                        1.0
                    } else {
                        ri.iter().zip(unit.row(j)).map(|(a, b)| a * b).sum()
                    }
                })
                .collect()
        })
        .collect();
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `(1/n)·ĜᵀĜ` for the row-normalized features Ĝ. Zero rows are mapped to
/// a shared extra axis orthogonal to the data, which reproduces the zero-row
/// convention of [`cosine_kernel`]. Its nonzero spectrum equals that of
/// `cosine_kernel(F)/n`.
pub fn normalized_gram(features: &Matrix) -> Matrix {
    let n = features.rows();
    let mut unit = unit_rows(features);
    let zero_rows: Vec<usize> = features
        .row_iter()
        .enumerate()
        .filter(|(_, r)| norm(r) == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !zero_rows.is_empty() {
        let d = unit.cols();
        let mut data = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            data.extend_from_slice(unit.row(i));
            data.push(0.0);
        }
        for &i in &zero_rows {
            data[i * (d + 1) + d] = 1.0;
        }
        unit = Matrix::new(n, d + 1, data).expect("shape is consistent");
    }
    let mut g = unit.gram();
    if n > 0 {
        g.scale(1.0 / n as f64);
    }
    g
}

/// Mean cosine similarity over unordered pairs `i < j`. `None` for fewer
/// than two rows.
pub fn pairwise_mean_cosine(features: &Matrix) -> Option<f64> {
    let n = features.rows();
    if n < 2 {
        return None;
    }
    let k = cosine_kernel(features);
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += k[(i, j)];
        }
    }
    Some(total / (n * (n - 1) / 2) as f64)
}
