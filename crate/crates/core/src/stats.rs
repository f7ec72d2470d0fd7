//! Scenario rankings, Spearman rank correlation and ROC AUC.

use serde::{Deserialize, Serialize};

use crate::divmetrics::Direction;
use crate::{Error, Result};

/// 1-based ranks in ascending order of `values`; ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// One metric's values across scenarios (`None` = metric absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub direction: Direction,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMatrix {
    pub metrics: Vec<String>,
    pub scenarios: Vec<String>,
    /// `ranks[m][s]`, 1 = best under metric `m`'s direction.
    pub ranks: Vec<Vec<f64>>,
    /// Metrics left out because some scenario lacked a value.
    #[serde(default)]
    pub dropped: Vec<String>,
}

/// Ranks scenarios per metric. Rows missing a value for some scenario are
/// dropped; a row missing every value is an error.
pub fn rank_scenarios(scenarios: &[String], rows: &[MetricRow]) -> Result<RankingMatrix> {
    let mut out = RankingMatrix {
        metrics: Vec::new(),
        scenarios: scenarios.to_vec(),
        ranks: Vec::new(),
        dropped: Vec::new(),
    };
    for row in rows {
        if row.values.len() != scenarios.len() {
            return Err(Error::DimensionMismatch {
                expected: scenarios.len(),
                found: row.values.len(),
            });
        }
        if row.values.iter().all(Option::is_none) {
            return Err(Error::invalid(format!(
                "metric {:?} is absent for every scenario",
                row.name
            )));
        }
        let Some(values) = row.values.iter().copied().collect::<Option<Vec<f64>>>() else {
            out.dropped.push(row.name.clone());
            continue;
        };
        let keyed: Vec<f64> = match row.direction {
            Direction::HigherBetter => values.iter().map(|v| -v).collect(),
            Direction::LowerBetter => values,
        };
        out.metrics.push(row.name.clone());
        out.ranks.push(average_ranks(&keyed));
    }
    Ok(out)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Tie-safe Spearman correlation (Pearson on average ranks). `Ok(None)` when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 observations"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Pairwise Spearman between metric rankings. The diagonal is 1; pairs
/// involving a constant ranking are `None`.
#[allow(clippy::needless_range_loop)]
pub fn correlation_matrix(r: &RankingMatrix) -> Result<Vec<Vec<Option<f64>>>> {
    let m = r.metrics.len();
    if m < 2 {
        return Err(Error::invalid(format!(
            "correlation needs at least 2 ranked metrics, got {m}"
        )));
    }
    let mut out = vec![vec![None; m]; m];
    for i in 0..m {
        out[i][i] = Some(1.0);
        for j in (i + 1)..m {
            let c = spearman(&r.ranks[i], &r.ranks[j])?;
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    Ok(out)
}

/// ROC AUC via the Mann–Whitney statistic with midranks:
/// `(concordant + ½·tied) / (n₊·n₋)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "AUC needs at least one positive and one negative sample",
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC scores contain NaN"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest AUC over classes present in `labels` (plain AUC of
/// class 1 for two classes). Rows of `probs` are per-class probabilities.
pub fn macro_auc(probs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let bin: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return auc(&scores, &bin);
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..num_classes {
        let bin: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if bin.iter().all(|&b| b) || !bin.iter().any(|&b| b) {
            continue;
        }
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        total += auc(&scores, &bin)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("AUC needs at least two classes present"));
    }
    Ok(total / used as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
