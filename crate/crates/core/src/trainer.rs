//! Reference classifier: multinomial logistic regression trained with Adam,
//! weighted cross-entropy and early stopping on validation AUC.
//!
//! Besides the fitted model each run records, for a tracked set of samples,
//! the probability assigned to the true class after every epoch. Those logs
//! feed [`crate::datamap`].

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divmetrics::ProbMatrix;
use crate::numeric::Matrix;
use crate::resample::{rng, FoldAssignment};
use crate::stats::macro_auc;
use crate::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    None,
    InversePrevalence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Smallest validation-AUC gain that counts as an improvement.
    pub min_delta: f64,
    pub batch_size: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            max_epochs: 100,
            patience: 10,
            min_delta: 1e-4,
            batch_size: 32,
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::invalid("min_delta must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-class loss weights.
///
/// With two classes, inverse prevalence weights negatives 1 and positives
/// `N₋/N₊`. With more classes each class gets `max_count / count`.
pub fn class_weights(labels: &[usize], num_classes: usize, weighting: ClassWeighting) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::invalid(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    match weighting {
        ClassWeighting::None => Ok(vec![1.0; num_classes]),
        ClassWeighting::InversePrevalence if num_classes == 2 => {
            if counts[1] == 0 {
                return Err(Error::invalid("inverse prevalence needs at least one positive sample"));
            }
            Ok(vec![1.0, counts[0] as f64 / counts[1] as f64])
        }
        ClassWeighting::InversePrevalence => {
            let max = *counts.iter().max().unwrap_or(&0) as f64;
            Ok(counts
                .iter()
                .map(|&c| if c == 0 { 0.0 } else { max / c as f64 })
                .collect())
        }
    }
}

fn logits_row(w: &Matrix, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (c, o) in out.iter_mut().enumerate() {
        let row = w.row(c);
        *o = row[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[d];
    }
}

/// In-place softmax; returns `ln Σ exp(z)`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

fn check_inputs(w: &Matrix, x: &Matrix) -> Result<()> {
    if w.cols() != x.cols() + 1 {
        return Err(Error::DimensionMismatch {
            expected: w.cols() - 1,
            found: x.cols(),
        });
    }
    if !x.all_finite() {
        return Err(Error::invalid("features contain non-finite values"));
    }
    Ok(())
}

/// Weighted softmax cross-entropy and its gradient.
///
/// `w` is `C×(d+1)` with the bias in the last column. Each sample counts with
/// the weight of its class and the sum is divided by the total weight.
pub fn loss_and_grad(
    w: &Matrix,
    x: &Matrix,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Matrix)> {
    check_inputs(w, x)?;
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: labels.len(),
        });
    }
    let c = w.rows();
    if class_weights.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: class_weights.len(),
        });
    }
    if class_weights.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("class weights must be finite and nonnegative"));
    }
    let d = x.cols();
    let mut grad = Matrix::zeros(c, d + 1);
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::invalid(format!("label {y} out of range for {c} classes")));
        }
        let sw = class_weights[y];
        if sw == 0.0 {
            continue;
        }
        let xi = x.row(i);
        logits_row(w, xi, &mut z);
        let logit_y = z[y];
        let lse = softmax_in_place(&mut z);
        loss += sw * (lse - logit_y);
        total += sw;
        for (k, &p) in z.iter().enumerate() {
            let coef = sw * (p - if k == y { 1.0 } else { 0.0 });
            let g = grad.row_mut(k);
            for (gj, &xj) in g[..d].iter_mut().zip(xi) {
                *gj += coef * xj;
            }
            g[d] += coef;
        }
    }
    if total == 0.0 {
        return Err(Error::invalid("total sample weight is zero"));
    }
    grad.scale(1.0 / total);
    Ok((loss / total, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    /// `C×(d+1)`, bias last.
    pub weights: Matrix,
}

impl SoftmaxModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(num_classes, dim + 1),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols() - 1
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<ProbMatrix> {
        check_inputs(&self.weights, x)?;
        let c = self.num_classes();
        let mut out = Matrix::zeros(x.rows(), c);
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            logits_row(&self.weights, x.row(i), row);
            softmax_in_place(row);
        }
        ProbMatrix::new(out)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Per-sample trajectories of the true-class probability, one value per
/// epoch. Trajectories from a single run share their length; logs merged
/// across folds may not.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochProbLog {
    pub sample_ids: Vec<String>,
    pub trajectories: Vec<Vec<f64>>,
    /// Epoch (1-based) at which training stopped, for single-run logs.
    pub stop_epoch: Option<usize>,
}

impl EpochProbLog {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn max_epochs(&self) -> usize {
        self.trajectories.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Concatenates logs over disjoint sample sets.
    pub fn merge(logs: impl IntoIterator<Item = EpochProbLog>) -> Result<EpochProbLog> {
        let mut out = EpochProbLog::default();
        let mut seen = HashMap::new();
        for log in logs {
            for (id, t) in log.sample_ids.into_iter().zip(log.trajectories) {
                if seen.insert(id.clone(), ()).is_some() {
                    return Err(Error::invalid(format!("sample {id:?} appears in more than one log")));
                }
                out.sample_ids.push(id);
                out.trajectories.push(t);
            }
        }
        Ok(out)
    }

    /// `epoch,sample_id,p_true_class`, epoch-major, epochs 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::invalid(format!("writing probability log: {e}"));
        w.write_record(["epoch", "sample_id", "p_true_class"]).map_err(csv_err)?;
        for e in 0..self.max_epochs() {
            for (id, t) in self.sample_ids.iter().zip(&self.trajectories) {
                if let Some(p) = t.get(e) {
                    w.write_record([(e + 1).to_string(), id.clone(), format!("{p}")])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::invalid(format!("writing probability log: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<EpochProbLog> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| Error::invalid(format!("probability log: {e}")))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("probability log lacks column {name:?}")))
        };
        let (ce, cs, cp) = (col("epoch")?, col("sample_id")?, col("p_true_class")?);
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut rows: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let line = line + 2;
            let rec = rec.map_err(|e| Error::invalid(format!("probability log line {line}: {e}")))?;
            let epoch: usize = rec[ce]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("line {line}: bad epoch {:?}", &rec[ce])))?;
            let p: f64 = rec[cp]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("line {line}: bad probability {:?}", &rec[cp])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("line {line}: probability {p} outside [0, 1]")));
            }
            let id = rec[cs].to_string();
            let slot = *index.entry(id.clone()).or_insert_with(|| {
                rows.push((id, Vec::new()));
                rows.len() - 1
            });
            rows[slot].1.push((epoch, p));
        }
        let mut out = EpochProbLog::default();
        for (id, mut pts) in rows {
            pts.sort_by_key(|&(e, _)| e);
            if pts.iter().enumerate().any(|(k, &(e, _))| e != k + 1) {
                return Err(Error::invalid(format!(
                    "sample {id:?}: epochs must run 1, 2, ... without gaps or repeats"
                )));
            }
            out.sample_ids.push(id);
            out.trajectories.push(pts.into_iter().map(|(_, p)| p).collect());
        }
        Ok(out)
    }
}

/// Training data shared by all folds.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [usize],
    pub num_classes: usize,
    pub sample_ids: &'a [String],
}

impl TrainData<'_> {
    fn check(&self) -> Result<()> {
        let n = self.features.rows();
        if self.labels.len() != n || self.sample_ids.len() != n {
            return Err(Error::invalid(format!(
                "features have {n} rows but there are {} labels and {} sample ids",
                self.labels.len(),
                self.sample_ids.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("training needs at least 2 classes"));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::invalid(format!(
                "label {l} out of range for {} classes",
                self.num_classes
            )));
        }
        if !self.features.all_finite() {
            return Err(Error::invalid("features contain non-finite values"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub model: SoftmaxModel,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub val_auc: Vec<f64>,
    /// Weighted training loss after each epoch.
    pub train_loss: Vec<f64>,
    /// AUC of the retained model on its training rows.
    pub train_auc: f64,
    pub log: EpochProbLog,
}

fn auc_on(model: &SoftmaxModel, data: &TrainData<'_>, rows: &[usize]) -> Result<f64> {
    let probs = model.predict_proba(&data.features.select_rows(rows))?;
    let p: Vec<Vec<f64>> = probs.matrix().row_iter().map(<[f64]>::to_vec).collect();
    let y: Vec<usize> = rows.iter().map(|&i| data.labels[i]).collect();
    macro_auc(&p, &y, data.num_classes)
}

fn distinct_classes(labels: &[usize], rows: &[usize]) -> usize {
    let mut seen: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Trains on `train` rows with early stopping on the AUC of `val` rows, and
/// logs the true-class probability of `tracked` rows after every epoch.
pub fn train_fold(
    data: &TrainData<'_>,
    train: &[usize],
    val: &[usize],
    tracked: &[usize],
    config: &TrainConfig,
    fold: usize,
) -> Result<FoldRun> {
    config.validate()?;
    data.check()?;
    if distinct_classes(data.labels, val) < 2 {
        return Err(Error::SingleClassFold { fold });
    }
    if train.is_empty() {
        return Err(Error::invalid(format!("fold {fold} has no training rows")));
    }
    let train_labels: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    let weights = class_weights(&train_labels, data.num_classes, config.class_weighting)?;
    let train_x = data.features.select_rows(train);
    let tracked_x = data.features.select_rows(tracked);

    let mut model = SoftmaxModel::zeros(data.num_classes, data.features.cols());
    let mut adam = Adam::new(model.weights.as_slice().len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng(config.seed);

    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut wait = 0usize;
    let mut val_auc = Vec::new();
    let mut train_loss = Vec::new();
    let mut trajectories = vec![Vec::new(); tracked.len()];
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx = train_x.select_rows(batch);
            let by: Vec<usize> = batch.iter().map(|&k| train_labels[k]).collect();
            // a batch holding only zero-weight classes contributes nothing
            let Ok((_, grad)) = loss_and_grad(&model.weights, &bx, &by, &weights) else {
                continue;
            };
            let mut params = std::mem::replace(&mut model.weights, Matrix::zeros(0, 0)).into_vec();
            adam.step(&mut params, grad.as_slice(), config.learning_rate);
            model.weights = Matrix::new(data.num_classes, data.features.cols() + 1, params)?;
        }
        train_loss.push(loss_and_grad(&model.weights, &train_x, &train_labels, &weights)?.0);
        let tracked_p = model.predict_proba(&tracked_x)?;
        for (k, &row) in tracked.iter().enumerate() {
            trajectories[k].push(tracked_p.matrix()[(k, data.labels[row])]);
        }
        let auc = auc_on(&model, data, val)?;
        val_auc.push(auc);
        if auc > best.0 + config.min_delta {
            best = (auc, epoch, model.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience.max(1) {
                break;
            }
        }
    }
    let (best_val_auc, best_epoch, model) = best;
    let train_auc = if distinct_classes(data.labels, train) >= 2 {
        auc_on(&model, data, train)?
    } else {
        f64::NAN
    };
    let stop_epoch = val_auc.len();
    Ok(FoldRun {
        fold,
        model,
        best_epoch,
        best_val_auc,
        val_auc,
        train_loss,
        train_auc,
        log: EpochProbLog {
            sample_ids: tracked.iter().map(|&i| data.sample_ids[i].clone()).collect(),
            trajectories,
            stop_epoch: Some(stop_epoch),
        },
    })
}

/// Cross-validated training: fold `k` validates on its own members, trains on
/// the rest with seed `config.seed + k`, and tracks its validation rows.
/// Folds train concurrently.
pub fn train(data: &TrainData<'_>, folds: &FoldAssignment, config: &TrainConfig) -> Result<Vec<FoldRun>> {
    if folds.fold_of.len() != data.features.rows() {
        return Err(Error::DimensionMismatch {
            expected: data.features.rows(),
            found: folds.fold_of.len(),
        });
    }
    (0..folds.k)
        .into_par_iter()
        .map(|k| {
            let val = folds.members(k);
            let train = folds.complement(k);
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(k as u64),
                ..config.clone()
            };
            train_fold(data, &train, &val, &val, &cfg, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_instance(seed: u64, n: usize, d: usize, c: usize) -> (Matrix, Matrix, Vec<usize>, Vec<f64>) {
        let mut r = rng(seed);
        let x = Matrix::new(n, d, (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let w = Matrix::new(c, d + 1, (0..c * (d + 1)).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..n).map(|_| r.gen_range(0..c)).collect();
        let cw = (0..c).map(|_| r.gen_range(0.5..3.0)).collect();
        (x, w, y, cw)
    }

    #[test]
    fn zero_weights_give_ln2() {
        let x = Matrix::from_rows(&[[0.3, -2.0]]).unwrap();
        let w = Matrix::zeros(2, 3);
        let (l, _) = loss_and_grad(&w, &x, &[1], &[1.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn inverse_prevalence_binary() {
        let mut labels = vec![0; 90];
        labels.extend(vec![1; 10]);
        let w = class_weights(&labels, 2, ClassWeighting::InversePrevalence).unwrap();
        assert_eq!(w, vec![1.0, 9.0]);
        assert_eq!(class_weights(&labels, 2, ClassWeighting::None).unwrap(), vec![1.0, 1.0]);
        assert!(class_weights(&[0, 0], 2, ClassWeighting::InversePrevalence).is_err());
    }

    #[test]
    fn inverse_prevalence_multiclass() {
        let w = class_weights(&[0, 0, 0, 0, 1, 1, 2], 3, ClassWeighting::InversePrevalence).unwrap();
        assert_eq!(w, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, w, y, cw) = random_instance(3, 5, 3, 4);
        let (_, g) = loss_and_grad(&w, &x, &y, &cw).unwrap();
        let h = 1e-5;
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                let mut wp = w.clone();
                wp.row_mut(i)[j] += h;
                let mut wm = w.clone();
                wm.row_mut(i)[j] -= h;
                let fd = (loss_and_grad(&wp, &x, &y, &cw).unwrap().0
                    - loss_and_grad(&wm, &x, &y, &cw).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn unit_weights_equal_unweighted() {
        let (x, w, y, _) = random_instance(5, 8, 3, 3);
        let (a, ga) = loss_and_grad(&w, &x, &y, &[1.0; 3]).unwrap();
        let (b, gb) = loss_and_grad(&w, &x, &y, &[2.5; 3]).unwrap();
        assert!((a - b).abs() < 1e-14);
        for (p, q) in ga.as_slice().iter().zip(gb.as_slice()) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert!(loss_and_grad(&Matrix::zeros(2, 2), &x, &[0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn predict_proba_contract() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let p = SoftmaxModel::zeros(3, 2).predict_proba(&x).unwrap();
        for row in p.matrix().row_iter() {
            assert!(row.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        let sat = SoftmaxModel {
            weights: Matrix::from_rows(&[[0.0, 1e6], [0.0, 0.0]]).unwrap(),
        };
        let p = sat.predict_proba(&Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(p.matrix().row(0), &[1.0, 0.0]);
        assert!(SoftmaxModel::zeros(2, 3).predict_proba(&x).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let long_patience = TrainConfig {
            patience: 200,
            ..TrainConfig::default()
        };
        assert!(long_patience.validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn blobs(n_per: usize, seed: u64) -> (Matrix, Vec<usize>, Vec<String>) {
        let mut r = rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..2 * n_per {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            rows.push(vec![centre + r.gen_range(-0.5..0.5), r.gen_range(-1.0..1.0)]);
            y.push(c);
        }
        let ids = (0..2 * n_per).map(|i| format!("s{i:03}")).collect();
        (Matrix::from_rows(&rows).unwrap(), y, ids)
    }

    #[test]
    fn patience_zero_stops_after_first_flat_epoch() {
        let (x, y, ids) = blobs(20, 1);
        let data = TrainData {
            features: &x,
            labels: &y,
            num_classes: 2,
            sample_ids: &ids,
        };
        let all: Vec<usize> = (0..x.rows()).collect();
        let cfg = TrainConfig {
            patience: 0,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let run = train_fold(&data, &all, &all, &all, &cfg, 0).unwrap();
        // separable: AUC is 1 after the first epoch and cannot improve
        assert_eq!(run.val_auc.len(), 2);
        assert_eq!(run.best_epoch, 1);
        assert_eq!(run.log.stop_epoch, Some(2));
        assert!(run.log.trajectories.iter().all(|t| t.len() == 2));
    }

    #[test]
    fn single_class_validation_fold_fails_fast() {
        let (x, y, ids) = blobs(5, 2);
        let data = TrainData {
            features: &x,
            labels: &y,
            num_classes: 2,
            sample_ids: &ids,
        };
        let err = train_fold(&data, &[0, 1, 2, 3], &[4, 6], &[], &TrainConfig::default(), 3).unwrap_err();
        assert!(matches!(err, Error::SingleClassFold { fold: 3 }));
    }

    #[test]
    fn log_csv_round_trip() {
        let log = EpochProbLog {
            sample_ids: vec!["a".into(), "b".into()],
            trajectories: vec![vec![0.25, 0.5, 0.125], vec![1.0, 0.0]],
            stop_epoch: None,
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,sample_id,p_true_class\n1,a,0.25\n1,b,1\n"));
        assert_eq!(EpochProbLog::read_csv(&buf[..]).unwrap(), log);
    }

    #[test]
    fn log_csv_rejects_gaps_and_range() {
        let gap = "epoch,sample_id,p_true_class\n1,a,0.5\n3,a,0.5\n";
        assert!(EpochProbLog::read_csv(gap.as_bytes()).is_err());
        let range = "epoch,sample_id,p_true_class\n1,a,1.5\n";
        assert!(EpochProbLog::read_csv(range.as_bytes()).is_err());
    }
}
