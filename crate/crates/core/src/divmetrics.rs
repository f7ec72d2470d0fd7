//! Diversity metrics over scenario subsets.
//!
//! | metric     | input                    | better |
//! |------------|--------------------------|--------|
//! | `IS`       | class probabilities      | higher |
//! | `FID`      | features vs a reference  | lower  |
//! | `VS_*`     | pixel / HOG / external   | higher |
//! | `RougeL`   | captions or reports      | lower  |
//! | `semantic` | text embeddings          | lower  |
//! | `metadata` | metadata vectors         | lower  |
//!
//! The pairwise-expensive metrics (Vendi, RougeL, semantic) are averaged
//! over repeated stratified subsamples; the others use the whole scenario.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetTable, Scenario};
use crate::features::{FeatureMatrix, FeatureSource};
use crate::numeric::{
    cosine_kernel, frechet_distance, normalized_gram, pairwise_mean_cosine, sym_eig, Matrix,
};
use crate::resample::{bootstrap_ci, stratified_subsample, BootstrapCI};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    pub fn arrow(self) -> &'static str {
        match self {
            Direction::HigherBetter => "↑",
            Direction::LowerBetter => "↓",
        }
    }
}

/// The metric registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    InceptionScore,
    Fid,
    Vendi(FeatureSource),
    Lexical,
    Semantic,
    Metadata,
}

impl MetricKind {
    pub fn name(self) -> String {
        match self {
            MetricKind::InceptionScore => "IS".into(),
            MetricKind::Fid => "FID".into(),
            MetricKind::Vendi(src) => format!("VS_{src}"),
            MetricKind::Lexical => "RougeL".into(),
            MetricKind::Semantic => "semantic".into(),
            MetricKind::Metadata => "metadata".into(),
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::InceptionScore | MetricKind::Vendi(_) => Direction::HigherBetter,
            MetricKind::Fid | MetricKind::Lexical | MetricKind::Semantic | MetricKind::Metadata => {
                Direction::LowerBetter
            }
        }
    }

    /// Whether the metric is evaluated on repeated subsamples.
    pub fn is_pairwise(self) -> bool {
        matches!(
            self,
            MetricKind::Vendi(_) | MetricKind::Lexical | MetricKind::Semantic
        )
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
    pub direction: Direction,
    pub n_used: usize,
    pub repeats: usize,
}

impl MetricValue {
    fn new(kind: MetricKind, value: f64, n_used: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("{kind} evaluated to {value}")));
        }
        Ok(Self {
            name: kind.name(),
            value,
            direction: kind.direction(),
            n_used,
            repeats: 1,
        })
    }
}

/// Rows of per-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    pub const ROW_SUM_TOL: f64 = 1e-6;

    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::invalid("probability matrix is empty"));
        }
        for (i, row) in m.row_iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self(m))
    }

    /// Probabilities stored as `f32` lose precision; rows are renormalized
    /// after validating them at the looser `f32` tolerance.
    pub fn from_f32_matrix(m: Matrix) -> Result<Self> {
        let mut m = m;
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-4 {
                return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
            }
            row.iter_mut().for_each(|p| *p = (*p / s).clamp(0.0, 1.0));
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn select(&self, indices: &[usize]) -> ProbMatrix {
        ProbMatrix(self.0.select_rows(indices))
    }
}

fn xlogx_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// `exp(E_x KL(p(y|x) ‖ p(y)))`, averaged over contiguous splits.
pub fn inception_score(probs: &ProbMatrix, splits: usize) -> Result<MetricValue> {
    let m = probs.matrix();
    let n = m.rows();
    if splits == 0 || splits > n {
        return Err(Error::invalid(format!(
            "inception score splits must lie in 1..={n}, got {splits}"
        )));
    }
    let c = m.cols();
    let mut total = 0.0;
    for s in 0..splits {
        let (start, end) = (s * n / splits, (s + 1) * n / splits);
        let rows = end - start;
        let mut marginal = vec![0.0; c];
        for i in start..end {
            for (mg, &p) in marginal.iter_mut().zip(m.row(i)) {
                *mg += p;
            }
        }
        marginal.iter_mut().for_each(|v| *v /= rows as f64);
        let mean_kl: f64 = (start..end)
            .map(|i| {
                m.row(i)
                    .iter()
                    .zip(&marginal)
                    .map(|(&p, &q)| xlogx_ratio(p, q))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / rows as f64;
        total += mean_kl.exp();
    }
    let mut v = MetricValue::new(MetricKind::InceptionScore, total / splits as f64, n)?;
    v.repeats = splits;
    Ok(v)
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// `‖μ_ref − μ_eval‖² + Tr(Σ_ref + Σ_eval − 2(Σ_ref Σ_eval)^{1/2})`.
pub fn fid(eval: &Matrix, reference: &Matrix) -> Result<MetricValue> {
    if eval.cols() != reference.cols() {
        return Err(Error::DimensionMismatch {
            expected: reference.cols(),
            found: eval.cols(),
        });
    }
    // squared distance; only rounding can push it below zero
    let value = frechet_distance(eval, reference)?.max(0.0);
    MetricValue::new(MetricKind::Fid, value, eval.rows())
}

/// Exponential of the Shannon entropy of the spectrum of `K/n`, with `K`
/// the cosine kernel. When `d < n` the spectrum comes from the `d×d` Gram
/// matrix of the row-normalized features instead, which shares its nonzero
/// eigenvalues.
pub fn vendi_score(features: &Matrix) -> Result<f64> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::invalid("Vendi Score needs at least one sample"));
    }
    let similarity = if features.cols() + 1 < n {
        normalized_gram(features)
    } else {
        let mut k = cosine_kernel(features);
        k.scale(1.0 / n as f64);
        k
    };
    let spectrum = sym_eig(&similarity, false)?;
    let entropy: f64 = spectrum
        .psd_values()?
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum();
    Ok(entropy.exp())
}

pub fn vendi_metric(features: &Matrix, source: FeatureSource) -> Result<MetricValue> {
    MetricValue::new(MetricKind::Vendi(source), vendi_score(features)?, features.rows())
}

/// Lowercased whitespace tokens with punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// RougeL F1 of two token sequences.
pub fn rouge_l_f1<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    // 2PR/(P+R) with P = l/|a|, R = l/|b|, in one division
    let l = lcs_len(a, b);
    (2 * l) as f64 / (a.len() + b.len()) as f64
}

/// Mean pairwise RougeL F1 over texts with at least one token.
pub fn lexical_diversity<S: AsRef<str>>(texts: &[S]) -> Result<MetricValue> {
    let tokens: Vec<Vec<String>> = texts
        .iter()
        .map(|t| tokenize(t.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    let n = tokens.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "lexical diversity needs at least 2 non-empty texts, got {n}"
        )));
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| rouge_l_f1(&tokens[i], &tokens[j]))
                .sum::<f64>()
        })
        .sum();
    MetricValue::new(MetricKind::Lexical, total / (n * (n - 1) / 2) as f64, n)
}

fn mean_cosine(kind: MetricKind, m: &Matrix) -> Result<MetricValue> {
    let v = pairwise_mean_cosine(m).ok_or_else(|| {
        Error::invalid(format!("{kind} needs at least 2 samples, got {}", m.rows()))
    })?;
    MetricValue::new(kind, v, m.rows())
}

/// Mean pairwise cosine similarity of text embeddings.
pub fn semantic_diversity(embeddings: &Matrix) -> Result<MetricValue> {
    mean_cosine(MetricKind::Semantic, embeddings)
}

/// Mean pairwise cosine similarity of (−1-imputed) metadata vectors.
pub fn metadata_diversity(metadata: &Matrix) -> Result<MetricValue> {
    mean_cosine(MetricKind::Metadata, metadata)
}

/// Repeated stratified subsampling for the pairwise metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePolicy {
    pub fraction: f64,
    pub repeats: usize,
}

impl Default for SubsamplePolicy {
    fn default() -> Self {
        Self {
            fraction: 0.10,
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub reps: usize,
    pub level: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { reps: 10, level: 0.95 }
    }
}

/// Per-sample inputs, each aligned with the table rows.
#[derive(Debug, Default)]
pub struct EvalInputs<'a> {
    pub features: BTreeMap<FeatureSource, &'a FeatureMatrix>,
    pub probs: Option<&'a ProbMatrix>,
    pub text_embeddings: Option<&'a FeatureMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    /// Feature source used by FID.
    pub fid_source: Option<FeatureSource>,
    /// Scenario serving as the FID reference set.
    pub reference: Option<String>,
    pub subsample: SubsamplePolicy,
    pub bootstrap: Option<BootstrapSpec>,
    pub is_splits: usize,
    pub seed: u64,
}

impl EvalConfig {
    /// All six metric families, one Vendi variant per feature source.
    pub fn all_metrics(vendi_sources: &[FeatureSource]) -> Vec<MetricKind> {
        let mut m = vec![MetricKind::InceptionScore, MetricKind::Fid];
        m.extend(vendi_sources.iter().map(|&s| MetricKind::Vendi(s)));
        m.extend([MetricKind::Lexical, MetricKind::Semantic, MetricKind::Metadata]);
        m
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Self::all_metrics(&[FeatureSource::Pixel]),
            fid_source: None,
            reference: None,
            subsample: SubsamplePolicy::default(),
            bootstrap: None,
            is_splits: 1,
            seed: 0,
        }
    }
}

/// A metric slot in a scenario report: a value, or the reason it is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub direction: Direction,
    pub value: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapCI>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: String,
    pub n: usize,
    pub metrics: Vec<MetricResult>,
}

struct Ctx<'a> {
    table: &'a DatasetTable,
    inputs: &'a EvalInputs<'a>,
    cfg: &'a EvalConfig,
    reference: Option<Matrix>,
}

impl Ctx<'_> {
    /// Mean over repeated stratified subsamples of `rows`.
    fn subsampled<F>(&self, kind: MetricKind, rows: &[usize], f: F) -> Result<MetricValue>
    where
        F: Fn(&[usize]) -> Result<MetricValue>,
    {
        let policy = self.cfg.subsample;
        if policy.repeats == 0 {
            return Err(Error::invalid("subsample policy needs at least one repeat"));
        }
        let labels: Vec<usize> = rows.iter().map(|&i| self.table.records()[i].label).collect();
        let mut total = 0.0;
        let mut n_used = 0;
        for r in 0..policy.repeats {
            let seed = self.cfg.seed.wrapping_add(r as u64);
            let picked = stratified_subsample(&labels, policy.fraction, seed)?;
            let chosen: Vec<usize> = picked.iter().map(|&p| rows[p]).collect();
            let v = f(&chosen)?;
            total += v.value;
            n_used = v.n_used;
        }
        let mut v = MetricValue::new(kind, total / policy.repeats as f64, n_used)?;
        v.repeats = policy.repeats;
        Ok(v)
    }

    /// Computes `kind` on the given table rows (duplicates allowed).
    fn compute(&self, kind: MetricKind, rows: &[usize]) -> Result<MetricValue> {
        match kind {
            MetricKind::InceptionScore => {
                let p = self.inputs.probs.expect("checked by availability");
                inception_score(&p.select(rows), self.cfg.is_splits)
            }
            MetricKind::Fid => {
                let src = self.cfg.fid_source.expect("checked by availability");
                let f = self.inputs.features[&src];
                fid(&f.select(rows), self.reference.as_ref().expect("checked by availability"))
            }
            MetricKind::Vendi(src) => {
                let f = self.inputs.features[&src];
                self.subsampled(kind, rows, |idx| vendi_metric(&f.select(idx), src))
            }
            MetricKind::Lexical => {
                let with_text: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&i| self.table.records()[i].text.is_some())
                    .collect();
                self.subsampled(kind, &with_text, |idx| {
                    let texts: Vec<&str> = idx
                        .iter()
                        .filter_map(|&i| self.table.records()[i].text.as_deref())
                        .collect();
                    lexical_diversity(&texts)
                })
            }
            MetricKind::Semantic => {
                let e = self.inputs.text_embeddings.expect("checked by availability");
                self.subsampled(kind, rows, |idx| semantic_diversity(&e.select(idx)))
            }
            MetricKind::Metadata => metadata_diversity(&self.table.metadata_matrix(rows)),
        }
    }

    /// Reason the metric cannot be computed on this scenario, if any.
    fn unavailable(&self, kind: MetricKind, scenario: &Scenario) -> Option<String> {
        match kind {
            MetricKind::InceptionScore => self
                .inputs
                .probs
                .is_none()
                .then(|| "no class-probability source".to_string()),
            MetricKind::Fid => match (self.cfg.fid_source, &self.reference) {
                (None, _) => Some("no feature source for FID".into()),
                (Some(s), _) if !self.inputs.features.contains_key(&s) => {
                    Some(format!("{s} features not available"))
                }
                (_, None) => Some("no reference scenario".into()),
                _ => None,
            },
            MetricKind::Vendi(s) => (!self.inputs.features.contains_key(&s))
                .then(|| format!("{s} features not available")),
            MetricKind::Lexical => {
                let n = scenario
                    .indices
                    .iter()
                    .filter(|&&i| self.table.records()[i].text.is_some())
                    .count();
                (n < 2).then(|| format!("{n} samples carry text"))
            }
            MetricKind::Semantic => self
                .inputs
                .text_embeddings
                .is_none()
                .then(|| "no text embeddings".to_string()),
            MetricKind::Metadata => {
                (self.table.metadata_dim() == 0).then(|| "table has no metadata columns".to_string())
            }
        }
    }

    fn evaluate(&self, scenario: &Scenario) -> Result<ScenarioMetrics> {
        let mut metrics = Vec::with_capacity(self.cfg.metrics.len());
        for &kind in &self.cfg.metrics {
            let mut slot = MetricResult {
                name: kind.name(),
                direction: kind.direction(),
                value: None,
                ci: None,
                absent: None,
            };
            if let Some(reason) = self.unavailable(kind, scenario) {
                slot.absent = Some(reason);
                metrics.push(slot);
                continue;
            }
            let value = self
                .compute(kind, &scenario.indices)
                .map_err(|e| Error::invalid(format!("scenario {:?}, {kind}: {e}", scenario.name)))?;
            if let Some(spec) = self.cfg.bootstrap {
                let rows = &scenario.indices;
                let ci = bootstrap_ci(
                    rows.len(),
                    |idx| {
                        let picked: Vec<usize> = idx.iter().map(|&i| rows[i]).collect();
                        self.compute(kind, &picked).map(|v| v.value)
                    },
                    spec.reps,
                    spec.level,
                    self.cfg.seed,
                )
                .map_err(|e| Error::invalid(format!("scenario {:?}, {kind}: {e}", scenario.name)))?;
                slot.ci = Some(ci);
            }
            slot.value = Some(value);
            metrics.push(slot);
        }
        Ok(ScenarioMetrics {
            scenario: scenario.name.clone(),
            n: scenario.indices.len(),
            metrics,
        })
    }
}

fn check_alignment(name: &str, rows: usize, table: &DatasetTable) -> Result<()> {
    if rows != table.len() {
        return Err(Error::invalid(format!(
            "{name} has {rows} rows but the table has {} samples",
            table.len()
        )));
    }
    Ok(())
}

/// Evaluates every configured metric on every scenario. Scenarios run in
/// parallel; results are deterministic for a fixed seed.
pub fn evaluate_scenarios(
    table: &DatasetTable,
    scenarios: &[Scenario],
    inputs: &EvalInputs<'_>,
    cfg: &EvalConfig,
) -> Result<Vec<ScenarioMetrics>> {
    for (src, f) in &inputs.features {
        check_alignment(&format!("{src} features"), f.n(), table)?;
    }
    if let Some(p) = inputs.probs {
        check_alignment("probability matrix", p.matrix().rows(), table)?;
    }
    if let Some(e) = inputs.text_embeddings {
        check_alignment("text embeddings", e.n(), table)?;
    }
    let reference = match (&cfg.reference, cfg.fid_source) {
        (Some(name), Some(src)) if cfg.metrics.contains(&MetricKind::Fid) => {
            let sc = scenarios
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| Error::invalid(format!("reference scenario {name:?} not found")))?;
            inputs.features.get(&src).map(|f| f.select(&sc.indices))
        }
        _ => None,
    };
    let ctx = Ctx {
        table,
        inputs,
        cfg,
        reference,
    };
    scenarios.par_iter().map(|s| ctx.evaluate(s)).collect()
}
