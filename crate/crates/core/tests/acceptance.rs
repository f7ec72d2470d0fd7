//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The dataset-gated FID check reads `DIVSCORE_MORPHOMNIST_DIR`: a dataset
//! directory (as written by `divscore gen-toy --mnist-images ...`) holding
//! `features-external.divt` and the scenarios `plain`, `plain_fracture` and
//! `test`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use divscore::dataio::{decode_tensor, parse_scenarios, Dataset};
use divscore::datamap::{datamap_stats, flag_outlier_subgroups, DEFAULT_THRESHOLD};
use divscore::divmetrics::{
    evaluate_scenarios, fid, inception_score, lexical_diversity, rouge_l_f1, tokenize, vendi_score,
    EvalConfig, EvalInputs, MetricKind, ProbMatrix, SubsamplePolicy,
};
use divscore::features::{hog_features, pixel_features, FeatureMatrix, FeatureSource, HogParams};
use divscore::numeric::{
    cosine_kernel, normalized_gram, sym_eig, trace_sqrt_product, tridiagonal_ql_eig, Matrix,
};
use divscore::report::{MetricsReport, RunManifest};
use divscore::resample::{bootstrap_ci, group_stratified_kfold};
use divscore::stats::{auc, correlation_matrix, rank_scenarios, spearman};
use divscore::toygen::{build_toy, ToyConfig};
use divscore::trainer::{
    class_weights, loss_and_grad, train, train_fold, ClassWeighting, EpochProbLog, TrainConfig, TrainData,
};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Default)]
struct Checks {
    items: Vec<(String, bool)>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.items.push((what.into(), ok));
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        let err = (got - want).abs();
        self.check(err <= tol, format!("{what}: got {got:.12e}, want {want:.12e}, |err| {err:.1e} > {tol:.0e}"));
    }

    fn failures(&self) -> Vec<&str> {
        self.items.iter().filter(|(_, ok)| !ok).map(|(s, _)| s.as_str()).collect()
    }
}

enum Outcome {
    Done(Checks),
    Skip(String),
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Res<Outcome>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(r, n, n);
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s.row_mut(i)[j] = 0.5 * (a.row(i)[j] + a.row(j)[i]);
        }
    }
    s
}

fn random_psd(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let b = random_matrix(r, n, n);
    b.matmul(&b.transpose()).unwrap()
}

/// Rows `i` of the Sylvester Hadamard matrix of order `n` (a power of two).
fn hadamard(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

fn stack_twice(m: &Matrix) -> Matrix {
    let mut data = m.as_slice().to_vec();
    data.extend_from_slice(m.as_slice());
    Matrix::new(2 * m.rows(), m.cols(), data).unwrap()
}

// ---------------------------------------------------------------- metrics

fn metric_oracles() -> Res<Outcome> {
    let mut c = Checks::default();
    let mut r = rng(11);

    for k in [2usize, 3, 10] {
        let n = 6 * k;
        let uniform = ProbMatrix::new(Matrix::new(n, k, vec![1.0 / k as f64; n * k])?)?;
        c.close(inception_score(&uniform, 1)?.value, 1.0, 1e-9, &format!("IS uniform C={k}"));
        let mut onehot = Matrix::zeros(n, k);
        for i in 0..n {
            onehot.row_mut(i)[i % k] = 1.0;
        }
        let onehot = ProbMatrix::new(onehot)?;
        c.close(inception_score(&onehot, 1)?.value, k as f64, 1e-9, &format!("IS one-hot C={k}"));
    }

    for (n, d) in [(200, 8), (30, 64)] {
        let x = random_matrix(&mut r, n, d);
        c.close(fid(&x, &x)?.value, 0.0, 1e-8, &format!("FID(X,X) {n}x{d}"));
    }

    // Hadamard columns are orthogonal with zero mean, so the sample
    // covariances are exactly diagonal: var_j = s_j² · n/(n−1).
    let h = hadamard(16);
    let d = 6;
    let (mu1, mu2): (Vec<f64>, Vec<f64>) = (0..d).map(|_| (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0))).unzip();
    let (s1, s2): (Vec<f64>, Vec<f64>) = (0..d).map(|_| (r.gen_range(0.2..3.0), r.gen_range(0.2..3.0))).unzip();
    let build = |mu: &[f64], s: &[f64]| {
        let rows: Vec<Vec<f64>> = h.iter().map(|hr| (0..d).map(|j| mu[j] + s[j] * hr[j + 1]).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    };
    let scale = 16.0 / 15.0;
    let closed: f64 = (0..d)
        .map(|j| {
            let (v1, v2) = (s1[j] * s1[j] * scale, s2[j] * s2[j] * scale);
            (mu1[j] - mu2[j]).powi(2) + v1 + v2 - 2.0 * (v1 * v2).sqrt()
        })
        .sum();
    c.close(fid(&build(&mu1, &s1), &build(&mu2, &s2))?.value, closed, 1e-8, "FID diagonal closed form");

    let v: Vec<f64> = (0..7).map(|_| r.gen_range(-1.0..1.0)).collect();
    let dup = Matrix::from_rows(&vec![v; 10])?;
    c.close(vendi_score(&dup)?, 1.0, 1e-6, "VS duplicates");

    for (n, d) in [(12, 12), (9, 30)] {
        // rows of an orthonormal basis, randomly rotated and rescaled
        let basis = sym_eig(&random_symmetric(&mut r, d), true)?.vectors.unwrap().transpose();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let s = r.gen_range(0.1..5.0);
                basis.row(i).iter().map(|x| s * x).collect()
            })
            .collect();
        c.close(vendi_score(&Matrix::from_rows(&rows)?)?, n as f64, 1e-6, &format!("VS orthogonal n={n} d={d}"));
    }

    for (n, d) in [(30, 5), (20, 40)] {
        let x = random_matrix(&mut r, n, d);
        c.close(vendi_score(&stack_twice(&x))?, vendi_score(&x)?, 1e-6, &format!("VS duplication {n}x{d}"));
    }

    c.check(lexical_diversity(&["the cat sat", "the dog sat"])?.value == 2.0 / 3.0, "RougeL 2/3 case");
    let f = |a: &str, b: &str| rouge_l_f1(&tokenize(a), &tokenize(b));
    c.check(f("a b c d", "a c d e") == 0.75, "RougeL LCS 3 of 4+4");
    c.check(f("Image of a plain seven", "image of a plain seven.") == 1.0, "RougeL identical after tokenizing");
    c.check(f("alpha beta", "gamma") == 0.0, "RougeL disjoint");
    c.check(f("a b", "b a") == 0.5, "RougeL reversed pair");
    Ok(Outcome::Done(c))
}

// -------------------------------------------------------------- numerics

fn numerics() -> Res<Outcome> {
    let mut c = Checks::default();
    let mut r = rng(22);

    let mut worst = 0.0f64;
    let mut worst_ql = 0.0f64;
    for i in 0..100 {
        let n = 1 + (i * 37) % 64;
        let a = random_symmetric(&mut r, n);
        for (ql, slot) in [(false, &mut worst), (true, &mut worst_ql)] {
            let e = if ql { tridiagonal_ql_eig(&a, true)? } else { sym_eig(&a, true)? };
            let v = e.vectors.unwrap();
            let mut vl = v.clone();
            for row in 0..n {
                for (x, l) in vl.row_mut(row).iter_mut().zip(&e.values) {
                    *x *= l;
                }
            }
            let recon = vl.matmul(&v.transpose())?;
            let diff: f64 = recon.as_slice().iter().zip(a.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
            *slot = slot.max(diff.sqrt() / a.frobenius_norm());
        }
    }
    c.check(worst <= 1e-8, format!("sym_eig worst relative reconstruction {worst:.2e}"));
    c.check(worst_ql <= 1e-8, format!("QL worst relative reconstruction {worst_ql:.2e}"));

    for n in [3, 10, 40] {
        let (a, b) = (random_psd(&mut r, n), random_psd(&mut r, n));
        let (ab, ba) = (trace_sqrt_product(&a, &b)?, trace_sqrt_product(&b, &a)?);
        c.close(ab, ba, 1e-8 * ab.abs().max(1.0), &format!("trace_sqrt_product symmetry n={n}"));
        let da: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..4.0)).collect();
        let db: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..4.0)).collect();
        let want: f64 = da.iter().zip(&db).map(|(x, y)| (x * y).sqrt()).sum();
        let got = trace_sqrt_product(&Matrix::from_diag(&da), &Matrix::from_diag(&db))?;
        c.close(got, want, 1e-10 * want.max(1.0), &format!("trace_sqrt_product diagonal n={n}"));
    }

    for (n, d) in [(40, 6), (15, 30), (25, 25)] {
        let mut f = random_matrix(&mut r, n, d);
        f.row_mut(3).fill(0.0);
        let mut k = cosine_kernel(&f);
        k.scale(1.0 / n as f64);
        let ek = sym_eig(&k, false)?.values;
        let eg = sym_eig(&normalized_gram(&f), false)?.values;
        let m = ek.len().min(eg.len());
        let mut err = ek[..m].iter().zip(&eg[..m]).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
        for tail in [&ek[m..], &eg[m..]] {
            err = tail.iter().fold(err, |e, x| e.max(x.abs()));
        }
        c.check(err <= 1e-6, format!("kernel vs Gram spectrum {n}x{d}: max diff {err:.2e}"));
    }
    Ok(Outcome::Done(c))
}

// ------------------------------------------------------------ statistics

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn statistics() -> Res<Outcome> {
    let mut c = Checks::default();
    let mut r = rng(33);

    let perms = permutations((0..6).collect());
    c.check(perms.len() == 720, format!("{} permutations", perms.len()));
    let x: Vec<f64> = (0..6).map(|v| v as f64 * 1.5 + 2.0).collect();
    let mut worst = 0.0f64;
    for p in &perms {
        let y: Vec<f64> = p.iter().map(|&v| (v as f64).powi(3) - 10.0).collect();
        let d2: f64 = p.iter().enumerate().map(|(i, &v)| ((i as f64) - v as f64).powi(2)).sum();
        let oracle = 1.0 - 6.0 * d2 / (6.0 * 35.0);
        let got = spearman(&x, &y)?.ok_or("spearman undefined")?;
        worst = worst.max((got - oracle).abs());
    }
    c.check(worst <= 1e-12, format!("Spearman vs brute force: worst |err| {worst:.1e}"));

    let mut mismatches = 0;
    for i in 0..50 {
        let n = r.gen_range(2..=200);
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        labels.shuffle(&mut r);
        // coarse scores force ties on some instances
        let grid = if i % 2 == 0 { 10.0 } else { 1e6 };
        let scores: Vec<f64> = (0..n).map(|_| (r.gen::<f64>() * grid).round() / grid).collect();
        let (mut half_pairs, mut p, mut q) = (0u64, 0u64, 0u64);
        for a in 0..n {
            if !labels[a] {
                continue;
            }
            p += 1;
            for b in 0..n {
                if labels[b] {
                    continue;
                }
                half_pairs += match scores[a].partial_cmp(&scores[b]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        q += labels.iter().filter(|&&l| !l).count() as u64;
        let oracle = (half_pairs as f64 / 2.0) / (p * q) as f64;
        if auc(&scores, &labels)? != oracle {
            mismatches += 1;
        }
    }
    c.check(mismatches == 0, format!("AUC vs pair counting: {mismatches} of 50 differ"));

    let values: Vec<f64> = (0..150).map(|_| r.gen_range(0.0..10.0)).collect();
    let mean = |idx: &[usize]| -> divscore::Result<f64> { Ok(idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64) };
    let a = bootstrap_ci(values.len(), mean, 10, 0.95, 5)?;
    let b = bootstrap_ci(values.len(), mean, 10, 0.95, 5)?;
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let one = single.install(|| bootstrap_ci(values.len(), mean, 10, 0.95, 5))?;
    c.check(a == b, "bootstrap identical on rerun");
    c.check(a == one, "bootstrap identical on one thread");
    c.check(a != bootstrap_ci(values.len(), mean, 10, 0.95, 6)?, "bootstrap changes with the seed");
    Ok(Outcome::Done(c))
}

// --------------------------------------------------------------- trainer

fn separable(n: usize, seed: u64) -> (Matrix, Vec<usize>, Vec<String>, Vec<String>) {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 1 { 1.0 } else { -1.0 };
        rows.push(vec![sign * 2.0 + r.gen_range(-0.8..0.8), sign * 1.5 + r.gen_range(-0.8..0.8), r.gen_range(-1.0..1.0)]);
        labels.push(y);
    }
    let ids = (0..n).map(|i| format!("s{i:03}")).collect();
    let groups = (0..n).map(|i| format!("g{:03}", i / 2)).collect();
    (Matrix::from_rows(&rows).unwrap(), labels, ids, groups)
}

fn trainer_suite() -> Res<Outcome> {
    let mut c = Checks::default();
    let mut r = rng(44);

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let classes = r.gen_range(2..=5);
        let d = r.gen_range(1..=6);
        let n = r.gen_range(5..=30);
        let w = random_matrix(&mut r, classes, d + 1);
        let x = random_matrix(&mut r, n, d);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let cw: Vec<f64> = (0..classes).map(|_| r.gen_range(0.5..3.0)).collect();
        let (_, g) = loss_and_grad(&w, &x, &labels, &cw)?;
        let h = 1e-5;
        let mut num = Vec::with_capacity(g.as_slice().len());
        for k in 0..w.as_slice().len() {
            let shifted = |delta: f64| {
                let mut data = w.as_slice().to_vec();
                data[k] += delta;
                let wp = Matrix::new(w.rows(), w.cols(), data).unwrap();
                loss_and_grad(&wp, &x, &labels, &cw).unwrap().0
            };
            num.push((shifted(h) - shifted(-h)) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = g.as_slice().iter().zip(&num).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(g.as_slice()).max(norm(&num)).max(1e-12);
        worst = worst.max(rel);
    }
    c.check(worst < 1e-5, format!("gradient vs central differences: worst relative error {worst:.2e}"));

    let (x, labels, ids, groups) = separable(120, 7);
    let data = TrainData {
        features: &x,
        labels: &labels,
        num_classes: 2,
        sample_ids: &ids,
    };
    let cfg = TrainConfig {
        learning_rate: 0.05,
        max_epochs: 50,
        patience: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let idx: Vec<usize> = (0..120).collect();
    let run = train_fold(&data, &idx[..90], &idx[90..], &idx, &cfg, 0)?;
    c.check(run.train_auc == 1.0, format!("separable training AUC {}", run.train_auc));
    c.check(run.best_val_auc == 1.0, format!("separable validation AUC {}", run.best_val_auc));
    c.check(run.val_auc.len() <= 50, format!("stopped after {} epochs", run.val_auc.len()));
    c.check(class_weights(&labels, 2, ClassWeighting::InversePrevalence)? == vec![1.0, 1.0], "balanced fixture weights");

    let folds = group_stratified_kfold(&labels, &groups, 5, 1)?;
    let a = train(&data, &folds, &cfg)?;
    let b = train(&data, &folds, &cfg)?;
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let one = single.install(|| train(&data, &folds, &cfg))?;
    c.check(a == b, "cross-validated runs identical on rerun");
    c.check(a == one, "cross-validated runs identical on one thread");
    let log = |runs: &[divscore::trainer::FoldRun]| -> Res<Vec<u8>> {
        let mut buf = Vec::new();
        EpochProbLog::merge(runs.iter().map(|r| r.log.clone()))?.write_csv(&mut buf)?;
        Ok(buf)
    };
    c.check(log(&a)? == log(&b)?, "probability logs byte-identical");
    c.check(a.iter().all(|r| r.best_val_auc == 1.0), "every fold separates its validation rows");
    Ok(Outcome::Done(c))
}

// ------------------------------------------------------------- splitting

fn splitting() -> Res<Outcome> {
    let mut c = Checks::default();
    let mut r = rng(55);
    let (mut split_groups, mut worst_spread, mut unassigned) = (0usize, 0usize, 0usize);
    for inst in 0..100 {
        let k = r.gen_range(2..=6);
        let n_groups = r.gen_range(k..=60);
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            let size = r.gen_range(1..=5);
            let positive = r.gen_bool(0.35);
            for m in 0..size {
                labels.push(usize::from(positive && m == 0));
                groups.push(format!("grp{g}"));
            }
        }
        let f = group_stratified_kfold(&labels, &groups, k, inst)?;
        unassigned += f.fold_of.iter().filter(|&&x| x >= k).count();
        let mut fold_of_group: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            if *fold_of_group.entry(g).or_insert(f.fold_of[i]) != f.fold_of[i] {
                split_groups += 1;
            }
        }
        let mut pos = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            pos[f.fold_of[i]] += l;
        }
        worst_spread = worst_spread.max(pos.iter().max().unwrap() - pos.iter().min().unwrap());
    }
    c.check(unassigned == 0, format!("{unassigned} samples without a fold"));
    c.check(split_groups == 0, format!("{split_groups} groups split across folds"));
    c.check(worst_spread <= 1, format!("worst per-fold positive spread {worst_spread}"));
    Ok(Outcome::Done(c))
}

// ------------------------------------------------------------- direction

fn direction() -> Res<Outcome> {
    let mut c = Checks::default();
    let toy = build_toy(&ToyConfig {
        n_per_kind: 100,
        test_per_kind: 50,
        seed: 0,
    })?;
    let table = &toy.table;
    let pixel = pixel_features(&toy.images)?;
    let hog = hog_features(&toy.images, &HogParams::default())?;

    let labels = table.labels();
    let groups: Vec<&str> = table.records().iter().map(|r| r.group_id.as_str()).collect();
    let ids: Vec<String> = table.records().iter().map(|r| r.sample_id.clone()).collect();
    let folds = group_stratified_kfold(&labels, &groups, 5, 0)?;
    let data = TrainData {
        features: hog.matrix(),
        labels: &labels,
        num_classes: table.num_classes(),
        sample_ids: &ids,
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let runs = train(&data, &folds, &cfg)?;
    let mut oof = Matrix::zeros(table.len(), table.num_classes());
    for run in &runs {
        let members = folds.members(run.fold);
        let p = run.model.predict_proba(&hog.matrix().select_rows(&members))?;
        for (k, &i) in members.iter().enumerate() {
            oof.row_mut(i).copy_from_slice(p.matrix().row(k));
        }
    }
    let probs = ProbMatrix::new(oof)?;

    let scenarios = parse_scenarios(&toy.scenarios, table)?;
    let inputs = EvalInputs {
        features: BTreeMap::from([(FeatureSource::Pixel, &pixel), (FeatureSource::Hog, &hog)]),
        probs: Some(&probs),
        text_embeddings: None,
    };
    let eval = EvalConfig {
        metrics: vec![
            MetricKind::InceptionScore,
            MetricKind::Fid,
            MetricKind::Vendi(FeatureSource::Pixel),
            MetricKind::Vendi(FeatureSource::Hog),
            MetricKind::Lexical,
            MetricKind::Metadata,
        ],
        fid_source: Some(FeatureSource::Hog),
        reference: toy.scenarios.reference.clone(),
        subsample: SubsamplePolicy::default(),
        bootstrap: None,
        is_splits: 1,
        seed: 0,
    };
    let results = evaluate_scenarios(table, &scenarios, &inputs, &eval)?;
    c.check(
        results.len() == 10 && results.iter().filter(|s| s.scenario != "test").count() == 9,
        format!("{} scenarios scored", results.len()),
    );

    let rouge = |name: &str| {
        results
            .iter()
            .find(|s| s.scenario == name)
            .and_then(|s| s.metrics.iter().find(|m| m.name == "RougeL"))
            .and_then(|m| m.value.as_ref())
            .map(|v| v.value)
    };
    let singles = ["plain", "thin", "thick", "fracture", "swelling"];
    let unions = ["plain_thin", "plain_thick", "plain_fracture", "plain_swelling"];
    let mean = |names: &[&str]| -> Option<f64> {
        let v: Option<Vec<f64>> = names.iter().map(|n| rouge(n)).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    match (mean(&singles), mean(&unions)) {
        (Some(s), Some(u)) => c.check(u < s, format!("mean RougeL unions {u:.4} < single kinds {s:.4}")),
        _ => c.check(false, "RougeL missing for some scenario"),
    }

    let train_only: Vec<_> = results.into_iter().filter(|s| s.scenario != "test").collect();
    let report = MetricsReport {
        manifest: RunManifest::new("acceptance", &eval, 0),
        scenarios: train_only,
    };
    let ranking = rank_scenarios(&report.scenario_names(), &report.metric_rows())?;
    c.check(
        ranking.metrics.len() >= 6,
        format!("{} metrics ranked ({:?}), dropped {:?}", ranking.metrics.len(), ranking.metrics, ranking.dropped),
    );
    let corr = correlation_matrix(&ranking)?;
    let m = corr.len();
    let symmetric = (0..m).all(|i| (0..m).all(|j| corr[i][j] == corr[j][i]));
    let unit_diag = (0..m).all(|i| corr[i][i] == Some(1.0));
    let bounded = corr.iter().flatten().flatten().all(|v| (-1.0..=1.0).contains(v));
    c.check(symmetric, "correlation matrix symmetric");
    c.check(unit_diag, "correlation matrix has unit diagonal");
    c.check(bounded, "correlations lie in [-1, 1]");
    Ok(Outcome::Done(c))
}

// --------------------------------------------------------------- datamap

fn shortcut_fixture(seed: u64) -> Res<Vec<String>> {
    let mut r = rng(seed);
    let mut log = EpochProbLog::default();
    let mut tags = BTreeMap::new();
    for g in 0..5 {
        for s in 0..40 {
            let base: f64 = r.gen_range(0.7..0.95);
            let shift = if g == 3 { 0.5 } else { 0.0 };
            let traj = (0..10)
                .map(|_| (base - shift + r.gen_range(-0.03..0.03)).clamp(0.0, 1.0))
                .collect();
            let id = format!("site{g}-{s:02}");
            tags.insert(id.clone(), format!("site{g}"));
            log.sample_ids.push(id);
            log.trajectories.push(traj);
        }
    }
    let mut points = datamap_stats(&log)?;
    for p in &mut points {
        p.tags.insert("site".into(), tags[&p.sample_id].clone());
    }
    Ok(flag_outlier_subgroups(&points, "site", DEFAULT_THRESHOLD)?)
}

fn datamap_suite() -> Res<Outcome> {
    let mut c = Checks::default();
    for seed in 0..20 {
        let flagged = shortcut_fixture(seed)?;
        c.check(flagged == vec!["site3".to_string()], format!("seed {seed}: flagged {flagged:?}"));
    }
    Ok(Outcome::Done(c))
}

// ---------------------------------------------------------- dataset-gated

fn morphomnist_fid() -> Res<Outcome> {
    let Some(dir) = std::env::var_os("DIVSCORE_MORPHOMNIST_DIR").map(PathBuf::from) else {
        return Ok(Outcome::Skip("DIVSCORE_MORPHOMNIST_DIR not set".into()));
    };
    let feats = dir.join("features-external.divt");
    if !feats.exists() {
        return Ok(Outcome::Skip(format!("{} not found", feats.display())));
    }
    let ds = Dataset::load(&dir)?;
    let config = ds.scenarios.as_ref().ok_or("dataset has no scenarios.ini")?;
    let scenarios = parse_scenarios(config, &ds.table)?;
    let f = FeatureMatrix::from_tensor(&decode_tensor(&std::fs::read(&feats)?)?, FeatureSource::External)?;
    let rows = |name: &str| -> Res<Matrix> {
        let s = scenarios.iter().find(|s| s.name == name).ok_or(format!("scenario {name} missing"))?;
        Ok(f.select(&s.indices))
    };
    let test = rows("test")?;
    let plain = fid(&rows("plain")?, &test)?.value;
    let union = fid(&rows("plain_fracture")?, &test)?.value;
    let mut c = Checks::default();
    c.check(union < plain, format!("FID plain+fracture {union:.3} < plain {plain:.3}"));
    Ok(Outcome::Done(c))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "metric oracles (IS, FID, VS, RougeL)",
            limit: Duration::from_secs(5),
            run: metric_oracles,
        },
        Criterion {
            name: "numerics (eigensolver, trace sqrt, kernel vs Gram)",
            limit: Duration::from_secs(30),
            run: numerics,
        },
        Criterion {
            name: "statistics (Spearman, AUC, bootstrap determinism)",
            limit: Duration::from_secs(10),
            run: statistics,
        },
        Criterion {
            name: "trainer (gradient, separable fit, determinism)",
            limit: Duration::from_secs(20),
            run: trainer_suite,
        },
        Criterion {
            name: "splitting (group integrity, positive spread)",
            limit: Duration::from_secs(5),
            run: splitting,
        },
        Criterion {
            name: "direction (toy RougeL order, correlation shape)",
            limit: Duration::from_secs(120),
            run: direction,
        },
        Criterion {
            name: "data-map shortcut subgroup flagged",
            limit: Duration::from_secs(5),
            run: datamap_suite,
        },
        Criterion {
            name: "MorphoMNIST FID order (dataset-gated)",
            limit: Duration::from_secs(600),
            run: morphomnist_fid,
        },
    ];
    let mut failed = 0;
    for cr in &criteria {
        let start = Instant::now();
        let outcome = (cr.run)();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Outcome::Skip(why)) => println!("SKIP  {} ({why})", cr.name),
            Ok(Outcome::Done(checks)) => {
                let fails = checks.failures();
                let slow = start.elapsed() > cr.limit;
                let ok = fails.is_empty() && !slow;
                println!(
                    "{}  {} [{} checks, {secs:.2} s, limit {} s]",
                    if ok { "PASS" } else { "FAIL" },
                    cr.name,
                    checks.items.len(),
                    cr.limit.as_secs()
                );
                for f in fails {
                    println!("      - {f}");
                }
                if slow {
                    println!("      - over the time limit");
                }
                failed += usize::from(!ok);
            }
            Err(e) => {
                println!("FAIL  {} [error after {secs:.2} s: {e}]", cr.name);
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
