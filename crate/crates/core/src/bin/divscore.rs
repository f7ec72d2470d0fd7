//! `divscore`: generate → extract → metrics → rank → correlate → train →
//! datamap, plus a summary report.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 filesystem failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use divscore::dataio::{decode_images, decode_labels, decode_tensor, encode_tensor, parse_scenarios, Dataset, ScenarioConfig, TensorFile};
use divscore::datamap::{
    attach_tags, datamap_stats, density_grid, flag_outlier_subgroups, subgroup_maps, write_grids_csv,
    write_points_csv,
};
use divscore::divmetrics::{
    evaluate_scenarios, BootstrapSpec, EvalConfig, EvalInputs, MetricKind, ProbMatrix, SubsamplePolicy,
};
use divscore::features::{hog_features, pixel_features, FeatureMatrix, FeatureSource, HogParams};
use divscore::numeric::Matrix;
use divscore::report::{
    datamap_svg, summary_markdown, CorrelationReport, MetricsReport, RankingReport, RunManifest,
};
use divscore::resample::group_stratified_kfold;
use divscore::stats::{correlation_matrix, rank_scenarios};
use divscore::toygen::{build_toy, build_toy_from, ToyConfig};
use divscore::trainer::{train, ClassWeighting, EpochProbLog, TrainConfig, TrainData};
use divscore::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "divscore", version, about = "Dataset diversity metrics, rankings and data maps")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DIVSCORE_THREADS")]
    threads: Option<usize>,

    /// TOML file of flag values; top-level keys apply to every subcommand,
    /// `[subcommand]` tables to one. Command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Omit wall time and timestamps so reruns are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic digit dataset with its nine scenarios.
    GenToy(GenToyArgs),
    /// Compute pixel/HOG features and store them as DIVT files.
    Extract(ExtractArgs),
    /// Score every scenario with every available metric.
    Metrics(MetricsArgs),
    /// Rank scenarios per metric.
    Rank(RankArgs),
    /// Spearman correlation between metric rankings.
    Correlate(CorrelateArgs),
    /// Cross-validated reference classifier with per-epoch probability logs.
    Train(TrainArgs),
    /// Data maps from a probability log.
    Datamap(DatamapArgs),
    /// Markdown and CSV summary of a metrics report.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenToyArgs {
    /// Base glyphs per perturbation pool.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Held-out glyphs forming a `test` reference scenario.
    #[arg(long, default_value_t = 0)]
    test_n: usize,
    /// MNIST-format IDX images replacing the synthetic base glyphs.
    #[arg(long, requires = "mnist_labels")]
    mnist_images: Option<PathBuf>,
    /// IDX labels matching --mnist-images.
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_values = ["pixel", "hog"])]
    features: Vec<FeatureSource>,
    /// Output directory (default: the data directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    hog_cell: usize,
    #[arg(long, default_value_t = 9)]
    hog_bins: usize,
}

#[derive(Args, Debug, Serialize)]
struct MetricsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Scenario config (default: the dataset's scenarios.ini).
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Feature sources for the Vendi Score.
    #[arg(long, value_delimiter = ',', default_values = ["pixel"])]
    features: Vec<FeatureSource>,
    /// Feature source for FID (default: the first of --features).
    #[arg(long)]
    fid_features: Option<FeatureSource>,
    /// DIVT file with external (e.g. Inception) image features.
    #[arg(long)]
    external: Option<PathBuf>,
    /// DIVT file with class probabilities; enables IS.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// DIVT file with text embeddings; enables semantic diversity.
    #[arg(long)]
    text_embeddings: Option<PathBuf>,
    /// FID reference scenario (default: the config's `reference`).
    #[arg(long)]
    ref_scenario: Option<String>,
    /// Metric families: IS, FID, VS, RougeL, semantic, metadata.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    subsample_fraction: f64,
    #[arg(long, default_value_t = 5)]
    subsample_repeats: usize,
    /// Bootstrap replicates for confidence intervals (0 = off).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 1)]
    is_splits: usize,
    /// Comma-separated outputs; `.json` and `.csv` are recognized.
    #[arg(long, value_delimiter = ',', required = true)]
    out: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RankArgs {
    #[arg(long)]
    report: PathBuf,
    /// `.csv` and/or `.json`.
    #[arg(long, value_delimiter = ',', required = true)]
    out: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CorrelateArgs {
    #[arg(long)]
    report: PathBuf,
    /// `.csv`, `.json` and/or `.svg`.
    #[arg(long, value_delimiter = ',', required = true)]
    out: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
enum Weighting {
    None,
    InversePrevalence,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "pixel")]
    features: FeatureSource,
    #[arg(long)]
    external: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = Weighting::None)]
    class_weighting: Weighting,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DatamapArgs {
    /// Probability log CSV (`epoch,sample_id,p_true_class`).
    #[arg(long)]
    log: PathBuf,
    /// Dataset directory providing subgroup tags.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Tag whose values define the panels and the outlier check.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, default_value_t = 1.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    /// `.md` and/or `.csv`.
    #[arg(long, value_delimiter = ',', required = true)]
    out: Vec<PathBuf>,
}

struct Ctx {
    seed: u64,
    reproducible: bool,
    started: Instant,
}

impl Ctx {
    fn manifest<C: Serialize>(&self, command: &str, args: &C) -> RunManifest {
        RunManifest::new(command, args, self.seed)
    }

    fn finish(&self, m: &mut RunManifest) {
        m.finish(self.started, self.reproducible);
    }
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn unknown_output(p: &Path, allowed: &str) -> Error {
    invalid(format!(
        "{}: unsupported output extension (expected {allowed})",
        p.display()
    ))
}

fn feature_file(dir: &Path, src: FeatureSource) -> PathBuf {
    dir.join(format!("features-{src}.divt"))
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    Ok(decode_tensor(&read(path)?)?.to_matrix())
}

/// Stored features if present, otherwise computed from the images.
fn load_features(ds: &Dataset, dir: &Path, src: FeatureSource, external: Option<&Path>) -> Result<FeatureMatrix> {
    let stored = match (src, external) {
        (FeatureSource::External, Some(p)) => Some(p.to_path_buf()),
        _ => Some(feature_file(dir, src)).filter(|p| p.exists()),
    };
    let f = match stored {
        Some(p) => {
            log::info!("reading {src} features from {}", p.display());
            FeatureMatrix::from_tensor(&decode_tensor(&read(&p)?)?, src)?
        }
        None => match src {
            FeatureSource::Pixel => pixel_features(&ds.row_images()?)?,
            FeatureSource::Hog => hog_features(&ds.row_images()?, &HogParams::default())?,
            FeatureSource::External => {
                return Err(invalid(
                    "external features need --external <file.divt> or features-external.divt in the data directory",
                ))
            }
        },
    };
    if f.n() != ds.table.len() {
        return Err(invalid(format!(
            "{src} features have {} rows but the table has {} samples",
            f.n(),
            ds.table.len()
        )));
    }
    Ok(f)
}

fn gen_toy(ctx: &Ctx, a: &GenToyArgs) -> Result<()> {
    let cfg = ToyConfig {
        n_per_kind: a.n,
        test_per_kind: a.test_n,
        seed: ctx.seed,
    };
    let toy = match (&a.mnist_images, &a.mnist_labels) {
        (Some(img), Some(lab)) => {
            let base = decode_images(&read(img)?)?;
            let labels = decode_labels(&read(lab)?)?;
            build_toy_from(&base, &labels, &cfg)?
        }
        _ => build_toy(&cfg)?,
    };
    let ds = Dataset {
        table: toy.table,
        images: Some(toy.images),
        scenarios: Some(toy.scenarios),
    };
    ds.write(&a.out)?;
    let mut m = ctx.manifest("gen-toy", a);
    for p in [&a.mnist_images, &a.mnist_labels].into_iter().flatten() {
        m.add_input(p)?;
    }
    ctx.finish(&mut m);
    write(&a.out.join("manifest.json"), &json(&m))?;
    log::info!("wrote {} samples to {}", ds.table.len(), a.out.display());
    Ok(())
}

fn extract(ctx: &Ctx, a: &ExtractArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let images = ds.row_images()?;
    let out = a.out.clone().unwrap_or_else(|| a.data.clone());
    let params = HogParams {
        cell: a.hog_cell,
        bins: a.hog_bins,
        ..HogParams::default()
    };
    for &src in &a.features {
        let f = match src {
            FeatureSource::Pixel => pixel_features(&images)?,
            FeatureSource::Hog => hog_features(&images, &params)?,
            FeatureSource::External => {
                return Err(invalid("external features come from the exporter, not extract"))
            }
        };
        let path = feature_file(&out, src);
        write(&path, &encode_tensor(&f.to_tensor()?))?;
        log::info!("wrote {}×{} {src} features to {}", f.n(), f.d(), path.display());
    }
    let mut m = ctx.manifest("extract", a);
    m.add_input(&a.data.join(divscore::dataio::IMAGES_FILE))?;
    ctx.finish(&mut m);
    write(&out.join("features-manifest.json"), &json(&m))
}

fn metric_kinds(names: &[String], sources: &[FeatureSource]) -> Result<Vec<MetricKind>> {
    if names.is_empty() {
        return Ok(EvalConfig::all_metrics(sources));
    }
    let mut out = Vec::new();
    for n in names {
        match n.to_ascii_lowercase().as_str() {
            "is" => out.push(MetricKind::InceptionScore),
            "fid" => out.push(MetricKind::Fid),
            "vs" | "vendi" => out.extend(sources.iter().map(|&s| MetricKind::Vendi(s))),
            "rougel" | "lexical" => out.push(MetricKind::Lexical),
            "semantic" => out.push(MetricKind::Semantic),
            "metadata" => out.push(MetricKind::Metadata),
            other => {
                return Err(invalid(format!(
                    "unknown metric {other:?} (expected IS, FID, VS, RougeL, semantic, metadata)"
                )))
            }
        }
    }
    Ok(out)
}

fn metrics(ctx: &Ctx, a: &MetricsArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let config = match &a.scenarios {
        Some(p) => ScenarioConfig::parse(
            &String::from_utf8(read(p)?).map_err(|_| invalid(format!("{} is not UTF-8", p.display())))?,
        )?,
        None => ds
            .scenarios
            .clone()
            .ok_or_else(|| invalid("no scenario config: pass --scenarios or add scenarios.ini"))?,
    };
    let scenarios = parse_scenarios(&config, &ds.table)?;
    let kinds = metric_kinds(&a.metrics, &a.features)?;
    let fid_source = a.fid_features.or_else(|| a.features.first().copied());

    let mut needed: Vec<FeatureSource> = a.features.clone();
    if kinds.contains(&MetricKind::Fid) {
        needed.extend(fid_source);
    }
    needed.sort();
    needed.dedup();
    let mut feats = BTreeMap::new();
    for src in needed {
        feats.insert(src, load_features(&ds, &a.data, src, a.external.as_deref())?);
    }
    let probs = a
        .probs
        .as_deref()
        .map(|p| ProbMatrix::from_f32_matrix(read_matrix(p)?))
        .transpose()?;
    let embeddings = a
        .text_embeddings
        .as_deref()
        .map(|p| FeatureMatrix::from_tensor(&decode_tensor(&read(p)?)?, FeatureSource::External))
        .transpose()?;
    let inputs = EvalInputs {
        features: feats.iter().map(|(k, v)| (*k, v)).collect(),
        probs: probs.as_ref(),
        text_embeddings: embeddings.as_ref(),
    };
    let cfg = EvalConfig {
        metrics: kinds,
        fid_source,
        reference: a.ref_scenario.clone().or(config.reference.clone()),
        subsample: SubsamplePolicy {
            fraction: a.subsample_fraction,
            repeats: a.subsample_repeats,
        },
        bootstrap: (a.bootstrap > 0).then_some(BootstrapSpec {
            reps: a.bootstrap,
            level: a.ci_level,
        }),
        is_splits: a.is_splits,
        seed: ctx.seed,
    };
    let results = evaluate_scenarios(&ds.table, &scenarios, &inputs, &cfg)?;

    let mut m = ctx.manifest("metrics", &(a, &cfg));
    m.add_input(&a.data)?;
    for p in [&a.scenarios, &a.external, &a.probs, &a.text_embeddings].into_iter().flatten() {
        m.add_input(p)?;
    }
    ctx.finish(&mut m);
    let report = MetricsReport {
        manifest: m,
        scenarios: results,
    };
    for out in &a.out {
        match extension(out).as_str() {
            "json" => write(out, &json(&report))?,
            "csv" => {
                let mut buf = Vec::new();
                report.write_csv(&mut buf)?;
                write(out, &buf)?;
            }
            _ => return Err(unknown_output(out, ".json or .csv")),
        }
    }
    Ok(())
}

/// Ranks the metrics that have a value somewhere; metrics never computed
/// (no input for them) are listed as dropped.
fn ranking_of(report: &MetricsReport) -> Result<divscore::stats::RankingMatrix> {
    let (rows, never): (Vec<_>, Vec<_>) = report
        .metric_rows()
        .into_iter()
        .partition(|r| r.values.iter().any(Option::is_some));
    let mut ranking = rank_scenarios(&report.scenario_names(), &rows)?;
    ranking.dropped.extend(never.into_iter().map(|r| r.name));
    Ok(ranking)
}

fn rank(ctx: &Ctx, a: &RankArgs) -> Result<()> {
    let report: MetricsReport = read_json(&a.report)?;
    let ranking = ranking_of(&report)?;
    let mut m = ctx.manifest("rank", a);
    m.add_input(&a.report)?;
    ctx.finish(&mut m);
    let r = RankingReport { manifest: m, ranking };
    for out in &a.out {
        match extension(out).as_str() {
            "json" => write(out, &json(&r))?,
            "csv" => {
                let mut buf = Vec::new();
                r.write_csv(&mut buf)?;
                write(out, &buf)?;
            }
            _ => return Err(unknown_output(out, ".json or .csv")),
        }
    }
    Ok(())
}

fn correlate(ctx: &Ctx, a: &CorrelateArgs) -> Result<()> {
    let report: MetricsReport = read_json(&a.report)?;
    let ranking = ranking_of(&report)?;
    let matrix = correlation_matrix(&ranking)?;
    let mut m = ctx.manifest("correlate", a);
    m.add_input(&a.report)?;
    ctx.finish(&mut m);
    let c = CorrelationReport {
        manifest: m,
        metrics: ranking.metrics.clone(),
        matrix,
    };
    for out in &a.out {
        match extension(out).as_str() {
            "json" => write(out, &json(&c))?,
            "csv" => {
                let mut buf = Vec::new();
                c.write_csv(&mut buf)?;
                write(out, &buf)?;
            }
            "svg" => write(out, c.to_svg(ctx.reproducible).as_bytes())?,
            _ => return Err(unknown_output(out, ".json, .csv or .svg")),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FoldSummary {
    fold: usize,
    best_epoch: usize,
    stop_epoch: usize,
    best_val_auc: f64,
    train_auc: f64,
    val_auc: Vec<f64>,
    train_loss: Vec<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    manifest: RunManifest,
    config: TrainConfig,
    folds: Vec<FoldSummary>,
    mean_val_auc: f64,
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let f = load_features(&ds, &a.data, a.features, a.external.as_deref())?;
    let labels = ds.table.labels();
    let groups: Vec<&str> = ds.table.records().iter().map(|r| r.group_id.as_str()).collect();
    let ids: Vec<String> = ds.table.records().iter().map(|r| r.sample_id.clone()).collect();
    let folds = group_stratified_kfold(&labels, &groups, a.folds, ctx.seed)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        max_epochs: a.epochs,
        patience: a.patience,
        batch_size: a.batch_size,
        class_weighting: match a.class_weighting {
            Weighting::None => ClassWeighting::None,
            Weighting::InversePrevalence => ClassWeighting::InversePrevalence,
        },
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    let data = TrainData {
        features: f.matrix(),
        labels: &labels,
        num_classes: ds.table.num_classes(),
        sample_ids: &ids,
    };
    let runs = train(&data, &folds, &config)?;

    // out-of-fold probabilities: each sample scored by the model that did not see it
    let c = ds.table.num_classes();
    let mut oof = Matrix::zeros(ds.table.len(), c);
    for run in &runs {
        let members = folds.members(run.fold);
        let p = run.model.predict_proba(&f.matrix().select_rows(&members))?;
        for (k, &i) in members.iter().enumerate() {
            oof.row_mut(i).copy_from_slice(p.matrix().row(k));
        }
    }
    let mut folds_csv = Vec::new();
    folds.write_csv(&ids, &mut folds_csv)?;
    write(&a.out.join("folds.csv"), &folds_csv)?;
    let log = EpochProbLog::merge(runs.iter().map(|r| r.log.clone()))?;
    let mut log_csv = Vec::new();
    log.write_csv(&mut log_csv)?;
    write(&a.out.join("probs.csv"), &log_csv)?;
    write(&a.out.join("probs.divt"), &encode_tensor(&TensorFile::from_matrix(&oof)?))?;

    let mut m = ctx.manifest("train", a);
    m.add_input(&a.data)?;
    ctx.finish(&mut m);
    let mean_val_auc = runs.iter().map(|r| r.best_val_auc).sum::<f64>() / runs.len() as f64;
    let summary = TrainSummary {
        manifest: m,
        config,
        folds: runs
            .iter()
            .map(|r| FoldSummary {
                fold: r.fold,
                best_epoch: r.best_epoch,
                stop_epoch: r.val_auc.len(),
                best_val_auc: r.best_val_auc,
                train_auc: r.train_auc,
                val_auc: r.val_auc.clone(),
                train_loss: r.train_loss.clone(),
            })
            .collect(),
        mean_val_auc,
    };
    write(&a.out.join("train.json"), &json(&summary))?;
    log::info!("mean validation AUC {mean_val_auc:.4}");
    Ok(())
}

#[derive(Serialize)]
struct DatamapSummary {
    manifest: RunManifest,
    tag: Option<String>,
    threshold: f64,
    subgroups: BTreeMap<String, usize>,
    flagged: Vec<String>,
}

fn datamap(ctx: &Ctx, a: &DatamapArgs) -> Result<()> {
    let log = EpochProbLog::read_csv(&read(&a.log)?[..])?;
    let mut points = datamap_stats(&log)?;
    let mut panels = Vec::new();
    let mut flagged = Vec::new();
    let mut sizes = BTreeMap::new();
    match (&a.tag, &a.data) {
        (Some(tag), Some(dir)) => {
            let ds = Dataset::load(dir)?;
            attach_tags(&mut points, &ds.table, std::slice::from_ref(tag))?;
            for (value, members) in subgroup_maps(&points, tag)? {
                sizes.insert(value.clone(), members.len());
                let grid = density_grid(&members)?;
                panels.push((format!("{tag}={value}"), members, grid));
            }
            if sizes.len() >= 2 {
                flagged = flag_outlier_subgroups(&points, tag, a.threshold)?;
            }
        }
        (Some(_), None) => return Err(invalid("--tag needs --data to look up subgroup values")),
        (None, _) => {
            sizes.insert("all".into(), points.len());
            panels.push(("all".into(), points.clone(), density_grid(&points)?));
        }
    }
    let mut buf = Vec::new();
    write_points_csv(&points, &mut buf)?;
    write(&a.out.join("points.csv"), &buf)?;
    let grids: Vec<(String, _)> = panels.iter().map(|(n, _, g)| (n.clone(), g.clone())).collect();
    let mut buf = Vec::new();
    write_grids_csv(&grids, &mut buf)?;
    write(&a.out.join("grids.csv"), &buf)?;
    write(&a.out.join("datamap.svg"), datamap_svg(&panels, ctx.reproducible).as_bytes())?;

    let mut m = ctx.manifest("datamap", a);
    m.add_input(&a.log)?;
    ctx.finish(&mut m);
    let summary = DatamapSummary {
        manifest: m,
        tag: a.tag.clone(),
        threshold: a.threshold,
        subgroups: sizes,
        flagged,
    };
    write(&a.out.join("datamap.json"), &json(&summary))
}

fn report_cmd(_ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let report: MetricsReport = read_json(&a.report)?;
    let ranking = ranking_of(&report).ok();
    for out in &a.out {
        match extension(out).as_str() {
            "md" => write(out, summary_markdown(&report, ranking.as_ref()).as_bytes())?,
            "csv" => {
                let mut buf = Vec::new();
                report.write_csv(&mut buf)?;
                write(out, &buf)?;
            }
            _ => return Err(unknown_output(out, ".md or .csv")),
        }
    }
    Ok(())
}

/// Appends config-file values for every flag the user did not pass.
fn merge_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut cmd = Cli::command();
    cmd.build();
    let m = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        // let the real parse report it
        Err(_) => return Ok(argv),
    };
    let Some(path) = m.get_one::<PathBuf>("config") else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let sub_cmd = cmd.find_subcommand(name).expect("matched subcommand exists");

    let mut entries: Vec<(String, toml::Value, bool)> = Vec::new();
    for (k, v) in &table {
        match v {
            toml::Value::Table(t) if k == name => {
                entries.extend(t.iter().map(|(k, v)| (k.clone(), v.clone(), true)))
            }
            toml::Value::Table(_) => {}
            _ => entries.push((k.clone(), v.clone(), false)),
        }
    }
    let mut extra = Vec::new();
    for (key, value, strict) in entries {
        let id = key.replace('-', "_");
        let Some(arg) = sub_cmd.get_arguments().find(|a| a.get_id() == id.as_str()) else {
            if strict {
                return Err(format!("{}: unknown key {key:?} for {name}", path.display()));
            }
            continue;
        };
        if id == "config" || sub.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().unwrap_or(&key));
        let scalar = |v: &toml::Value| match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(format!("{}: unsupported value for {key:?}: {other}", path.display())),
        };
        match &value {
            toml::Value::Boolean(true) => extra.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let vals: Vec<String> = items.iter().map(scalar).collect::<std::result::Result<_, _>>()?;
                extra.push(flag);
                extra.push(vals.join(","));
            }
            v => {
                extra.push(flag);
                extra.push(scalar(v)?);
            }
        }
    }
    let mut out = argv;
    out.extend(extra.into_iter().map(OsString::from));
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        reproducible: cli.reproducible,
        started: Instant::now(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::GenToy(a) => gen_toy(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Rank(a) => rank(&ctx, a),
        Command::Correlate(a) => correlate(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Datamap(a) => datamap(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first} (see --help)");
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
