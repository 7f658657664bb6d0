//! One function per subcommand. Each writes its artifacts plus a run
//! manifest into the output directory and its summary lines to `out`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lesion_triage::ablation::SweepSettings;
use lesion_triage::folds::SplitReport;
use lesion_triage::ingest::{LoadReport, MergeReport, PredictionTable};
use lesion_triage::metrics::DEFAULT_HISTOGRAM_BINS;
use lesion_triage::synth::{generate_cohort, write_metadata_csv, write_predictions_csv, SynthConfig};
use lesion_triage::{
    featurize, load_dataset, merge_prediction_columns, predict_ensemble, run_sweep, stratified_group_kfold,
    train_ensemble, AblationConfig, Dataset, DatasetSchema, EnsembleModel, Error, EvalReport, FeatureCatalog,
    FeatureFrame, FitStats, FoldPlan, Result,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::RunManifest;

pub const DATASET_FILE: &str = "dataset.json";
pub const LOAD_REPORT_FILE: &str = "load_report.json";
pub const FEATURE_CACHE_FILE: &str = "features.bin";
pub const FEATURE_CSV_FILE: &str = "features.csv";
pub const FEATURE_COLUMNS_FILE: &str = "feature_columns.json";
pub const FIT_STATS_FILE: &str = "fit_stats.json";
pub const PLAN_FILE: &str = "fold_plan.json";
pub const SPLIT_REPORT_FILE: &str = "split_report.json";
pub const ENSEMBLE_DIR: &str = "ensemble";
pub const OOF_FILE: &str = "oof.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const ABLATION_CSV_FILE: &str = "ablation.csv";
pub const ABLATION_TEXT_FILE: &str = "ablation.txt";
pub const SYNTH_METADATA_FILE: &str = "metadata.csv";
pub const SYNTH_PREDICTIONS_FILE: &str = "predictions.csv";

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(stdout_err)?
    };
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn prepare_output(config: &RunConfig) -> Result<&Path> {
    let dir = config.output_dir.as_path();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

fn schema(config: &RunConfig, manifest: &mut RunManifest) -> Result<DatasetSchema> {
    match &config.schema {
        Some(p) => {
            manifest.input("schema", p)?;
            DatasetSchema::from_json_file(p)
        }
        None => Ok(DatasetSchema::default()),
    }
}

fn catalog(config: &RunConfig, manifest: &mut RunManifest) -> Result<FeatureCatalog> {
    match &config.catalog {
        Some(p) => {
            manifest.input("catalog", p)?;
            FeatureCatalog::from_json_file(p)
        }
        None => Ok(FeatureCatalog::default()),
    }
}

/// Metadata CSV with the optional predictions CSV merged in.
fn load_inputs(config: &RunConfig, manifest: &mut RunManifest) -> Result<(Dataset, LoadReport, Option<MergeReport>)> {
    let schema = schema(config, manifest)?;
    let metadata = config.require_metadata()?;
    manifest.input("metadata", metadata)?;
    let (dataset, report) = load_dataset(metadata, &schema)?;
    match &config.predictions {
        Some(p) => {
            manifest.input("predictions", p)?;
            let table = PredictionTable::from_csv(p, &schema)?;
            let (merged, merge) = merge_prediction_columns(&dataset, &table)?;
            Ok((merged, report, Some(merge)))
        }
        None => Ok((dataset, report, None)),
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    load: &'a LoadReport,
    merge: Option<&'a MergeReport>,
}

fn stage_ingest(config: &RunConfig, manifest: &mut RunManifest, out: &mut dyn Write) -> Result<Dataset> {
    let dir = prepare_output(config)?;
    let (dataset, report, merge) = load_inputs(config, manifest)?;
    dataset.save_canonical(dir.join(DATASET_FILE))?;
    write_json(
        &dir.join(LOAD_REPORT_FILE),
        &IngestSummary {
            load: &report,
            merge: merge.as_ref(),
        },
    )?;
    manifest.output(dir, DATASET_FILE)?;
    manifest.output(dir, LOAD_REPORT_FILE)?;
    let positives = dataset.records().iter().filter(|r| r.target == 1).count();
    say!(
        out,
        "rows={} rejected={} patients={} positives={}",
        dataset.len(),
        report.rejected.len(),
        dataset.patient_groups().len(),
        positives
    );
    if let Some(m) = &merge {
        say!(out, "prediction_coverage={:.6}", m.coverage);
    }
    Ok(dataset)
}

fn stage_featurize(
    config: &RunConfig,
    manifest: &mut RunManifest,
    out: &mut dyn Write,
) -> Result<(FeatureFrame, FitStats)> {
    let dataset = stage_ingest(config, manifest, out)?;
    let catalog = catalog(config, manifest)?;
    let dir = config.output_dir.as_path();
    let (frame, stats) = featurize(&dataset, &catalog, None)?;
    frame.save_cache(dir.join(FEATURE_CACHE_FILE))?;
    frame.write_csv(dir.join(FEATURE_CSV_FILE))?;
    frame.write_sidecar(dir.join(FEATURE_COLUMNS_FILE))?;
    write_json(&dir.join(FIT_STATS_FILE), &stats)?;
    for f in [
        FEATURE_CACHE_FILE,
        FEATURE_CSV_FILE,
        FEATURE_COLUMNS_FILE,
        FIT_STATS_FILE,
    ] {
        manifest.output(dir, f)?;
    }
    let groups: Vec<String> = frame
        .group_counts()
        .into_iter()
        .map(|(g, n)| format!("{}={n}", g.as_str()))
        .collect();
    say!(out, "columns={} {}", frame.n_cols(), groups.join(" "));
    Ok((frame, stats))
}

fn stage_split(
    config: &RunConfig,
    manifest: &mut RunManifest,
    out: &mut dyn Write,
) -> Result<(FeatureFrame, FoldPlan)> {
    let (frame, _) = stage_featurize(config, manifest, out)?;
    let dir = config.output_dir.as_path();
    let plan = FoldPlan::build(frame.row_patients(), frame.labels(), config.folds, &config.seeds)?;
    let mut reports: Vec<(u64, SplitReport)> = Vec::new();
    for &seed in &config.seeds {
        let (_, report) = stratified_group_kfold(frame.row_patients(), frame.labels(), config.folds, seed)?;
        say!(
            out,
            "seed={seed} max_relative_deviation={:.6} positive_free_folds={}",
            report.max_relative_deviation,
            report.positive_free_folds.len()
        );
        reports.push((seed, report));
    }
    plan.save(dir.join(PLAN_FILE))?;
    let reports: BTreeMap<String, SplitReport> = reports.into_iter().map(|(s, r)| (s.to_string(), r)).collect();
    write_json(&dir.join(SPLIT_REPORT_FILE), &reports)?;
    manifest.output(dir, PLAN_FILE)?;
    manifest.output(dir, SPLIT_REPORT_FILE)?;
    Ok((frame, plan))
}

fn begin(command: &str, config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    Ok(RunManifest::new(command, config.hash()))
}

fn finish(manifest: RunManifest, config: &RunConfig) -> Result<()> {
    prepare_output(config)?;
    manifest.write(&config.output_dir)
}

pub fn cmd_ingest(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("ingest", config)?;
    stage_ingest(config, &mut manifest, out)?;
    finish(manifest, config)
}

pub fn cmd_featurize(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("featurize", config)?;
    stage_featurize(config, &mut manifest, out)?;
    finish(manifest, config)
}

pub fn cmd_split(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("split", config)?;
    stage_split(config, &mut manifest, out)?;
    finish(manifest, config)
}

#[derive(Serialize)]
struct TrainSummary {
    members: usize,
    oof_pauc: f64,
    oof_auc: f64,
    min_tpr: f64,
    folds: Vec<lesion_triage::ensemble::FoldScore>,
}

/// Full pipeline: ingest, featurize, split, then train the ensemble and
/// write its out-of-fold predictions.
pub fn cmd_train(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("train", config)?;
    let (frame, plan) = stage_split(config, &mut manifest, out)?;
    let dir = config.output_dir.as_path();
    let (model, oof) = train_ensemble(&frame, &plan, &config.ensemble())?;
    let leaks = model.leakage_violations(&frame, &oof);
    if let Some(first) = leaks.first() {
        return Err(Error::Integrity(format!(
            "{} leakage violations, first: {first}",
            leaks.len()
        )));
    }
    let ensemble_dir = dir.join(ENSEMBLE_DIR);
    if ensemble_dir.exists() {
        fs::remove_dir_all(&ensemble_dir).map_err(io_err(&ensemble_dir))?;
    }
    model.save(&ensemble_dir)?;
    oof.write_csv(dir.join(OOF_FILE))?;
    say!(out, "members={}", model.n_members());
    let folds = oof.fold_scores(config.min_tpr);
    for f in &folds {
        match f.pauc {
            Some(p) => say!(out, "seed={} fold={} rows={} pauc={p:.6}", f.seed, f.fold, f.n_rows),
            None => say!(out, "seed={} fold={} rows={} pauc=undefined", f.seed, f.fold, f.n_rows),
        }
    }
    let summary = TrainSummary {
        members: model.n_members(),
        oof_pauc: oof.pauc(config.min_tpr)?,
        oof_auc: lesion_triage::roc_auc(&oof.labels, &oof.scores)?,
        min_tpr: config.min_tpr,
        folds,
    };
    say!(out, "oof_pauc={:.6} oof_auc={:.6}", summary.oof_pauc, summary.oof_auc);
    write_json(&dir.join(TRAIN_SUMMARY_FILE), &summary)?;
    for name in [ENSEMBLE_DIR, OOF_FILE, TRAIN_SUMMARY_FILE] {
        manifest.output(dir, name)?;
    }
    finish(manifest, config)
}

/// Score the configured metadata with a trained run found in `model_dir`.
pub fn cmd_predict(config: &RunConfig, model_dir: &Path, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("predict", config)?;
    let dir = prepare_output(config)?;
    let ensemble_dir = model_dir.join(ENSEMBLE_DIR);
    let stats_path = model_dir.join(FIT_STATS_FILE);
    manifest.input("ensemble", &ensemble_dir)?;
    manifest.input("fit_stats", &stats_path)?;
    let model = EnsembleModel::load(&ensemble_dir)?;
    let stats = FitStats::from_json_file(&stats_path)?;
    let (dataset, _, _) = load_inputs(config, &mut manifest)?;
    let catalog = catalog(config, &mut manifest)?;
    let (frame, _) = featurize(&dataset, &catalog, Some(&stats))?;
    let scores = predict_ensemble(&model, &frame)?;
    let path = dir.join(SCORES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["isic_id", "score"])?;
    for (id, s) in frame.row_ids().iter().zip(&scores) {
        w.write_record([id.clone(), s.to_string()])?;
    }
    w.flush().map_err(io_err(&path))?;
    manifest.output(dir, SCORES_FILE)?;
    say!(out, "scored={}", scores.len());
    finish(manifest, config)
}

/// Read `id -> value` pairs from a CSV. The id column is `isic_id` or
/// `lesion_id`; the value column is the first of `value_columns` present.
fn read_keyed(path: &Path, value_columns: &[&str]) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let id = find(&["isic_id", "lesion_id"])
        .ok_or_else(|| Error::Schema(format!("{}: no isic_id column", path.display())))?;
    let value = find(value_columns).ok_or_else(|| {
        Error::Schema(format!(
            "{}: none of the columns {}",
            path.display(),
            value_columns.join(", ")
        ))
    })?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((rec[id].trim().to_string(), rec[value].trim().to_string()));
    }
    Ok(rows)
}

/// Labels and scores joined on lesion id, in label-file order.
fn joined_labels_scores(labels_path: &Path, scores_path: &Path) -> Result<(Vec<u8>, Vec<f64>)> {
    let labels = read_keyed(labels_path, &["target"])?;
    let scores: BTreeMap<String, String> = read_keyed(scores_path, &["score", "oof_score"])?.into_iter().collect();
    let mut ys = Vec::with_capacity(labels.len());
    let mut ss = Vec::with_capacity(labels.len());
    for (id, y) in labels {
        let y: u8 = match y.as_str() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Input(format!("lesion {id}: target {other:?} is not 0 or 1"))),
        };
        let s = scores
            .get(&id)
            .ok_or_else(|| Error::Input(format!("lesion {id} has no score")))?;
        let s: f64 = s
            .parse()
            .map_err(|_| Error::Input(format!("lesion {id}: score {s:?} is not a number")))?;
        ys.push(y);
        ss.push(s);
    }
    Ok((ys, ss))
}

fn eval_line(report: &EvalReport) -> String {
    format!(
        "pauc={:.6} auc={:.6} n_pos={} n_neg={}",
        report.pauc, report.auc, report.n_pos, report.n_neg
    )
}

pub fn cmd_evaluate(config: &RunConfig, labels: &Path, scores: &Path, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("evaluate", config)?;
    manifest.input("labels", labels)?;
    manifest.input("scores", scores)?;
    let (ys, ss) = joined_labels_scores(labels, scores)?;
    let report = EvalReport::new(&ys, &ss, config.min_tpr, DEFAULT_HISTOGRAM_BINS)?;
    let dir = prepare_output(config)?;
    let path = dir.join(EVAL_REPORT_FILE);
    fs::write(&path, report.to_json_rounded()? + "\n").map_err(io_err(&path))?;
    manifest.output(dir, EVAL_REPORT_FILE)?;
    say!(out, "{}", eval_line(&report));
    finish(manifest, config)
}

fn histogram_text(report: &EvalReport) -> String {
    let c = &report.confidence;
    let mut text = String::new();
    text.push_str(&eval_line(report));
    text.push_str(&format!("\n\nmin_tpr={}\n\n", report.min_tpr));
    text.push_str("bin            malignant  benign  tp(>=0.5)  fp(>=0.5)\n");
    for b in 0..c.malignant_counts.len() {
        text.push_str(&format!(
            "[{:.2}, {:.2})  {:>9}  {:>6}  {:>9}  {:>9}\n",
            c.bin_edges[b],
            c.bin_edges[b + 1],
            c.malignant_counts[b],
            c.benign_counts[b],
            c.true_positive_counts[b],
            c.false_positive_counts[b]
        ));
    }
    text
}

/// Evaluation report over the out-of-fold predictions of a trained run.
pub fn cmd_report(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("report", config)?;
    let dir = config.output_dir.as_path();
    let dataset_path = dir.join(DATASET_FILE);
    let oof_path = dir.join(OOF_FILE);
    manifest.input("dataset", &dataset_path)?;
    manifest.input("oof", &oof_path)?;
    let dataset = Dataset::load_canonical(&dataset_path, None)?;
    let targets: BTreeMap<&str, u8> = dataset
        .records()
        .iter()
        .map(|r| (r.lesion_id.as_str(), r.target))
        .collect();
    let scores = read_keyed(&oof_path, &["oof_score", "score"])?;
    let mut ys = Vec::with_capacity(scores.len());
    let mut ss = Vec::with_capacity(scores.len());
    for (id, s) in scores {
        let y = targets
            .get(id.as_str())
            .ok_or_else(|| Error::Input(format!("lesion {id} is not in the dataset")))?;
        ys.push(*y);
        ss.push(
            s.parse::<f64>()
                .map_err(|_| Error::Input(format!("lesion {id}: bad score {s:?}")))?,
        );
    }
    let report = EvalReport::new(&ys, &ss, config.min_tpr, DEFAULT_HISTOGRAM_BINS)?;
    let json_path = dir.join(REPORT_JSON_FILE);
    fs::write(&json_path, report.to_json_rounded()? + "\n").map_err(io_err(&json_path))?;
    let text = histogram_text(&report);
    let text_path = dir.join(REPORT_TEXT_FILE);
    fs::write(&text_path, &text).map_err(io_err(&text_path))?;
    manifest.output(dir, REPORT_JSON_FILE)?;
    manifest.output(dir, REPORT_TEXT_FILE)?;
    say!(out, "{}", eval_line(&report));
    finish(manifest, config)
}

pub fn cmd_importance(config: &RunConfig, top: usize, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("importance", config)?;
    let dir = config.output_dir.as_path();
    let ensemble_dir = dir.join(ENSEMBLE_DIR);
    manifest.input("ensemble", &ensemble_dir)?;
    let model = EnsembleModel::load(&ensemble_dir)?;
    let ranked = model.ranked_importance();
    let path = dir.join(IMPORTANCE_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["rank", "feature", "importance"])?;
    for (i, (name, v)) in ranked.iter().enumerate() {
        w.write_record([(i + 1).to_string(), name.clone(), format!("{v:.8}")])?;
    }
    w.flush().map_err(io_err(&path))?;
    manifest.output(dir, IMPORTANCE_FILE)?;
    for (i, (name, v)) in ranked.iter().take(top).enumerate() {
        say!(out, "{:>3}  {:<40}  {v:.6}", i + 1, name);
    }
    finish(manifest, config)
}

pub fn cmd_ablate(config: &RunConfig, sweep: Option<&Path>, parallel: bool, out: &mut dyn Write) -> Result<()> {
    let mut manifest = begin("ablate", config)?;
    let configs = match sweep {
        Some(p) => {
            manifest.input("sweep", p)?;
            AblationConfig::list_from_json_file(p)?
        }
        None => AblationConfig::standard_sweep(),
    };
    let (dataset, _, _) = load_inputs(config, &mut manifest)?;
    let catalog = catalog(config, &mut manifest)?;
    let settings = SweepSettings {
        n_folds: config.folds,
        seeds: config.seeds.clone(),
        min_tpr: config.min_tpr,
        ensemble: config.ensemble(),
        parallel,
    };
    let table = run_sweep(&dataset, &catalog, &configs, &settings)?;
    let dir = prepare_output(config)?;
    table.write_csv(dir.join(ABLATION_CSV_FILE))?;
    let text = table.to_text();
    let text_path = dir.join(ABLATION_TEXT_FILE);
    fs::write(&text_path, &text).map_err(io_err(&text_path))?;
    manifest.output(dir, ABLATION_CSV_FILE)?;
    manifest.output(dir, ABLATION_TEXT_FILE)?;
    write!(out, "{text}").map_err(stdout_err)?;
    finish(manifest, config)
}

/// Write a synthetic cohort as a metadata CSV plus a predictions CSV.
pub fn cmd_synth(config: &RunConfig, synth: &SynthConfig, out: &mut dyn Write) -> Result<()> {
    let mut manifest = RunManifest::new("synth", lesion_triage::hashing::json_hash(synth)?);
    let schema = schema(config, &mut manifest)?;
    let dataset = generate_cohort(synth, &schema)?;
    let dir = prepare_output(config)?;
    write_metadata_csv(&dataset, dir.join(SYNTH_METADATA_FILE), false)?;
    write_predictions_csv(&dataset, dir.join(SYNTH_PREDICTIONS_FILE))?;
    manifest.output(dir, SYNTH_METADATA_FILE)?;
    manifest.output(dir, SYNTH_PREDICTIONS_FILE)?;
    let positives = dataset.records().iter().filter(|r| r.target == 1).count();
    say!(
        out,
        "rows={} patients={} positives={positives}",
        dataset.len(),
        dataset.patient_groups().len()
    );
    manifest.write(dir)
}
