//! Seeds x folds x growth-strategies training matrix with out-of-fold scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{inject_prediction_noise, FeatureFrame, DEFAULT_NOISE_SIGMA};
use crate::folds::{rebalance, FoldAssignment, FoldPlan, DEFAULT_POS_CAP};
use crate::gbdt::{self, BoostedModel, GbdtConfig, Growth};
use crate::hashing::{json_hash, mix_seed};
use crate::metrics::pauc_above_tpr;
use crate::{Error, Result};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "ensemble.json";
pub const PLAN_FILE: &str = "fold_plan.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Arithmetic mean of member probabilities.
    #[default]
    Mean,
    /// Mean of per-member normalized ranks.
    Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub gbdt: GbdtConfig,
    pub growths: Vec<Growth>,
    /// Positives per negative after rebalancing.
    pub rebalance_ratio: f64,
    pub pos_cap: usize,
    pub noise_sigma: f64,
    /// Parallel member trainings; 0 uses every available core. Not written
    /// to saved models, so they match across machines.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub averaging: Averaging,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            gbdt: GbdtConfig::default(),
            growths: Growth::ALL.to_vec(),
            rebalance_ratio: 1.0,
            pos_cap: DEFAULT_POS_CAP,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            workers: 0,
            averaging: Averaging::Mean,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.gbdt.validate()?;
        if self.growths.is_empty() {
            return Err(Error::Parameter("at least one growth strategy is required".into()));
        }
        let unique: BTreeSet<_> = self.growths.iter().collect();
        if unique.len() != self.growths.len() {
            return Err(Error::Parameter("growth strategies must be distinct".into()));
        }
        Ok(())
    }

    /// Hash of everything that affects results (the worker count does not).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        json_hash(&c).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub seed: u64,
    pub fold: usize,
    pub growth: Growth,
    pub model: BoostedModel,
}

impl Member {
    pub fn file_name(&self) -> String {
        member_file_name(self.seed, self.fold, self.growth)
    }
}

pub fn member_file_name(seed: u64, fold: usize, growth: Growth) -> String {
    format!("s{seed}_f{fold}_{growth}.model.json")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub plan: FoldPlan,
    pub config: EnsembleConfig,
    pub feature_names: Vec<String>,
    /// Mean normalized member importance, aligned with `feature_names`.
    pub aggregate_importance: Vec<f64>,
}

/// Validation rows one member scored.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberOof {
    pub seed: u64,
    pub fold: usize,
    pub growth: Growth,
    pub rows: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub seed: u64,
    pub fold: usize,
    pub n_rows: usize,
    /// pAUC of the growth-averaged validation scores; `None` when the
    /// validation partition lacks a class.
    pub pauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OofPredictions {
    pub row_ids: Vec<String>,
    pub labels: Vec<u8>,
    /// One score per frame row, averaged over seeds and growths.
    pub scores: Vec<f64>,
    pub members: Vec<MemberOof>,
}

impl OofPredictions {
    pub fn pauc(&self, min_tpr: f64) -> Result<f64> {
        pauc_above_tpr(&self.labels, &self.scores, min_tpr)
    }

    /// Per-(seed, fold) pAUC of the growth-averaged validation scores.
    pub fn fold_scores(&self, min_tpr: f64) -> Vec<FoldScore> {
        let mut folds: BTreeMap<(u64, usize), (usize, BTreeMap<usize, f64>)> = BTreeMap::new();
        for m in &self.members {
            let (n_growths, rows) = folds.entry((m.seed, m.fold)).or_default();
            *n_growths += 1;
            for (&i, &s) in m.rows.iter().zip(&m.scores) {
                *rows.entry(i).or_default() += s;
            }
        }
        folds
            .into_iter()
            .map(|((seed, fold), (n_growths, rows))| {
                let labels: Vec<u8> = rows.keys().map(|&i| self.labels[i]).collect();
                let s: Vec<f64> = rows.values().map(|v| v / n_growths as f64).collect();
                FoldScore {
                    seed,
                    fold,
                    n_rows: labels.len(),
                    pauc: pauc_above_tpr(&labels, &s, min_tpr).ok(),
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "isic_id,oof_score").map_err(io)?;
        for (id, s) in self.row_ids.iter().zip(&self.scores) {
            writeln!(w, "{id},{s}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

struct Job<'a> {
    assignment: &'a FoldAssignment,
    growth: Growth,
    growth_index: usize,
}

/// Row indices of `frame` whose patient is in `patients`.
fn rows_of(frame: &FeatureFrame, patients: &BTreeSet<String>) -> Vec<usize> {
    frame
        .row_patients()
        .iter()
        .enumerate()
        .filter(|(_, p)| patients.contains(p.as_str()))
        .map(|(i, _)| i)
        .collect()
}

fn train_member(frame: &FeatureFrame, job: &Job, config: &EnsembleConfig) -> Result<(Member, MemberOof)> {
    let a = job.assignment;
    let member_seed = mix_seed(mix_seed(a.seed, a.fold as u64), job.growth_index as u64);
    let train_rows = rows_of(frame, &a.train_patients);
    let sampled = rebalance(
        frame.labels(),
        &train_rows,
        config.rebalance_ratio,
        config.pos_cap,
        mix_seed(member_seed, 1),
    )?;
    let train_frame = inject_prediction_noise(
        &frame.select_rows(&sampled),
        config.noise_sigma,
        mix_seed(member_seed, 2),
    )?;
    let model = gbdt::train(&train_frame, &config.gbdt, job.growth, mix_seed(member_seed, 3))?;
    let rows = rows_of(frame, &a.validation_patients);
    let scores = rows
        .iter()
        .map(|&i| model.predict_row(frame.row(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Member {
            seed: a.seed,
            fold: a.fold,
            growth: job.growth,
            model,
        },
        MemberOof {
            seed: a.seed,
            fold: a.fold,
            growth: job.growth,
            rows,
            scores,
        },
    ))
}

fn run_parallel<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Train every (seed, fold, growth) member of `plan` on `frame`.
///
/// Each member sees its fold's training patients only: the rows are
/// rebalanced, prediction columns get fresh noise, and the trained model
/// scores the fold's validation rows. Results do not depend on the worker
/// count.
pub fn train_ensemble(
    frame: &FeatureFrame,
    plan: &FoldPlan,
    config: &EnsembleConfig,
) -> Result<(EnsembleModel, OofPredictions)> {
    config.validate()?;
    let known = plan.patients();
    if let Some(p) = frame.row_patients().iter().find(|p| !known.contains(p.as_str())) {
        return Err(Error::Input(format!("patient {p} is not covered by the fold plan")));
    }
    let jobs: Vec<Job> = plan
        .assignments()
        .iter()
        .flat_map(|a| {
            config
                .growths
                .iter()
                .enumerate()
                .map(move |(growth_index, &growth)| Job {
                    assignment: a,
                    growth,
                    growth_index,
                })
        })
        .collect();
    let results: Vec<Result<(Member, MemberOof)>> = run_parallel(config.workers, || {
        jobs.par_iter()
            .map(|job| {
                train_member(frame, job, config).map_err(|e| Error::Member {
                    seed: job.assignment.seed,
                    fold: job.assignment.fold,
                    growth: job.growth.to_string(),
                    source: Box::new(e),
                })
            })
            .collect()
    })?;
    let (members, member_oof): (Vec<Member>, Vec<MemberOof>) =
        results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let expected = plan.seeds.len() * plan.n_folds * config.growths.len();
    if members.len() != expected {
        return Err(Error::Training(format!(
            "expected {expected} members, trained {}",
            members.len()
        )));
    }
    let oof = combine_oof(frame, plan, config, member_oof)?;
    let feature_names = frame.column_names();
    let models: Vec<&BoostedModel> = members.iter().map(|m| &m.model).collect();
    let aggregate_importance = mean_importance(&models, feature_names.len());
    let model = EnsembleModel {
        members,
        plan: plan.clone(),
        config: config.clone(),
        feature_names,
        aggregate_importance,
    };
    Ok((model, oof))
}

fn combine_oof(
    frame: &FeatureFrame,
    plan: &FoldPlan,
    config: &EnsembleConfig,
    members: Vec<MemberOof>,
) -> Result<OofPredictions> {
    let n = frame.n_rows();
    let mut sum = vec![0.0; n];
    // every row must be scored once per (seed, growth)
    let mut seen: BTreeMap<(u64, Growth), Vec<u32>> = BTreeMap::new();
    for m in &members {
        let counts = seen.entry((m.seed, m.growth)).or_insert_with(|| vec![0; n]);
        for (&i, &s) in m.rows.iter().zip(&m.scores) {
            counts[i] += 1;
            sum[i] += s;
        }
    }
    for ((seed, growth), counts) in &seen {
        if let Some(i) = counts.iter().position(|&c| c != 1) {
            return Err(Error::Integrity(format!(
                "row {} scored {} times for seed={seed} growth={growth}",
                frame.row_ids()[i],
                counts[i]
            )));
        }
    }
    let per_row = (plan.seeds.len() * config.growths.len()) as f64;
    let scores: Vec<f64> = sum.iter().map(|s| s / per_row).collect();

    Ok(OofPredictions {
        row_ids: frame.row_ids().to_vec(),
        labels: frame.labels().to_vec(),
        scores,
        members,
    })
}

/// Mean of the members' normalized importance vectors, renormalized.
fn mean_importance(models: &[&BoostedModel], n_features: usize) -> Vec<f64> {
    let mut total = vec![0.0; n_features];
    for m in models {
        for (t, v) in total.iter_mut().zip(m.feature_importance()) {
            *t += v;
        }
    }
    gbdt::normalize(&total)
}

/// Ensemble score per row of `frame`, in [0, 1].
pub fn predict_ensemble(ensemble: &EnsembleModel, frame: &FeatureFrame) -> Result<Vec<f64>> {
    if frame.column_names() != ensemble.feature_names {
        return Err(Error::Shape(format!(
            "frame has {} columns that do not match the ensemble's {} features",
            frame.n_cols(),
            ensemble.feature_names.len()
        )));
    }
    if ensemble.members.is_empty() {
        return Err(Error::Input("ensemble has no members".into()));
    }
    let per_member: Vec<Vec<f64>> = ensemble
        .members
        .par_iter()
        .map(|m| m.model.predict(frame))
        .collect::<Result<_>>()?;
    Ok(average(&per_member, ensemble.config.averaging))
}

/// Column-wise average of equally long score vectors.
pub fn average(per_member: &[Vec<f64>], averaging: Averaging) -> Vec<f64> {
    let n = per_member.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (k, scores) in per_member.iter().enumerate() {
        let values = match averaging {
            Averaging::Mean => scores.clone(),
            Averaging::Rank => normalized_ranks(scores),
        };
        // running mean, exact when every member agrees
        for (o, v) in out.iter_mut().zip(values) {
            *o += (v - *o) / (k + 1) as f64;
        }
    }
    out
}

/// Average ranks mapped to [0, 1]; ties share their mean rank.
fn normalized_ranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    if n < 2 {
        return vec![0.5; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r / (n - 1) as f64;
        }
        i = j + 1;
    }
    ranks
}

impl EnsembleModel {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    /// Features ranked by aggregate importance, ties broken by name.
    pub fn ranked_importance(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.aggregate_importance.iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }

    /// Scored rows whose patient was in the scoring member's training
    /// partition, or not in its validation partition. Empty when the
    /// out-of-fold predictions are clean.
    pub fn leakage_violations(&self, frame: &FeatureFrame, oof: &OofPredictions) -> Vec<String> {
        let mut out = Vec::new();
        for m in &oof.members {
            let Some(a) = self.plan.get(m.seed, m.fold) else {
                out.push(format!("seed={} fold={} missing from plan", m.seed, m.fold));
                continue;
            };
            for &i in &m.rows {
                let p = &frame.row_patients()[i];
                if a.train_patients.contains(p) || !a.validation_patients.contains(p) {
                    out.push(format!(
                        "seed={} fold={} growth={} scored {} of patient {p}",
                        m.seed,
                        m.fold,
                        m.growth,
                        frame.row_ids()[i]
                    ));
                }
            }
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.members {
            m.model.save(dir.join(m.file_name()))?;
        }
        self.plan.save(dir.join(PLAN_FILE))?;
        let manifest = Manifest {
            format_version: ENSEMBLE_FORMAT_VERSION,
            plan_hash: self.plan.hash(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            feature_names: self.feature_names.clone(),
            members: self
                .members
                .iter()
                .map(|m| ManifestMember {
                    seed: m.seed,
                    fold: m.fold,
                    growth: m.growth,
                    file: m.file_name(),
                })
                .collect(),
            aggregate_importance: self.aggregate_importance.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_reader(BufReader::new(file))?;
        if manifest.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "ensemble format version {} (expected {ENSEMBLE_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let plan = FoldPlan::load(dir.join(PLAN_FILE))?;
        if plan.hash() != manifest.plan_hash {
            return Err(Error::Integrity(
                "fold plan does not match the ensemble manifest".into(),
            ));
        }
        if manifest.config.hash() != manifest.config_hash {
            return Err(Error::Integrity("config does not match its recorded hash".into()));
        }
        let mut members = Vec::with_capacity(manifest.members.len());
        for m in manifest.members {
            let model = BoostedModel::load(dir.join(&m.file))?;
            if model.feature_names != manifest.feature_names {
                return Err(Error::Integrity(format!("{} has different feature names", m.file)));
            }
            members.push(Member {
                seed: m.seed,
                fold: m.fold,
                growth: m.growth,
                model,
            });
        }
        Ok(Self {
            members,
            plan,
            config: manifest.config,
            feature_names: manifest.feature_names,
            aggregate_importance: manifest.aggregate_importance,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestMember {
    seed: u64,
    fold: usize,
    growth: Growth,
    file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    plan_hash: String,
    config_hash: String,
    config: EnsembleConfig,
    feature_names: Vec<String>,
    members: Vec<ManifestMember>,
    aggregate_importance: Vec<f64>,
}
