//! Feature-group ablation sweeps scored by out-of-fold pAUC.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{train_ensemble, EnsembleConfig};
use crate::features::{featurize, FeatureCatalog, FeatureFrame, FeatureGroup};
use crate::folds::FoldPlan;
use crate::ingest::Dataset;
use crate::metrics::{pauc_above_tpr, roc_auc, DEFAULT_MIN_TPR};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub name: String,
    /// Engineered descriptors and patient aggregates.
    pub use_engineered: bool,
    pub use_patient_norm: bool,
    pub use_external_preds: bool,
    /// Train on synthetic rows too (scoring always uses real rows).
    pub include_synthetic: bool,
}

impl AblationConfig {
    pub fn groups(&self) -> Vec<FeatureGroup> {
        let mut g = vec![
            FeatureGroup::RawNumeric,
            FeatureGroup::RawCategorical,
            FeatureGroup::Onehot,
        ];
        if self.use_engineered {
            g.push(FeatureGroup::Engineered);
            g.push(FeatureGroup::PatientAgg);
        }
        if self.use_patient_norm {
            g.push(FeatureGroup::PatientNorm);
        }
        if self.use_external_preds {
            g.push(FeatureGroup::ExternalPred);
        }
        g
    }

    /// The three-step sweep: raw metadata, + feature engineering, + image-model probabilities.
    pub fn standard_sweep() -> Vec<AblationConfig> {
        let step = |name: &str, eng: bool, preds: bool| AblationConfig {
            name: name.into(),
            use_engineered: eng,
            use_patient_norm: eng,
            use_external_preds: preds,
            include_synthetic: false,
        };
        vec![
            step("raw", false, false),
            step("+engineered", true, false),
            step("+predictions", true, true),
        ]
    }

    pub fn list_from_json_file(path: impl AsRef<Path>) -> Result<Vec<AblationConfig>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    pub min_tpr: f64,
    pub ensemble: EnsembleConfig,
    /// Run configurations concurrently.
    pub parallel: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_folds: 5,
            seeds: vec![0, 1, 2],
            min_tpr: DEFAULT_MIN_TPR,
            ensemble: EnsembleConfig::default(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub pauc: f64,
    pub auc: f64,
    pub n_members: usize,
    pub n_features: usize,
    pub n_train_rows: usize,
    pub n_scored_rows: usize,
}

/// Published reference score carried alongside a sweep for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScore {
    pub label: String,
    pub pauc: f64,
}

pub fn reference_scores() -> Vec<ReferenceScore> {
    [
        ("GBDT Ensemble (raw)", 0.1500),
        ("+ Feature Engineering", 0.1644),
        ("+ Image Model Probabilities", 0.1755),
        ("EVA02 (real only)", 0.1516),
        ("EVA02 + Synth", 0.1633),
    ]
    .into_iter()
    .map(|(label, pauc)| ReferenceScore {
        label: label.into(),
        pauc,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub min_tpr: f64,
    /// Hash of the fold plan every configuration shared.
    pub plan_hash: String,
    pub rows: Vec<AblationRow>,
    pub reference: Vec<ReferenceScore>,
}

/// Featurize `dataset` once, build one fold plan over all of its patients,
/// then train and score an ensemble per configuration.
pub fn run_sweep(
    dataset: &Dataset,
    catalog: &FeatureCatalog,
    configs: &[AblationConfig],
    settings: &SweepSettings,
) -> Result<AblationTable> {
    if configs.is_empty() {
        return Err(Error::Validation("sweep needs at least one configuration".into()));
    }
    let mut names = BTreeSet::new();
    for c in configs {
        if !names.insert(c.name.as_str()) {
            return Err(Error::Validation(format!("duplicate configuration name {:?}", c.name)));
        }
    }
    let (frame, _) = featurize(dataset, catalog, None)?;
    let plan = FoldPlan::build(frame.row_patients(), frame.labels(), settings.n_folds, &settings.seeds)?;
    let run = |c: &AblationConfig| {
        run_config(&frame, &plan, c, settings).map_err(|e| Error::Config {
            name: c.name.clone(),
            source: Box::new(e),
        })
    };
    let rows: Vec<AblationRow> = if settings.parallel {
        use rayon::prelude::*;
        configs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        configs.iter().map(run).collect::<Result<_>>()?
    };
    Ok(AblationTable {
        min_tpr: settings.min_tpr,
        plan_hash: plan.hash(),
        rows,
        reference: reference_scores(),
    })
}

fn run_config(
    frame: &FeatureFrame,
    plan: &FoldPlan,
    config: &AblationConfig,
    settings: &SweepSettings,
) -> Result<AblationRow> {
    let columns = frame.select_groups(&config.groups());
    let keep: Vec<usize> = (0..columns.n_rows())
        .filter(|&i| config.include_synthetic || !columns.synthetic()[i])
        .collect();
    let train_frame = columns.select_rows(&keep);
    let (model, oof) = train_ensemble(&train_frame, plan, &settings.ensemble)?;
    let real: Vec<usize> = (0..train_frame.n_rows())
        .filter(|&i| !train_frame.synthetic()[i])
        .collect();
    let labels: Vec<u8> = real.iter().map(|&i| oof.labels[i]).collect();
    let scores: Vec<f64> = real.iter().map(|&i| oof.scores[i]).collect();
    Ok(AblationRow {
        name: config.name.clone(),
        pauc: pauc_above_tpr(&labels, &scores, settings.min_tpr)?,
        auc: roc_auc(&labels, &scores)?,
        n_members: model.n_members(),
        n_features: train_frame.n_cols(),
        n_train_rows: train_frame.n_rows(),
        n_scored_rows: real.len(),
    })
}

impl AblationTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "name",
            "pauc",
            "auc",
            "n_members",
            "n_features",
            "n_train_rows",
            "n_scored_rows",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                format!("{:.6}", r.pauc),
                format!("{:.6}", r.auc),
                r.n_members.to_string(),
                r.n_features.to_string(),
                r.n_train_rows.to_string(),
                r.n_scored_rows.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Aligned plain-text rendering, results first, then reference scores.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(self.reference.iter().map(|r| r.label.len()))
            .chain(["Configuration".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>7}",
            "Configuration", "pAUC", "AUC", "members"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>7}",
                r.name, r.pauc, r.auc, r.n_members
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$}  {:>8}", "Reference", "pAUC");
        for r in &self.reference {
            let _ = writeln!(out, "{:<width$}  {:>8.4}", r.label, r.pauc);
        }
        out
    }
}
