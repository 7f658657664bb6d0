//! Tabular half of a skin-lesion triage pipeline.
//!
//! Lesion metadata plus externally produced image-model probabilities are
//! ingested ([`ingest`]), expanded into a 214-column feature frame
//! ([`features`]), split into patient-disjoint stratified folds ([`folds`]),
//! and scored by an ensemble ([`ensemble`]) of histogram gradient-boosted
//! trees ([`gbdt`]). Evaluation uses the partial AUC above a minimum TPR
//! ([`metrics`]); [`ablation`] runs feature-group sweeps.

pub mod ablation;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod folds;
pub mod gbdt;
pub mod hashing;
pub mod ingest;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};

pub use ablation::{run_sweep, AblationConfig, AblationRow, AblationTable};
pub use ensemble::{predict_ensemble, train_ensemble, Averaging, EnsembleConfig, EnsembleModel, OofPredictions};
pub use features::{featurize, FeatureCatalog, FeatureFrame, FeatureGroup, FitStats};
pub use folds::{rebalance, stratified_group_kfold, FoldPlan};
pub use gbdt::{BoostedModel, GbdtConfig, Growth};
pub use ingest::{
    load_dataset, merge_prediction_columns, relabel_diagnosis, Dataset, DatasetSchema, LesionRecord, Provenance,
    ThreeClassLabel,
};
pub use metrics::{pauc_above_tpr, roc_auc, roc_curve, EvalReport, RocCurve};
