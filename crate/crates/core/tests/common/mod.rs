//! Loading helpers for the shipped fixtures.
#![allow(dead_code)]

use std::path::PathBuf;

use lesion_triage::ingest::PredictionTable;
use lesion_triage::{load_dataset, merge_prediction_columns, Dataset, DatasetSchema};

/// Fixtures live in the core crate; tests of sibling crates reach them
/// through `../core`.
pub fn fixture(name: &str) -> PathBuf {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let own = crate_dir.join("fixtures");
    let dir = if own.is_dir() {
        own
    } else {
        crate_dir.join("../core/fixtures")
    };
    dir.join(name)
}

/// The 50-row cohort with its image-model predictions merged in.
pub fn cohort() -> Dataset {
    let schema = DatasetSchema::default();
    let (dataset, report) = load_dataset(fixture("cohort_metadata.csv"), &schema).unwrap();
    assert!(report.rejected.is_empty());
    let predictions = PredictionTable::from_csv(fixture("cohort_predictions.csv"), &schema).unwrap();
    let (merged, merge) = merge_prediction_columns(&dataset, &predictions).unwrap();
    assert_eq!(merge.matched, dataset.len());
    merged
}

pub fn balanced() -> Dataset {
    load_dataset(fixture("balanced_metadata.csv"), &DatasetSchema::default())
        .unwrap()
        .0
}
