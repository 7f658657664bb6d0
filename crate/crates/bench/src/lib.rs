//! Shared inputs for the pipeline benchmarks.

use lesion_triage::synth::{generate_cohort, SynthConfig};
use lesion_triage::{featurize, DatasetSchema, FeatureCatalog, FeatureFrame};

/// Synthetic cohort featurized with the default catalog.
pub fn cohort_frame(n_patients: usize) -> FeatureFrame {
    let config = SynthConfig {
        n_patients,
        ..SynthConfig::default()
    };
    let dataset = generate_cohort(&config, &DatasetSchema::default()).expect("synthetic cohort");
    featurize(&dataset, &FeatureCatalog::default(), None)
        .expect("featurize")
        .0
}

/// Deterministic labels and overlapping scores.
pub fn ranked_scores(n: usize) -> (Vec<u8>, Vec<f64>) {
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 7 == 0)).collect();
    let scores = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| ((i * 7919) % 1000) as f64 / 1000.0 + 0.3 * f64::from(y))
        .collect();
    (labels, scores)
}
