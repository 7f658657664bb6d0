use lesion_triage::ablation::SweepSettings;
use lesion_triage::synth::{generate_cohort, SynthConfig};
use lesion_triage::{run_sweep, AblationConfig, DatasetSchema, Error, FeatureCatalog};

fn config(name: &str, preds: bool) -> AblationConfig {
    AblationConfig {
        name: name.into(),
        use_engineered: true,
        use_patient_norm: true,
        use_external_preds: preds,
        include_synthetic: false,
    }
}

fn quick_settings() -> SweepSettings {
    let mut s = SweepSettings {
        seeds: vec![0],
        ..SweepSettings::default()
    };
    s.ensemble.gbdt.n_trees = 30;
    s
}

#[test]
fn signal_only_in_predictions_needs_the_prediction_columns() {
    let cohort = SynthConfig {
        n_patients: 80,
        positive_rate: 0.15,
        raw_signal: 0.0,
        engineered_signal: 0.0,
        prediction_signal: 1.5,
        seed: 5,
        ..SynthConfig::default()
    };
    let dataset = generate_cohort(&cohort, &DatasetSchema::default()).unwrap();
    let configs = [config("without", false), config("with", true)];
    let table = run_sweep(&dataset, &FeatureCatalog::default(), &configs, &quick_settings()).unwrap();
    assert!(table.rows[1].pauc > table.rows[0].pauc, "{}", table.to_text());
}

#[test]
fn constant_group_changes_nothing() {
    let cohort = SynthConfig {
        n_patients: 40,
        positive_rate: 0.2,
        with_predictions: false,
        seed: 9,
        ..SynthConfig::default()
    };
    let dataset = generate_cohort(&cohort, &DatasetSchema::default()).unwrap();
    let configs = [config("without", false), config("with", true)];
    let table = run_sweep(&dataset, &FeatureCatalog::default(), &configs, &quick_settings()).unwrap();
    assert_eq!(table.rows[1].n_features, table.rows[0].n_features + 5);
    assert!(
        (table.rows[0].pauc - table.rows[1].pauc).abs() < 1e-9,
        "{}",
        table.to_text()
    );
}

#[test]
fn single_config_and_duplicate_names() {
    let dataset = generate_cohort(&SynthConfig::default(), &DatasetSchema::default()).unwrap();
    let catalog = FeatureCatalog::default();
    let mut settings = quick_settings();
    settings.ensemble.gbdt.n_trees = 5;
    let table = run_sweep(&dataset, &catalog, &[config("only", true)], &settings).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].n_members, 15);
    assert!(!table.reference.is_empty());

    let err = run_sweep(&dataset, &catalog, &[config("a", true), config("a", false)], &settings).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
    assert!(matches!(
        run_sweep(&dataset, &catalog, &[], &settings),
        Err(Error::Validation(_))
    ));
}
