use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lesion_triage::gbdt::{train, GbdtConfig};
use lesion_triage::metrics::pauc_above_tpr;
use lesion_triage::synth::{generate_cohort, SynthConfig};
use lesion_triage::{featurize, DatasetSchema, FeatureCatalog, Growth};
use lesion_triage_bench::{cohort_frame, ranked_scores};

fn pauc(c: &mut Criterion) {
    let mut group = c.benchmark_group("pauc");
    for n in [1_000, 100_000] {
        let (labels, scores) = ranked_scores(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| pauc_above_tpr(black_box(&labels), black_box(&scores), 0.8).unwrap())
        });
    }
    group.finish();
}

fn featurize_cohort(c: &mut Criterion) {
    let dataset = generate_cohort(
        &SynthConfig {
            n_patients: 200,
            ..SynthConfig::default()
        },
        &DatasetSchema::default(),
    )
    .unwrap();
    let catalog = FeatureCatalog::default();
    c.bench_function("featurize/200_patients", |b| {
        b.iter(|| featurize(black_box(&dataset), &catalog, None).unwrap())
    });
}

fn gbdt_train(c: &mut Criterion) {
    let frame = cohort_frame(200);
    let config = GbdtConfig {
        n_trees: 20,
        ..GbdtConfig::default()
    };
    let mut group = c.benchmark_group("gbdt_train");
    group.sample_size(10);
    for growth in Growth::ALL {
        group.bench_function(growth.to_string(), |b| {
            b.iter(|| train(black_box(&frame), &config, growth, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pauc, featurize_cohort, gbdt_train);
criterion_main!(benches);
