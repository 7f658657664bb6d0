mod oracles;

use lesion_triage::metrics::pauc_above_tpr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scored_set(rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<f64>) {
    let n = rng.random_range(2..=50);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
    labels[0] = 0;
    labels[1] = 1;
    // coarse scores so ties are common
    let coarse = rng.random_bool(0.5);
    let scores = labels
        .iter()
        .map(|&y| {
            let s: f64 = rng.random::<f64>() + 0.3 * f64::from(y);
            if coarse {
                (s * 5.0).round() / 5.0
            } else {
                s
            }
        })
        .collect();
    (labels, scores)
}

#[test]
fn pauc_matches_dense_grid_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let (labels, scores) = random_scored_set(&mut rng);
        for min_tpr in [0.8, 0.5, 0.0] {
            let got = pauc_above_tpr(&labels, &scores, min_tpr).unwrap();
            let want = oracles::dense_grid_pauc(&labels, &scores, min_tpr);
            assert!(
                (got - want).abs() < 1e-6,
                "min_tpr {min_tpr}: {got} vs {want} for {labels:?} {scores:?}"
            );
        }
    }
}

#[test]
fn pauc_reference_points() {
    let labels = [0, 0, 0, 1, 1, 1];
    let perfect = pauc_above_tpr(&labels, &[0.1, 0.2, 0.3, 0.7, 0.8, 0.9], 0.8).unwrap();
    let diagonal = pauc_above_tpr(&labels, &[0.5; 6], 0.8).unwrap();
    assert_eq!(format!("{perfect:.6}"), "0.200000");
    assert_eq!(format!("{diagonal:.6}"), "0.020000");
    assert!((perfect - 0.2).abs() < 1e-12 && (diagonal - 0.02).abs() < 1e-12);
}

#[test]
fn first_split_matches_exhaustive_search() {
    for seed in 0..50 {
        let (rows, labels) = oracles::random_split_dataset(seed);
        if let Err(e) = oracles::check_first_split(&rows, &labels) {
            panic!("dataset {seed}: {e}");
        }
    }
}
