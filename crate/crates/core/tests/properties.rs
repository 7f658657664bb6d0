use lesion_triage::features::patient_normalize;
use lesion_triage::metrics::{dice_cam_loss, pauc_above_tpr, roc_auc, MapPair, DICE_EPSILON};
use lesion_triage::{stratified_group_kfold, FoldPlan};
use proptest::prelude::*;

fn scored_set() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    prop::collection::vec((0u8..2, 0u32..40), 2..60).prop_filter_map("both classes", |pairs| {
        let labels: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        (n_pos > 0 && n_pos < labels.len()).then(|| (labels, pairs.iter().map(|p| p.1 as f64 / 40.0).collect()))
    })
}

proptest! {
    #[test]
    fn pauc_is_invariant_under_increasing_transforms((labels, scores) in scored_set()) {
        let base = pauc_above_tpr(&labels, &scores, 0.8).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let again = pauc_above_tpr(&labels, &warped, 0.8).unwrap();
        prop_assert!((base - again).abs() < 1e-12);
        prop_assert!((0.0..=0.2 + 1e-12).contains(&base));
    }

    #[test]
    fn pauc_at_zero_floor_is_auc((labels, scores) in scored_set()) {
        let pauc = pauc_above_tpr(&labels, &scores, 0.0).unwrap();
        let auc = roc_auc(&labels, &scores).unwrap();
        prop_assert!((pauc - auc).abs() < 1e-9);
    }

    #[test]
    fn dice_is_symmetric(cells in prop::collection::vec((0u8..2, 0u8..2), 1..64)) {
        let a: Vec<f64> = cells.iter().map(|c| f64::from(c.0)).collect();
        let b: Vec<f64> = cells.iter().map(|c| f64::from(c.1)).collect();
        let pair = MapPair::new(1, cells.len(), a, b).unwrap();
        let d1 = dice_cam_loss(&pair, DICE_EPSILON);
        let d2 = dice_cam_loss(&pair.swapped(), DICE_EPSILON);
        prop_assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn patient_normalized_values_have_zero_mean(
        values in prop::collection::vec(-100.0f64..100.0, 1..40),
        n_patients in 1usize..5,
    ) {
        let patients: Vec<String> = (0..values.len()).map(|i| format!("p{}", i % n_patients)).collect();
        let refs: Vec<&str> = patients.iter().map(String::as_str).collect();
        let z = patient_normalize(&values, &refs);
        for p in 0..n_patients.min(values.len()) {
            let group: Vec<f64> = z.iter().zip(&patients).filter(|(_, q)| **q == format!("p{p}")).map(|(v, _)| *v).collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            prop_assert!(mean.abs() < 1e-6, "patient {p} mean {mean}");
        }
    }

    #[test]
    fn folds_are_patient_disjoint_and_cover_every_row(
        sizes in prop::collection::vec(1usize..5, 5..30),
        pos_every in 2usize..5,
        seed in 0u64..1000,
    ) {
        let mut patients = Vec::new();
        let mut labels = Vec::new();
        for (p, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                patients.push(format!("P{p}"));
                labels.push(u8::from(k == 0 && p % pos_every == 0));
            }
        }
        let (folds, _) = stratified_group_kfold(&patients, &labels, 5, seed).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for f in &folds {
            prop_assert!(f.train_patients.is_disjoint(&f.validation_patients));
            prop_assert_eq!(f.train_patients.len() + f.validation_patients.len(), sizes.len());
            for p in &f.validation_patients {
                *seen.entry(p.clone()).or_insert(0) += 1;
            }
        }
        prop_assert_eq!(seen.len(), sizes.len());
        prop_assert!(seen.values().all(|&c| c == 1));
        let plan = FoldPlan::build(&patients, &labels, 5, &[seed]).unwrap();
        prop_assert_eq!(plan.assignments().len(), 5);
    }
}
