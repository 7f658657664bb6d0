//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

/// Partial AUC above `min_tpr` by midpoint integration of the ROC curve on
/// a dense FPR grid. The ROC points come from counting, for every distinct
/// score, how many positives and negatives score at or above it.
pub fn dense_grid_pauc(labels: &[u8], scores: &[f64], min_tpr: f64) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = labels.iter().zip(scores).filter(|(&y, &s)| y == 1 && s >= t).count() as f64;
        let fp = labels.iter().zip(scores).filter(|(&y, &s)| y == 0 && s >= t).count() as f64;
        points.push((fp / n_neg, tp / n_pos));
    }
    // grid cells align with the FPR steps k / n_neg, so vertical jumps fall
    // on cell boundaries
    let cells = n_neg as usize * 20_000;
    let h = 1.0 / cells as f64;
    let mut seg = 0;
    let mut area = 0.0;
    for i in 0..cells {
        let x = (i as f64 + 0.5) * h;
        while points[seg + 1].0 < x {
            seg += 1;
        }
        let (x0, y0) = points[seg];
        let (x1, y1) = points[seg + 1];
        let y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        area += (y - min_tpr).max(0.0) * h;
    }
    area
}

/// One candidate partition of the rows: rows in `left` go left.
#[derive(Debug, Clone)]
pub struct Partition {
    pub feature: usize,
    pub left: Vec<bool>,
    pub gain: f64,
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Gain of sending `left` rows left, using logistic gradients at the base
/// rate.
pub fn partition_gain(labels: &[u8], left: &[bool], lambda: f64) -> (f64, f64, f64, usize, usize) {
    let n = labels.len() as f64;
    let p = labels.iter().filter(|&&y| y == 1).count() as f64 / n;
    let hess = p * (1.0 - p);
    let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0);
    let (mut gr, mut hr, mut nr) = (0.0, 0.0, 0);
    for (&y, &l) in labels.iter().zip(left) {
        let g = p - f64::from(y);
        if l {
            gl += g;
            hl += hess;
            nl += 1;
        } else {
            gr += g;
            hr += hess;
            nr += 1;
        }
    }
    let gain = 0.5 * (leaf_score(gl, hl, lambda) + leaf_score(gr, hr, lambda) - leaf_score(gl + gr, hl + hr, lambda));
    (gain, hl, hr, nl, nr)
}

/// Every admissible first split: each feature, each threshold between
/// consecutive distinct values, and each direction for missing values.
pub fn all_partitions(rows: &[Vec<f64>], labels: &[u8], lambda: f64, min_child_weight: f64) -> Vec<Partition> {
    let n_features = rows.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for f in 0..n_features {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).filter(|v| !v.is_nan()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let has_missing = rows.iter().any(|r| r[f].is_nan());
        for &t in values.iter().take(values.len().saturating_sub(1)) {
            for missing_left in [true, false] {
                if !has_missing && !missing_left {
                    continue;
                }
                let left: Vec<bool> = rows
                    .iter()
                    .map(|r| if r[f].is_nan() { missing_left } else { r[f] <= t })
                    .collect();
                let (gain, hl, hr, nl, nr) = partition_gain(labels, &left, lambda);
                if nl > 0 && nr > 0 && hl >= min_child_weight && hr >= min_child_weight {
                    out.push(Partition { feature: f, left, gain });
                }
            }
        }
    }
    out
}

/// Highest-gain partition with positive gain.
pub fn best_partition(rows: &[Vec<f64>], labels: &[u8], lambda: f64, min_child_weight: f64) -> Option<Partition> {
    all_partitions(rows, labels, lambda, min_child_weight)
        .into_iter()
        .filter(|p| p.gain > 0.0)
        .fold(None, |best: Option<Partition>, p| match best {
            Some(b) if b.gain >= p.gain => Some(b),
            _ => Some(p),
        })
}

use lesion_triage::gbdt::{first_split, GbdtConfig};
use lesion_triage::FeatureFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dataset with at most 255 distinct values per feature and some
/// missing cells; both classes present.
pub fn random_split_dataset(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(10..300);
    let n_features = rng.random_range(1..8);
    let levels: Vec<usize> = (0..n_features).map(|_| rng.random_range(2..=255)).collect();
    let missing: Vec<f64> = (0..n_features)
        .map(|_| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..0.3)
            }
        })
        .collect();
    let informative = rng.random_range(0..n_features);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    labels[0] = 0;
    labels[1] = 1;
    let rows = (0..n)
        .map(|i| {
            (0..n_features)
                .map(|f| {
                    if rng.random_bool(missing[f]) {
                        return f64::NAN;
                    }
                    let shift = if f == informative && labels[i] == 1 {
                        levels[f] / 3
                    } else {
                        0
                    };
                    let k = (rng.random_range(0..levels[f]) + shift).min(levels[f] - 1);
                    // irregular spacing so cuts are not on a grid
                    k as f64 * 0.37 + (k * k) as f64 * 1e-3 - 5.0
                })
                .collect()
        })
        .collect();
    (rows, labels)
}

/// Compare the histogram learner's first split with the exact greedy split.
/// Near-ties (within 1e-9) are accepted when the learner's partition is one
/// of the tied optima.
pub fn check_first_split(rows: &[Vec<f64>], labels: &[u8]) -> Result<(), String> {
    let config = GbdtConfig::default();
    let names: Vec<String> = (0..rows[0].len()).map(|f| format!("x{f}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let frame = FeatureFrame::from_matrix(&names, rows, labels, None).map_err(|e| e.to_string())?;
    let learned = first_split(&frame, &config).map_err(|e| e.to_string())?;
    let oracle = best_partition(rows, labels, config.l2_lambda, config.min_child_weight);
    match (learned, oracle) {
        (None, None) => Ok(()),
        (Some(s), None) => Err(format!("learner split on {} but no split has positive gain", s.0)),
        (None, Some(p)) => Err(format!("learner found no split, oracle gain {}", p.gain)),
        (Some((feature, threshold, missing_left, gain)), Some(best)) => {
            let left: Vec<bool> = rows
                .iter()
                .map(|r| {
                    if r[feature].is_nan() {
                        missing_left
                    } else {
                        r[feature] <= threshold
                    }
                })
                .collect();
            let (own_gain, ..) = partition_gain(labels, &left, config.l2_lambda);
            let tol = 1e-9 * best.gain.abs().max(1.0);
            if (own_gain - gain).abs() > tol {
                return Err(format!("reported gain {gain} but partition gain {own_gain}"));
            }
            if feature == best.feature && left == best.left {
                return Ok(());
            }
            if (own_gain - best.gain).abs() <= tol {
                Ok(())
            } else {
                Err(format!(
                    "learner split feature {feature} gain {own_gain}, oracle feature {} gain {}",
                    best.feature, best.gain
                ))
            }
        }
    }
}
