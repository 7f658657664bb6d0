//! ROC analysis, partial AUC above a TPR floor, confidence histograms, and
//! the classification / CAM / segmentation loss functions.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_MIN_TPR: f64 = 0.8;
pub const PROB_CLAMP: f64 = 1e-7;
pub const DICE_EPSILON: f64 = 1e-6;
pub const CONFIDENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Empirical ROC curve from (0, 0) to (1, 1). `thresholds[0]` is +inf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub thresholds: Vec<f64>,
}

fn class_counts(labels: &[u8], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let mut pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::Metric(format!("label {other} is not binary"))),
        }
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Metric(format!("non-finite score {s}")));
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Build the ROC curve over distinct score thresholds, highest first. Tied
/// scores form a single step.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = RocCurve {
        fpr: vec![0.0],
        tpr: vec![0.0],
        thresholds: vec![f64::INFINITY],
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.fpr.push(fp as f64 / n_neg as f64);
        curve.tpr.push(tp as f64 / n_pos as f64);
        curve.thresholds.push(threshold);
    }
    Ok(curve)
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.fpr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fpr.is_empty()
    }

    /// Area between the curve and the line `TPR = min_tpr`, integrating
    /// only where the curve lies above it.
    pub fn partial_area_above_tpr(&self, min_tpr: f64) -> f64 {
        let mut area = 0.0;
        for k in 1..self.len() {
            let df = self.fpr[k] - self.fpr[k - 1];
            if df <= 0.0 {
                continue;
            }
            let a = self.tpr[k - 1] - min_tpr;
            let b = self.tpr[k] - min_tpr;
            if a >= 0.0 && b >= 0.0 {
                area += df * (a + b) / 2.0;
            } else if b > 0.0 {
                // tpr is non-decreasing, so only a < 0 < b crosses upward
                area += 0.5 * df * b / (b - a) * b;
            }
        }
        area
    }
}

/// Partial AUC above `min_tpr`; lies in `[0, 1 - min_tpr]`.
pub fn pauc_above_tpr(labels: &[u8], scores: &[f64], min_tpr: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&min_tpr) {
        return Err(Error::Parameter(format!("min_tpr {min_tpr} outside [0, 1)")));
    }
    Ok(roc_curve(labels, scores)?.partial_area_above_tpr(min_tpr))
}

/// Full ROC AUC via the Mann-Whitney rank statistic (ties share ranks).
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_run = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += avg_rank * pos_in_run as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Histograms of ensemble confidence: TP/FP among scores at or above 0.5,
/// and the full score distribution per true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub bin_edges: Vec<f64>,
    pub threshold: f64,
    pub true_positive_counts: Vec<usize>,
    pub false_positive_counts: Vec<usize>,
    pub malignant_counts: Vec<usize>,
    pub benign_counts: Vec<usize>,
}

pub fn confidence_report(labels: &[u8], scores: &[f64], n_bins: usize) -> Result<ConfidenceReport> {
    if n_bins < 2 {
        return Err(Error::Parameter(format!("n_bins {n_bins} < 2")));
    }
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let mut report = ConfidenceReport {
        bin_edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
        threshold: CONFIDENCE_THRESHOLD,
        true_positive_counts: vec![0; n_bins],
        false_positive_counts: vec![0; n_bins],
        malignant_counts: vec![0; n_bins],
        benign_counts: vec![0; n_bins],
    };
    for (&y, &s) in labels.iter().zip(scores) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Parameter(format!("score {s} outside [0, 1]")));
        }
        let bin = ((s * n_bins as f64).floor() as usize).min(n_bins - 1);
        match y {
            1 => report.malignant_counts[bin] += 1,
            0 => report.benign_counts[bin] += 1,
            other => return Err(Error::Metric(format!("label {other} is not binary"))),
        }
        if s >= CONFIDENCE_THRESHOLD {
            if y == 1 {
                report.true_positive_counts[bin] += 1;
            } else {
                report.false_positive_counts[bin] += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub min_tpr: f64,
    pub pauc: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub roc: RocCurve,
    pub confidence: ConfidenceReport,
}

impl EvalReport {
    pub fn new(labels: &[u8], scores: &[f64], min_tpr: f64, n_bins: usize) -> Result<Self> {
        let pauc = pauc_above_tpr(labels, scores, min_tpr)?;
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        Ok(Self {
            min_tpr,
            pauc,
            auc: roc_auc(labels, scores)?,
            n_pos,
            n_neg: labels.len() - n_pos,
            roc: roc_curve(labels, scores)?,
            confidence: confidence_report(labels, scores, n_bins)?,
        })
    }

    /// JSON with every float rounded to 6 decimals.
    pub fn to_json_rounded(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        round_floats(&mut value, 6);
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Round every float in a JSON tree. Non-finite values become null.
pub fn round_floats(value: &mut serde_json::Value, decimals: i32) {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let scale = 10f64.powi(decimals);
            *value = serde_json::Number::from_f64((x * scale).round() / scale)
                .map(Value::Number)
                .unwrap_or(Value::Null);
        }
        Value::Array(items) => items.iter_mut().for_each(|v| round_floats(v, decimals)),
        Value::Object(map) => map.values_mut().for_each(|v| round_floats(v, decimals)),
        _ => {}
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of a single prediction.
pub fn bce(y: f64, y_hat: f64) -> f64 {
    let p = clamp_prob(y_hat);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over a batch.
pub fn bce_loss(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "{} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    Ok(y.iter().zip(y_hat).map(|(&t, &p)| bce(t, p)).sum::<f64>() / y.len() as f64)
}

/// A prediction map (values in [0, 1]) paired with a binary truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPair {
    height: usize,
    width: usize,
    prediction: Vec<f64>,
    truth: Vec<f64>,
}

impl MapPair {
    pub fn new(height: usize, width: usize, prediction: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if prediction.len() != n || truth.len() != n {
            return Err(Error::Shape(format!(
                "{height}x{width} maps need {n} values, got prediction {} and truth {}",
                prediction.len(),
                truth.len()
            )));
        }
        if let Some(v) = prediction.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("prediction value {v} outside [0, 1]")));
        }
        if let Some(v) = truth.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Input(format!("truth value {v} is not binary")));
        }
        Ok(Self {
            height,
            width,
            prediction,
            truth,
        })
    }

    /// Build from row-major nested rows.
    pub fn from_rows(prediction: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Self> {
        let height = prediction.len();
        let width = prediction.first().map_or(0, Vec::len);
        if truth.len() != height || prediction.iter().chain(truth).any(|row| row.len() != width) {
            return Err(Error::Shape("prediction and truth maps differ in shape".into()));
        }
        Self::new(height, width, prediction.concat(), truth.concat())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn swapped(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            prediction: self.truth.clone(),
            truth: self.prediction.clone(),
        }
    }
}

fn dice_term(prediction: &[f64], truth: &[f64], epsilon: f64) -> f64 {
    let intersection: f64 = prediction.iter().zip(truth).map(|(p, t)| p * t).sum();
    let total: f64 = prediction.iter().sum::<f64>() + truth.iter().sum::<f64>();
    1.0 - 2.0 * intersection / (total + epsilon)
}

/// Dice loss aligning an activation map with its ground-truth mask.
pub fn dice_cam_loss(pair: &MapPair, epsilon: f64) -> f64 {
    dice_term(&pair.prediction, &pair.truth, epsilon)
}

/// Pixel-wise mean BCE plus Dice on the predicted mask.
pub fn seg_loss(pair: &MapPair) -> f64 {
    let bce_mean = pair
        .truth
        .iter()
        .zip(&pair.prediction)
        .map(|(&t, &p)| bce(t, p))
        .sum::<f64>()
        / pair.truth.len().max(1) as f64;
    bce_mean + dice_term(&pair.prediction, &pair.truth, DICE_EPSILON)
}

pub fn total_loss(cls: f64, cam: f64, seg: f64) -> f64 {
    debug_assert!([cls, cam, seg].iter().all(|v| v.is_finite() && *v >= 0.0));
    cls + cam + seg
}
