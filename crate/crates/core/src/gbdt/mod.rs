//! Histogram-based gradient-boosted decision trees for binary logistic loss.
//!
//! Each round fits one tree to the gradients `p - y` and hessians
//! `p (1 - p)` of the current model. Splits maximise the second-order gain
//! `0.5 * (G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l))` over quantile bins and
//! leaves take the value `-lr * G/(H+l)`. Three growth strategies give the
//! ensemble its model diversity:
//!
//! * [`Growth::Leafwise`] splits the best leaf first, up to `max_leaves`;
//! * [`Growth::Levelwise`] splits every splittable leaf per level, up to `max_depth`;
//! * [`Growth::Oblivious`] uses one shared split per level, up to `max_depth`.

pub mod binning;
mod grow;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureFrame;
use crate::{Error, Result};

use binning::BinnedMatrix;
use grow::{GrowContext, HistLayout, HistPool};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Leafwise,
    Levelwise,
    Oblivious,
}

impl Growth {
    pub const ALL: [Growth; 3] = [Growth::Leafwise, Growth::Levelwise, Growth::Oblivious];

    pub fn as_str(self) -> &'static str {
        match self {
            Growth::Leafwise => "leafwise",
            Growth::Levelwise => "levelwise",
            Growth::Oblivious => "oblivious",
        }
    }
}

impl std::fmt::Display for Growth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Growth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "leafwise" => Ok(Growth::Leafwise),
            "levelwise" => Ok(Growth::Levelwise),
            "oblivious" => Ok(Growth::Oblivious),
            other => Err(Error::Parameter(format!("unknown growth strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    /// Leaf budget for leaf-wise growth.
    pub max_leaves: usize,
    /// Depth limit for level-wise and oblivious growth.
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub n_bins: usize,
    /// Fraction of rows sampled (without replacement) per tree.
    pub row_subsample: f64,
    /// Fraction of features sampled per tree.
    pub col_subsample: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            max_depth: 6,
            min_child_weight: 1e-3,
            l2_lambda: 1.0,
            n_bins: 255,
            row_subsample: 1.0,
            col_subsample: 1.0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(2..=256).contains(&self.n_bins) {
            return bad(format!("n_bins {} outside [2, 256]", self.n_bins));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.l2_lambda.is_nan()
            || self.l2_lambda < 0.0
            || self.min_child_weight.is_nan()
            || self.min_child_weight < 0.0
        {
            return bad("l2_lambda and min_child_weight must be >= 0".into());
        }
        if self.max_leaves < 2 || self.max_depth < 1 {
            return bad("max_leaves must be >= 2 and max_depth >= 1".into());
        }
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("col_subsample", self.col_subsample),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Arena-allocated regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                } => {
                    let v = row[feature];
                    let go_left = if v.is_nan() { missing_left } else { v <= threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    /// (feature, threshold) of every split, grouped by depth.
    pub fn splits_by_depth(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = self.nodes[i]
            {
                if out.len() <= d {
                    out.resize(d + 1, Vec::new());
                }
                out[d].push((feature, threshold));
                stack.push((right, d + 1));
                stack.push((left, d + 1));
            }
        }
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// One trained booster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub format_version: u32,
    pub growth: Growth,
    pub seed: u64,
    /// Log-odds of the training positive rate.
    pub base_score: f64,
    pub config: GbdtConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Total split gain per feature (unnormalized).
    pub gain_importance: Vec<f64>,
    /// Training log-loss; entry 0 is the base-score loss, then one per round.
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean log-loss of raw scores, computed stably as softplus(F) - y F.
fn log_loss(raw: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(labels)
        .map(|(&f, &y)| {
            let softplus = if f > 0.0 {
                f + (-f).exp().ln_1p()
            } else {
                f.exp().ln_1p()
            };
            softplus - f64::from(y) * f
        })
        .sum();
    total / raw.len() as f64
}

/// Fit a booster on every row of `frame`.
pub fn train(frame: &FeatureFrame, config: &GbdtConfig, growth: Growth, seed: u64) -> Result<BoostedModel> {
    config.validate()?;
    let n = frame.n_rows();
    if n < 2 {
        return Err(Error::Training(format!("need at least 2 rows, got {n}")));
    }
    let labels = frame.labels();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Training("both classes must be present".into()));
    }
    let n_features = frame.n_cols();
    let binned = BinnedMatrix::build(&frame.data, n_features, config.n_bins)?;
    let layout = HistLayout::new(&binned);

    let rate = n_pos as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let mut raw = vec![base_score; n];
    let mut importance = vec![0.0; n_features];
    let mut train_loss = vec![log_loss(&raw, labels)];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_features: Vec<usize> = (0..n_features).collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut pool = HistPool::default();

    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - f64::from(labels[i]);
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let rows: Vec<u32> = if config.row_subsample < 1.0 {
            let k = ((n as f64 * config.row_subsample).round() as usize).max(1);
            let mut idx: Vec<u32> = sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect();
            idx.sort_unstable();
            idx
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if config.col_subsample < 1.0 && n_features > 1 {
            let k = ((n_features as f64 * config.col_subsample).round() as usize).max(1);
            let mut idx = sample(&mut rng, n_features, k).into_vec();
            idx.sort_unstable();
            idx
        } else {
            all_features.clone()
        };
        let ctx = GrowContext {
            binned: &binned,
            layout: &layout,
            grad: &grad,
            hess: &hess,
            features: &features,
            config,
        };
        let tree = grow::grow_tree(&ctx, &mut pool, growth, rows, &mut importance);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict(frame.row(i));
        }
        train_loss.push(log_loss(&raw, labels));
        trees.push(tree);
    }

    Ok(BoostedModel {
        format_version: MODEL_FORMAT_VERSION,
        growth,
        seed,
        base_score,
        config: config.clone(),
        feature_names: frame.column_names(),
        trees,
        gain_importance: importance,
        train_loss,
    })
}

/// Best first split found by the histogram learner on `frame` at the base
/// score, as (feature, threshold, missing_left, gain).
pub fn first_split(frame: &FeatureFrame, config: &GbdtConfig) -> Result<Option<(usize, f64, bool, f64)>> {
    config.validate()?;
    let labels = frame.labels();
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Training("both classes must be present".into()));
    }
    let binned = BinnedMatrix::build(&frame.data, frame.n_cols(), config.n_bins)?;
    let layout = HistLayout::new(&binned);
    let p = n_pos as f64 / n as f64;
    let grad: Vec<f64> = labels.iter().map(|&y| p - f64::from(y)).collect();
    let hess = vec![p * (1.0 - p); n];
    let features: Vec<usize> = (0..frame.n_cols()).collect();
    let ctx = GrowContext {
        binned: &binned,
        layout: &layout,
        grad: &grad,
        hess: &hess,
        features: &features,
        config,
    };
    Ok(grow::root_split(&ctx, (0..n as u32).collect()).map(|s| {
        (
            s.feature,
            binned.thresholds[s.feature][s.bin as usize],
            s.missing_left,
            s.gain,
        )
    }))
}

impl BoostedModel {
    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.feature_names.len() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {width}",
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row.len())?;
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
    }

    /// Malignancy probability of one row, kept strictly inside (0, 1).
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.raw_score(row)?).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
    }

    pub fn predict(&self, frame: &FeatureFrame) -> Result<Vec<f64>> {
        self.check_width(frame.n_cols())?;
        frame.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Split gain per feature normalized to sum to 1 (all zeros without splits).
    pub fn feature_importance(&self) -> Vec<f64> {
        normalize(&self.gain_importance)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(Error::Format(format!(
                "model format version {version:?} (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        let model: BoostedModel = serde_json::from_value(value)?;
        if model.gain_importance.len() != model.feature_names.len() {
            return Err(Error::Format("importance length differs from feature count".into()));
        }
        Ok(model)
    }
}

pub(crate) fn normalize(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; values.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_separable() -> FeatureFrame {
        let xs: Vec<f64> = (-10..10).map(|i| i as f64 + 0.5).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let labels: Vec<u8> = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        FeatureFrame::from_matrix(&["x"], &rows, &labels, None).unwrap()
    }

    fn cfg(n_trees: usize, lr: f64) -> GbdtConfig {
        GbdtConfig {
            n_trees,
            learning_rate: lr,
            ..GbdtConfig::default()
        }
    }

    #[test]
    fn separable_converges_with_decreasing_loss() {
        let frame = toy_separable();
        for growth in Growth::ALL {
            let model = train(&frame, &cfg(10, 0.3), growth, 0).unwrap();
            assert!(model.train_loss.windows(2).all(|w| w[1] < w[0]), "{growth}");
            let preds = model.predict(&frame).unwrap();
            let correct = preds
                .iter()
                .zip(frame.labels())
                .filter(|(&p, &y)| (p >= 0.5) == (y == 1))
                .count();
            assert_eq!(correct, frame.n_rows(), "{growth}");
        }
    }

    #[test]
    fn zero_trees_predict_base_rate() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let labels = [0, 0, 0, 0, 0, 0, 1, 1];
        let frame = FeatureFrame::from_matrix(&["x"], &rows, &labels, None).unwrap();
        let model = train(&frame, &cfg(0, 0.1), Growth::Leafwise, 0).unwrap();
        for p in model.predict(&frame).unwrap() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert_eq!(model.feature_importance(), vec![0.0]);
    }

    #[test]
    fn single_class_is_training_error() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let frame = FeatureFrame::from_matrix(&["x"], &rows, &[0, 0, 0, 0], None).unwrap();
        assert!(matches!(
            train(&frame, &cfg(5, 0.1), Growth::Leafwise, 0),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn infinite_value_is_data_error() {
        let rows = vec![vec![1.0], vec![f64::INFINITY]];
        let frame = FeatureFrame::from_matrix(&["x"], &rows, &[0, 1], None).unwrap();
        assert!(matches!(
            train(&frame, &cfg(1, 0.1), Growth::Leafwise, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn hand_routed_single_split() {
        let model = BoostedModel {
            format_version: MODEL_FORMAT_VERSION,
            growth: Growth::Levelwise,
            seed: 0,
            base_score: -0.5,
            config: GbdtConfig::default(),
            feature_names: vec!["a".into(), "b".into()],
            trees: vec![Tree {
                nodes: vec![
                    TreeNode::Split {
                        feature: 1,
                        threshold: 2.5,
                        missing_left: false,
                        left: 1,
                        right: 2,
                    },
                    TreeNode::Leaf { value: -0.25 },
                    TreeNode::Leaf { value: 0.75 },
                ],
            }],
            gain_importance: vec![0.0, 1.0],
            train_loss: vec![],
        };
        let expect_left = 1.0 / (1.0 + (0.75f64).exp());
        let expect_right = 1.0 / (1.0 + (-0.25f64).exp());
        assert!((model.predict_row(&[9.0, 2.5]).unwrap() - expect_left).abs() < 1e-12);
        assert!((model.predict_row(&[9.0, 3.0]).unwrap() - expect_right).abs() < 1e-12);
        assert!((model.predict_row(&[9.0, f64::NAN]).unwrap() - expect_right).abs() < 1e-12);
        assert!(matches!(model.predict_row(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn missing_values_learn_a_direction() {
        // missing rows are all positive; they should be routed with the positives
        let mut rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let mut labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        for _ in 0..5 {
            rows.push(vec![f64::NAN]);
            labels.push(1);
        }
        let frame = FeatureFrame::from_matrix(&["x"], &rows, &labels, None).unwrap();
        let model = train(&frame, &cfg(20, 0.3), Growth::Leafwise, 0).unwrap();
        assert!(model.predict_row(&[f64::NAN]).unwrap() > 0.5);
        assert!(model.predict_row(&[2.0]).unwrap() < 0.5);
    }

    #[test]
    fn model_json_round_trip_and_version_check() {
        let model = train(&toy_separable(), &cfg(3, 0.3), Growth::Oblivious, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        assert_eq!(BoostedModel::load(&path).unwrap(), model);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("\"format_version\":1", "\"format_version\":2", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(BoostedModel::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = GbdtConfig {
            n_bins: 1,
            ..GbdtConfig::default()
        };
        assert!(c.validate().is_err());
        c.n_bins = 256;
        assert!(c.validate().is_ok());
        c.row_subsample = 0.0;
        assert!(c.validate().is_err());
    }
}
