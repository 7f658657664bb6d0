//! Run configuration: JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use lesion_triage::ensemble::EnsembleConfig;
use lesion_triage::hashing::json_hash;
use lesion_triage::metrics::DEFAULT_MIN_TPR;
use lesion_triage::{Error, GbdtConfig, Growth, Result};
use serde::{Deserialize, Serialize};

/// Every knob of a run. Unknown keys are rejected.
///
/// Defaults: no input paths, output to `out`, 5 folds, seeds 0, 1 and 2,
/// all three growth strategies, noise sigma 0.1, min TPR 0.8, one positive
/// per negative after rebalancing, workers 0 (every core), and the GBDT
/// defaults of 200 trees at learning rate 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub metadata: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub growths: Vec<Growth>,
    pub noise_sigma: f64,
    pub min_tpr: f64,
    pub rebalance_ratio: f64,
    pub workers: usize,
    pub gbdt: GbdtConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ensemble = EnsembleConfig::default();
        Self {
            metadata: None,
            predictions: None,
            schema: None,
            catalog: None,
            output_dir: PathBuf::from("out"),
            folds: 5,
            seeds: vec![0, 1, 2],
            growths: ensemble.growths,
            noise_sigma: ensemble.noise_sigma,
            min_tpr: DEFAULT_MIN_TPR,
            rebalance_ratio: ensemble.rebalance_ratio,
            workers: 0,
            gbdt: ensemble.gbdt,
        }
    }
}

#[derive(Serialize)]
struct Settings<'a> {
    folds: usize,
    seeds: &'a [u64],
    ensemble: &'a EnsembleConfig,
    min_tpr: f64,
}

impl RunConfig {
    /// Read a JSON config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.metadata,
            &mut config.predictions,
            &mut config.schema,
            &mut config.catalog,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Parameter(format!("folds {} < 2", self.folds)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("at least one seed is required".into()));
        }
        if !(0.0..1.0).contains(&self.min_tpr) {
            return Err(Error::Parameter(format!("min_tpr {} outside [0, 1)", self.min_tpr)));
        }
        self.ensemble().validate()
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            gbdt: self.gbdt.clone(),
            growths: self.growths.clone(),
            rebalance_ratio: self.rebalance_ratio,
            noise_sigma: self.noise_sigma,
            workers: self.workers,
            ..EnsembleConfig::default()
        }
    }

    /// Hash of the settings that affect results. Paths and the worker
    /// count are excluded; input contents are hashed separately.
    pub fn hash(&self) -> String {
        let mut ensemble = self.ensemble();
        ensemble.workers = 0;
        json_hash(&Settings {
            folds: self.folds,
            seeds: &self.seeds,
            ensemble: &ensemble,
            min_tpr: self.min_tpr,
        })
        .expect("settings serialize")
    }

    pub fn require_metadata(&self) -> Result<&Path> {
        self.metadata
            .as_deref()
            .ok_or_else(|| Error::Input("no metadata CSV given (--metadata or \"metadata\" in the config)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"folds": 5, "fold": 3}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn workers_and_paths_do_not_change_the_hash() {
        let a = RunConfig::default();
        let b = RunConfig {
            workers: 4,
            metadata: Some("x.csv".into()),
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            seeds: vec![0],
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"metadata": "meta.csv", "output_dir": "runs/a"}"#).unwrap();
        let c = RunConfig::from_json_file(&path).unwrap();
        assert_eq!(c.metadata.unwrap(), dir.path().join("meta.csv"));
        assert_eq!(c.output_dir, dir.path().join("runs/a"));
    }
}
