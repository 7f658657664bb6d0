//! `triage` command-line front end.

pub mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lesion_triage::synth::SynthConfig;
use lesion_triage::{Error, Growth, Result};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Skin-lesion triage: features, GBDT ensembles and pAUC evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the `--config` file (or the defaults).
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Run configuration JSON.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Lesion metadata CSV.
    #[arg(long, global = true, value_name = "FILE")]
    pub metadata: Option<PathBuf>,
    /// Image-model predictions CSV keyed by isic_id.
    #[arg(long, global = true, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Dataset schema JSON (defaults to the built-in schema).
    #[arg(long, global = true, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Feature catalog JSON (defaults to the built-in catalog).
    #[arg(long, global = true, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Comma-separated fold seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated growth strategies (leafwise, levelwise, oblivious).
    #[arg(long, global = true, value_delimiter = ',')]
    pub growths: Option<Vec<Growth>>,
    #[arg(long, global = true)]
    pub noise_sigma: Option<f64>,
    #[arg(long, global = true)]
    pub min_tpr: Option<f64>,
    #[arg(long, global = true)]
    pub rebalance_ratio: Option<f64>,
    /// Boosting rounds per member.
    #[arg(long, global = true)]
    pub n_trees: Option<usize>,
    /// Parallel member trainings (0 = every core).
    #[arg(long, global = true, env = "TRIAGE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the metadata (and predictions) into dataset.json.
    Ingest,
    /// Build the feature frame.
    Featurize,
    /// Build the patient-grouped fold plan.
    Split,
    /// Train the ensemble and write out-of-fold predictions.
    Train,
    /// Score the metadata with a trained run.
    Predict {
        /// Directory of a finished `train` run (defaults to --out).
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
    },
    /// pAUC, AUC and confidence histograms for a labels/scores pair.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
    },
    /// Evaluation report over a run's out-of-fold predictions.
    Report,
    /// Rank features by aggregate ensemble importance.
    Importance {
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Run a feature-group ablation sweep.
    Ablate {
        /// JSON list of ablation configurations (defaults to the standard sweep).
        #[arg(long, value_name = "FILE")]
        sweep: Option<PathBuf>,
        /// Run the configurations concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Write a synthetic cohort.
    Synth {
        /// Generator settings JSON.
        #[arg(long, value_name = "FILE")]
        synth_config: Option<PathBuf>,
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long)]
        synth_seed: Option<u64>,
    },
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                })*
            };
        }
        over!(metadata, predictions, schema, catalog);
        over!(
            output_dir,
            folds,
            seeds,
            growths,
            noise_sigma,
            min_tpr,
            rebalance_ratio,
            workers
        );
        if let Some(n) = self.n_trees {
            c.gbdt.n_trees = n;
        }
        Ok(c)
    }
}

fn synth_config(path: Option<&PathBuf>, patients: Option<usize>, seed: Option<u64>) -> Result<SynthConfig> {
    let mut c = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = patients {
        c.n_patients = n;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let config = cli.run.resolve()?;
    match &cli.command {
        Command::Ingest => commands::cmd_ingest(&config, out),
        Command::Featurize => commands::cmd_featurize(&config, out),
        Command::Split => commands::cmd_split(&config, out),
        Command::Train => commands::cmd_train(&config, out),
        Command::Predict { model } => {
            let model = model.clone().unwrap_or_else(|| config.output_dir.clone());
            commands::cmd_predict(&config, &model, out)
        }
        Command::Evaluate { labels, scores } => commands::cmd_evaluate(&config, labels, scores, out),
        Command::Report => commands::cmd_report(&config, out),
        Command::Importance { top } => commands::cmd_importance(&config, *top, out),
        Command::Ablate { sweep, parallel } => commands::cmd_ablate(&config, sweep.as_deref(), *parallel, out),
        Command::Synth {
            synth_config: path,
            patients,
            synth_seed,
        } => {
            let synth = synth_config(path.as_ref(), *patients, *synth_seed)?;
            commands::cmd_synth(&config, &synth, out)
        }
    }
}

/// The single line printed for a failed command.
pub fn error_line(e: &Error) -> String {
    let text = e.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {text}", e.kind())
}
