//! Deterministic synthetic lesion cohorts for fixtures, tests and benchmarks.
//!
//! Labels are drawn first and the features are generated conditionally.
//! Three independent sources of signal can be dialed in:
//!
//! * `raw`: a mild shift in a few raw colour/border columns;
//! * `engineered`: lesion-versus-surround hue contrast and lesion size
//!   relative to the patient's other lesions, which only become visible
//!   through engineered and patient-normalized features;
//! * `predictions`: noisy image-model probabilities.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{
    Dataset, DatasetSchema, LesionRecord, Provenance, LESION_ID_COLUMN, PATIENT_ID_COLUMN, PROVENANCE_COLUMN,
    TARGET_COLUMN,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub min_lesions: usize,
    pub max_lesions: usize,
    pub positive_rate: f64,
    pub raw_signal: f64,
    pub engineered_signal: f64,
    pub prediction_signal: f64,
    /// Fill prediction columns; when false they are left missing.
    pub with_predictions: bool,
    /// Probability that any numeric cell is blank.
    pub missing_rate: f64,
    /// Extra malignant lesions on synthetic-only patients.
    pub n_synthetic: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 60,
            min_lesions: 2,
            max_lesions: 6,
            positive_rate: 0.1,
            raw_signal: 0.5,
            engineered_signal: 1.0,
            prediction_signal: 1.0,
            with_predictions: true,
            missing_rate: 0.0,
            n_synthetic: 0,
            seed: 0,
        }
    }
}

struct Patient {
    id: String,
    age: f64,
    sex: usize,
    size_scale: f64,
    hue_base: f64,
    attribution: usize,
    tile: usize,
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [String]) -> Option<&'a String> {
    if options.is_empty() {
        None
    } else {
        Some(&options[rng.random_range(0..options.len())])
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Generator<'a> {
    config: &'a SynthConfig,
    schema: &'a DatasetSchema,
    rng: ChaCha8Rng,
    std: Normal<f64>,
}

impl Generator<'_> {
    fn normal(&mut self) -> f64 {
        self.std.sample(&mut self.rng)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn patient(&mut self, id: String) -> Patient {
        Patient {
            id,
            age: 5.0 * self.rng.random_range(6..18) as f64,
            sex: self.rng.random_range(0..2),
            size_scale: (1.3 + 0.45 * self.normal()).exp(),
            hue_base: self.uniform(45.0, 65.0),
            attribution: self.rng.random_range(0..3),
            tile: self.rng.random_range(0..2),
        }
    }

    fn numerics(&mut self, p: &Patient, y: f64) -> BTreeMap<String, f64> {
        let c = self.config;
        let (raw, eng) = (c.raw_signal * y, c.engineered_signal * y);
        let mut v = BTreeMap::new();

        let size = p.size_scale * (0.18 * self.normal() + 0.55 * eng).exp();
        let eccentricity = self.uniform(0.3, 0.95);
        let minor = size * (1.0 - eccentricity * eccentricity).sqrt().max(0.2);
        let area = std::f64::consts::FRAC_PI_4 * size * minor;
        let perimeter = std::f64::consts::PI * (size + minor) / 2.0 * self.uniform(1.0, 1.3);

        let hext = p.hue_base + 3.0 * self.normal();
        let h = hext - (2.0 * self.normal()).abs() - 6.0 * eng;
        let lext = self.uniform(55.0, 80.0);
        let l = lext - self.uniform(5.0, 20.0);
        let aext = self.uniform(12.0, 25.0);
        let a = aext + self.uniform(0.0, 10.0);
        let bext = self.uniform(22.0, 35.0);
        let b = bext + self.uniform(-3.0, 6.0);
        let chroma = |a: f64, b: f64| (a * a + b * b).sqrt();

        let mut put = |k: &str, x: f64| {
            v.insert(k.to_string(), x);
        };
        put("age_approx", p.age);
        put("clin_size_long_diam_mm", size);
        put("tbp_lv_A", a);
        put("tbp_lv_Aext", aext);
        put("tbp_lv_B", b);
        put("tbp_lv_Bext", bext);
        put("tbp_lv_C", chroma(a, b));
        put("tbp_lv_Cext", chroma(aext, bext));
        put("tbp_lv_H", h);
        put("tbp_lv_Hext", hext);
        put("tbp_lv_L", l);
        put("tbp_lv_Lext", lext);
        put("tbp_lv_areaMM2", area);
        put("tbp_lv_area_perim_ratio", perimeter * perimeter / area);
        put("tbp_lv_deltaA", a - aext);
        put("tbp_lv_deltaB", b - bext);
        put("tbp_lv_deltaL", l - lext);
        put("tbp_lv_deltaLB", ((l - lext).powi(2) + (b - bext).powi(2)).sqrt());
        put("tbp_lv_eccentricity", eccentricity);
        put("tbp_lv_minorAxisMM", minor);
        put("tbp_lv_perimeterMM", perimeter);
        put("tbp_lv_symm_2axis_angle", self.uniform(0.0, 180.0));
        put("tbp_lv_x", self.uniform(-300.0, 300.0));
        put("tbp_lv_y", self.uniform(0.0, 1600.0));
        put("tbp_lv_z", self.uniform(-150.0, 150.0));
        let mut shifted = |k: &str, lo: f64, hi: f64, shift: f64, g: &mut Self| {
            let x = g.uniform(lo, hi) + shift * (hi - lo) * 0.25;
            v.insert(k.to_string(), x);
        };
        shifted("tbp_lv_color_std_mean", 0.2, 3.0, raw, self);
        shifted("tbp_lv_deltaLBnorm", 5.0, 15.0, 0.0, self);
        shifted("tbp_lv_nevi_confidence", 0.0, 100.0, -raw, self);
        shifted("tbp_lv_norm_border", 0.5, 8.0, raw, self);
        shifted("tbp_lv_norm_color", 0.5, 8.0, raw, self);
        shifted("tbp_lv_radial_color_std_max", 0.5, 5.0, 0.0, self);
        shifted("tbp_lv_stdL", 0.5, 4.0, 0.0, self);
        shifted("tbp_lv_stdLExt", 0.5, 4.0, 0.0, self);
        shifted("tbp_lv_symm_2axis", 0.1, 0.7, raw, self);

        let mut out = BTreeMap::new();
        for col in &self.schema.numeric_columns {
            let x = match v.get(col) {
                Some(&x) => x,
                None => self.uniform(1.0, 10.0),
            };
            if c.missing_rate > 0.0 && self.rng.random_bool(c.missing_rate) {
                continue;
            }
            out.insert(col.clone(), x);
        }
        out
    }

    fn categoricals(&mut self, p: &Patient) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for col in &self.schema.categorical_columns {
            let vocab = self
                .schema
                .categorical_vocabularies
                .get(col)
                .cloned()
                .unwrap_or_default();
            let value = match col.as_str() {
                "sex" => vocab.get(p.sex).cloned(),
                "attribution" => vocab.get(p.attribution).cloned(),
                "tbp_tile_type" => vocab.get(p.tile).cloned(),
                _ => pick(&mut self.rng, &vocab).cloned(),
            };
            let value = value.unwrap_or_else(|| format!("level{}", self.rng.random_range(0..3)));
            out.insert(col.clone(), value);
        }
        out
    }

    fn predictions(&mut self, y: f64) -> BTreeMap<String, f64> {
        let s = self.config.prediction_signal * y;
        let mut out = BTreeMap::new();
        if !self.config.with_predictions {
            return out;
        }
        let melanoma = sigmoid(-2.5 + 3.0 * s + 1.2 * self.normal());
        let nevus = (1.0 - melanoma) * self.uniform(0.5, 1.0);
        for col in &self.schema.prediction_columns {
            let x = match col.as_str() {
                "pred3_melanoma" => melanoma,
                "pred3_nevus" => nevus,
                "pred3_bkl" => (1.0 - melanoma - nevus).max(0.0),
                _ => sigmoid(-2.5 + 3.0 * s + 1.2 * self.normal()),
            };
            out.insert(col.clone(), x.clamp(0.0, 1.0));
        }
        out
    }

    fn lesion(&mut self, p: &Patient, k: usize, target: u8, provenance: Provenance) -> LesionRecord {
        let y = f64::from(target);
        LesionRecord {
            lesion_id: format!("{}_{k:02}", p.id.replace("IP_", "ISIC_")),
            patient_id: p.id.clone(),
            target,
            diagnosis: Some(if target == 1 { "melanoma" } else { "nevus" }.to_string()),
            numerics: self.numerics(p, y),
            categoricals: self.categoricals(p),
            predictions: self.predictions(y),
            provenance,
        }
    }
}

/// Generate a cohort following `schema`. Every patient gets between
/// `min_lesions` and `max_lesions` lesions; at least one lesion overall is
/// malignant and one benign.
pub fn generate_cohort(config: &SynthConfig, schema: &DatasetSchema) -> Result<Dataset> {
    if config.n_patients == 0 || config.min_lesions == 0 || config.max_lesions < config.min_lesions {
        return Err(Error::Parameter(
            "need n_patients >= 1 and 1 <= min_lesions <= max_lesions".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.positive_rate) || !(0.0..1.0).contains(&config.missing_rate) {
        return Err(Error::Parameter(
            "positive_rate and missing_rate must lie in [0, 1)".into(),
        ));
    }
    let mut g = Generator {
        config,
        schema,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        std: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let mut records = Vec::new();
    for i in 0..config.n_patients {
        let p = g.patient(format!("IP_{i:05}"));
        let n = g.rng.random_range(config.min_lesions..=config.max_lesions);
        for k in 0..n {
            let target = u8::from(g.rng.random_bool(config.positive_rate));
            records.push(g.lesion(&p, k, target, Provenance::Real));
        }
    }
    let n_pos = records.iter().filter(|r| r.target == 1).count();
    if n_pos == 0 || n_pos == records.len() {
        // force both classes on degenerate draws
        let flip = if n_pos == 0 { 1 } else { 0 };
        let first = &records[0];
        let p = Patient {
            id: first.patient_id.clone(),
            ..g.patient(String::new())
        };
        let replacement = g.lesion(&p, 0, flip, Provenance::Real);
        records[0] = replacement;
    }
    for k in 0..config.n_synthetic {
        let p = g.patient(format!("SP_{k:05}"));
        records.push(g.lesion(&p, 0, 1, Provenance::Synthetic));
    }
    Dataset::new(schema.clone(), records)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write a metadata CSV readable by `load_dataset`. Prediction columns are
/// included when `with_predictions` is set.
pub fn write_metadata_csv(dataset: &Dataset, path: impl AsRef<Path>, with_predictions: bool) -> Result<()> {
    let path = path.as_ref();
    let schema = dataset.schema();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?));
    let mut header: Vec<&str> = vec![LESION_ID_COLUMN, PATIENT_ID_COLUMN, TARGET_COLUMN];
    header.extend(schema.numeric_columns.iter().map(String::as_str));
    header.extend(schema.categorical_columns.iter().map(String::as_str));
    if with_predictions {
        header.extend(schema.prediction_columns.iter().map(String::as_str));
    }
    if let Some(d) = &schema.diagnosis_column {
        header.push(d);
    }
    header.push(PROVENANCE_COLUMN);
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut row = vec![r.lesion_id.clone(), r.patient_id.clone(), r.target.to_string()];
        row.extend(schema.numeric_columns.iter().map(|c| cell(r.numeric(c))));
        row.extend(
            schema
                .categorical_columns
                .iter()
                .map(|c| r.categoricals.get(c).cloned().unwrap_or_default()),
        );
        if with_predictions {
            row.extend(
                schema
                    .prediction_columns
                    .iter()
                    .map(|c| cell(r.predictions.get(c).copied())),
            );
        }
        if schema.diagnosis_column.is_some() {
            row.push(r.diagnosis.clone().unwrap_or_default());
        }
        row.push(
            match r.provenance {
                Provenance::Real => "real",
                Provenance::Synthetic => "synthetic",
            }
            .to_string(),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the prediction columns alone, keyed by `isic_id`.
pub fn write_predictions_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let schema = dataset.schema();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{LESION_ID_COLUMN},{}", schema.prediction_columns.join(",")).map_err(io)?;
    for r in dataset.records() {
        let cells: Vec<String> = schema
            .prediction_columns
            .iter()
            .map(|c| cell(r.predictions.get(c).copied()))
            .collect();
        writeln!(w, "{},{}", r.lesion_id, cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::load_dataset;

    #[test]
    fn cohort_is_deterministic_and_round_trips_through_csv() {
        let schema = DatasetSchema::default();
        let config = SynthConfig {
            n_patients: 10,
            missing_rate: 0.05,
            n_synthetic: 2,
            ..SynthConfig::default()
        };
        let a = generate_cohort(&config, &schema).unwrap();
        let b = generate_cohort(&config, &schema).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(
            a.records()
                .iter()
                .filter(|r| r.provenance == Provenance::Synthetic)
                .count(),
            2
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        write_metadata_csv(&a, &path, true).unwrap();
        let (back, report) = load_dataset(&path, &schema).unwrap();
        assert!(report.rejected.is_empty());
        assert_eq!(back.records(), a.records());
    }

    #[test]
    fn both_classes_present() {
        let schema = DatasetSchema::default();
        for seed in 0..5 {
            let config = SynthConfig {
                n_patients: 1,
                min_lesions: 2,
                max_lesions: 2,
                positive_rate: 0.0,
                seed,
                ..SynthConfig::default()
            };
            let d = generate_cohort(&config, &schema).unwrap();
            let pos = d.records().iter().filter(|r| r.target == 1).count();
            assert_eq!(pos, 1);
        }
    }
}
