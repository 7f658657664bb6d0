//! Feature engineering: raw numerics, one-hot categoricals, catalog-driven
//! engineered descriptors, patient-normalized deviations, patient
//! aggregates, and external image-model predictions.

mod expr;
mod frame;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use expr::Expr;
pub use frame::{ColumnBlock, FeatureColumn, FeatureFrame, FeatureGroup};

use crate::hashing::json_hash;
use crate::ingest::{Dataset, DatasetSchema, Provenance, MISSING_CATEGORY};
use crate::{Error, Result};

pub const PATIENT_NORM_EPSILON: f64 = 1e-5;
pub const PATIENT_NORM_SUFFIX: &str = "_patient_norm";
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

const AREA_COLUMN: &str = "tbp_lv_areaMM2";
const SITE_COLUMN: &str = "anatom_site_general";
const SIZE_COLUMN: &str = "clin_size_long_diam_mm";
/// Raw column left out of the default patient-normalized set.
const PATIENT_NORM_EXCLUDED: &str = "age_approx";

const DEFAULT_CATALOG_JSON: &str = include_str!("../../assets/default_catalog.json");
const DEFAULT_PATIENT_NORM_JSON: &str = include_str!("../../assets/default_patient_norm.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub name: String,
    pub expression: String,
}

/// Engineered-feature definitions plus the list of columns to normalize
/// per patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub entries: Vec<CatalogEntry>,
    /// Source columns (raw or engineered) to normalize per patient. `None`
    /// selects every raw numeric column except `age_approx` plus every
    /// engineered column.
    pub patient_norm_columns: Option<Vec<String>>,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        Self {
            entries: serde_json::from_str(DEFAULT_CATALOG_JSON).expect("shipped catalog parses"),
            patient_norm_columns: Some(serde_json::from_str(DEFAULT_PATIENT_NORM_JSON).expect("shipped list parses")),
        }
    }
}

impl FeatureCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Self {
        Self {
            entries,
            patient_norm_columns: None,
        }
    }

    /// Load a JSON list of `{name, expression}` entries.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<CatalogEntry> = serde_json::from_reader(BufReader::new(file))?;
        Ok(Self::new(entries))
    }

    pub fn with_patient_norm(mut self, columns: Vec<String>) -> Self {
        self.patient_norm_columns = Some(columns);
        self
    }

    pub fn compile(&self, schema: &DatasetSchema) -> Result<CompiledCatalog> {
        let mut slots: Vec<String> = schema.numeric_columns.clone();
        let mut exprs = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            if slots.contains(&entry.name) {
                return Err(Error::Catalog(format!("duplicate feature name {}", entry.name)));
            }
            let parsed = Expr::parse(&entry.expression)?;
            let resolved = parsed
                .resolve(&|name| slots.iter().position(|s| s == name))
                .map_err(|e| Error::Catalog(format!("{}: {e}", entry.name)))?;
            exprs.push(resolved);
            slots.push(entry.name.clone());
        }
        let norm = match &self.patient_norm_columns {
            Some(cols) => cols.clone(),
            None => schema
                .numeric_columns
                .iter()
                .filter(|c| c.as_str() != PATIENT_NORM_EXCLUDED)
                .chain(self.entries.iter().map(|e| &e.name))
                .cloned()
                .collect(),
        };
        let norm_slots = norm
            .iter()
            .map(|c| {
                slots
                    .iter()
                    .position(|s| s == c)
                    .ok_or_else(|| Error::Catalog(format!("patient-norm column {c} is neither raw nor engineered")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledCatalog {
            n_raw: schema.numeric_columns.len(),
            slot_names: slots,
            exprs,
            norm_slots,
        })
    }

    pub fn hash(&self) -> String {
        json_hash(self).expect("catalog serializes")
    }
}

#[derive(Debug, Clone)]
pub struct CompiledCatalog {
    n_raw: usize,
    slot_names: Vec<String>,
    exprs: Vec<Expr>,
    norm_slots: Vec<usize>,
}

impl CompiledCatalog {
    fn expression_text<'a>(&self, catalog: &'a FeatureCatalog, k: usize) -> &'a str {
        &catalog.entries[k].expression
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub column: String,
    pub categories: Vec<String>,
}

/// Statistics fitted on training rows and reused on held-out rows. None of
/// them depend on labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub vocabularies: Vec<Vocabulary>,
    /// Imputation medians for raw numeric and engineered columns.
    pub medians: BTreeMap<String, f64>,
}

impl FitStats {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Category vocabularies: the schema's fixed list when present, otherwise
/// the sorted distinct categories observed in `dataset`.
pub fn fit_vocabularies(dataset: &Dataset) -> Vec<Vocabulary> {
    let schema = dataset.schema();
    schema
        .categorical_columns
        .iter()
        .map(|col| {
            let categories = match schema.categorical_vocabularies.get(col) {
                Some(v) => v.clone(),
                None => dataset
                    .records()
                    .iter()
                    .filter_map(|r| r.categoricals.get(col))
                    .filter(|c| c.as_str() != MISSING_CATEGORY)
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            Vocabulary {
                column: col.clone(),
                categories,
            }
        })
        .collect()
}

/// One column per categorical variable holding the category's index in
/// its vocabulary. Missing and unseen categories are NaN.
pub fn ordinal_codes(dataset: &Dataset, vocabularies: &[Vocabulary]) -> ColumnBlock {
    let mut block = ColumnBlock::default();
    for vocab in vocabularies {
        let values = dataset
            .records()
            .iter()
            .map(|r| {
                r.categoricals
                    .get(&vocab.column)
                    .and_then(|v| vocab.categories.iter().position(|c| c == v))
                    .map_or(f64::NAN, |i| i as f64)
            })
            .collect();
        block.push(
            FeatureColumn {
                name: vocab.column.clone(),
                group: FeatureGroup::RawCategorical,
                origin: format!("vocabulary index of {}", vocab.column),
            },
            values,
        );
    }
    block
}

/// One binary column per vocabulary category plus a `missing` column per
/// variable. Unseen categories produce an all-zero block.
pub fn one_hot(dataset: &Dataset, vocabularies: &[Vocabulary]) -> ColumnBlock {
    let mut block = ColumnBlock::default();
    for vocab in vocabularies {
        let mut names: Vec<&str> = vocab.categories.iter().map(String::as_str).collect();
        names.push(MISSING_CATEGORY);
        for cat in names {
            let values = dataset
                .records()
                .iter()
                .map(|r| {
                    let v = r
                        .categoricals
                        .get(&vocab.column)
                        .map_or(MISSING_CATEGORY, String::as_str);
                    if v == cat {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            block.push(
                FeatureColumn {
                    name: format!("{}_{}", vocab.column, cat),
                    group: FeatureGroup::Onehot,
                    origin: format!("{} == {cat:?}", vocab.column),
                },
                values,
            );
        }
    }
    block
}

/// Per-patient z-score `(x - mean) / (std + eps)` with population std.
/// Missing values stay missing and are excluded from the moments.
pub fn patient_normalize(values: &[f64], patients: &[&str]) -> Vec<f64> {
    let mut moments: HashMap<&str, (f64, f64, usize)> = HashMap::new();
    for (&v, &p) in values.iter().zip(patients) {
        if v.is_nan() {
            continue;
        }
        let e = moments.entry(p).or_insert((0.0, 0.0, 0));
        e.0 += v;
        e.2 += 1;
    }
    let means: HashMap<&str, f64> = moments.iter().map(|(&p, &(sum, _, n))| (p, sum / n as f64)).collect();
    for (&v, &p) in values.iter().zip(patients) {
        if !v.is_nan() {
            let d = v - means[p];
            moments.get_mut(p).unwrap().1 += d * d;
        }
    }
    values
        .iter()
        .zip(patients)
        .map(|(&v, &p)| {
            if v.is_nan() {
                return f64::NAN;
            }
            let (_, ss, n) = moments[p];
            let std = (ss / n as f64).sqrt();
            (v - means[p]) / (std + PATIENT_NORM_EPSILON)
        })
        .collect()
}

fn group_mean(values: &[f64], keys: &[String]) -> Vec<f64> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for (v, k) in values.iter().zip(keys) {
        if !v.is_nan() {
            let e = acc.entry(k.as_str()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    keys.iter()
        .map(|k| acc.get(k.as_str()).map_or(f64::NAN, |&(s, n)| s / n as f64))
        .collect()
}

/// Lesion count per patient, mean lesion area per (patient, site), and
/// largest lesion diameter per patient. Aggregates whose source column is
/// absent from the schema are skipped.
pub fn patient_aggregates(dataset: &Dataset) -> ColumnBlock {
    let records = dataset.records();
    let schema = dataset.schema();
    let mut block = ColumnBlock::default();

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.patient_id.as_str()).or_default() += 1;
    }
    block.push(
        FeatureColumn {
            name: "count_per_patient".into(),
            group: FeatureGroup::PatientAgg,
            origin: "number of lesions of the patient".into(),
        },
        records.iter().map(|r| counts[r.patient_id.as_str()] as f64).collect(),
    );

    let has = |c: &str| schema.numeric_columns.iter().any(|n| n == c);
    if has(AREA_COLUMN) {
        let site_known = schema.categorical_columns.iter().any(|c| c == SITE_COLUMN);
        let keys: Vec<String> = records
            .iter()
            .map(|r| {
                let site = if site_known { r.category(SITE_COLUMN) } else { "" };
                format!("{}\u{1f}{site}", r.patient_id)
            })
            .collect();
        let areas: Vec<f64> = records
            .iter()
            .map(|r| r.numeric(AREA_COLUMN).unwrap_or(f64::NAN))
            .collect();
        block.push(
            FeatureColumn {
                name: format!("{AREA_COLUMN}_bp"),
                group: FeatureGroup::PatientAgg,
                origin: format!("mean {AREA_COLUMN} over the patient's lesions at the same site"),
            },
            group_mean(&areas, &keys),
        );
    }
    if has(SIZE_COLUMN) {
        let mut max: HashMap<&str, f64> = HashMap::new();
        for r in records {
            if let Some(v) = r.numeric(SIZE_COLUMN) {
                let e = max.entry(r.patient_id.as_str()).or_insert(f64::NEG_INFINITY);
                *e = e.max(v);
            }
        }
        block.push(
            FeatureColumn {
                name: "max_size_per_patient".into(),
                group: FeatureGroup::PatientAgg,
                origin: format!("max {SIZE_COLUMN} over the patient's lesions"),
            },
            records
                .iter()
                .map(|r| max.get(r.patient_id.as_str()).copied().unwrap_or(f64::NAN))
                .collect(),
        );
    }
    block
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Build the full feature frame. Returns the statistics used, which are
/// `fit_stats` itself when given and freshly fitted on `dataset` otherwise.
pub fn featurize(
    dataset: &Dataset,
    catalog: &FeatureCatalog,
    fit_stats: Option<&FitStats>,
) -> Result<(FeatureFrame, FitStats)> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot featurize an empty dataset".into()));
    }
    let schema = dataset.schema();
    let compiled = catalog.compile(schema)?;
    let records = dataset.records();
    let n = records.len();
    let n_slots = compiled.slot_names.len();

    // slots[i * n_slots + k]: raw numerics then engineered values
    let mut slots = vec![f64::NAN; n * n_slots];
    for (i, r) in records.iter().enumerate() {
        for (k, col) in schema.numeric_columns.iter().enumerate() {
            slots[i * n_slots + k] = r.numeric(col).unwrap_or(f64::NAN);
        }
    }

    let mut medians = match fit_stats {
        Some(s) => s.medians.clone(),
        None => BTreeMap::new(),
    };
    let impute_slot = |slots: &mut [f64], k: usize, medians: &mut BTreeMap<String, f64>| {
        let name = &compiled.slot_names[k];
        let m = match medians.get(name) {
            Some(&m) => m,
            None if fit_stats.is_none() => {
                let m = median((0..n).map(|i| slots[i * n_slots + k]));
                medians.insert(name.clone(), m);
                m
            }
            None => {
                return Err(Error::Input(format!("fit statistics carry no median for {name}")));
            }
        };
        for i in 0..n {
            let v = &mut slots[i * n_slots + k];
            if v.is_nan() {
                *v = m;
            }
        }
        Ok(())
    };
    for k in 0..compiled.n_raw {
        impute_slot(&mut slots, k, &mut medians)?;
    }
    for (e, expr) in compiled.exprs.iter().enumerate() {
        let k = compiled.n_raw + e;
        for i in 0..n {
            let row = &slots[i * n_slots..i * n_slots + k];
            let v = expr.eval(row);
            slots[i * n_slots + k] = v;
        }
        impute_slot(&mut slots, k, &mut medians)?;
    }
    let column_of = |k: usize| -> Vec<f64> { (0..n).map(|i| slots[i * n_slots + k]).collect() };

    let mut raw = ColumnBlock::default();
    for (k, col) in schema.numeric_columns.iter().enumerate() {
        raw.push(
            FeatureColumn {
                name: col.clone(),
                group: FeatureGroup::RawNumeric,
                origin: "raw metadata (median-imputed)".into(),
            },
            column_of(k),
        );
    }

    let vocabularies = match fit_stats {
        Some(s) => s.vocabularies.clone(),
        None => fit_vocabularies(dataset),
    };
    let codes = ordinal_codes(dataset, &vocabularies);
    let onehot = one_hot(dataset, &vocabularies);

    let mut engineered = ColumnBlock::default();
    for (e, entry) in catalog.entries.iter().enumerate() {
        engineered.push(
            FeatureColumn {
                name: entry.name.clone(),
                group: FeatureGroup::Engineered,
                origin: compiled.expression_text(catalog, e).to_string(),
            },
            column_of(compiled.n_raw + e),
        );
    }

    let patients: Vec<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
    let mut norm = ColumnBlock::default();
    for &k in &compiled.norm_slots {
        let source = &compiled.slot_names[k];
        norm.push(
            FeatureColumn {
                name: format!("{source}{PATIENT_NORM_SUFFIX}"),
                group: FeatureGroup::PatientNorm,
                origin: format!("per-patient z-score of {source}"),
            },
            patient_normalize(&column_of(k), &patients),
        );
    }

    let aggregates = patient_aggregates(dataset);

    let mut preds = ColumnBlock::default();
    for col in &schema.prediction_columns {
        preds.push(
            FeatureColumn {
                name: col.clone(),
                group: FeatureGroup::ExternalPred,
                origin: "external image-model probability".into(),
            },
            records
                .iter()
                .map(|r| r.predictions.get(col).copied().unwrap_or(f64::NAN))
                .collect(),
        );
    }

    let frame = FeatureFrame::from_blocks(
        vec![raw, codes, onehot, engineered, norm, aggregates, preds],
        records.iter().map(|r| r.lesion_id.clone()).collect(),
        patients.iter().map(|p| p.to_string()).collect(),
        records.iter().map(|r| r.target).collect(),
        records.iter().map(|r| r.provenance == Provenance::Synthetic).collect(),
        feature_schema_hash(schema, catalog),
    )?;
    Ok((frame, FitStats { vocabularies, medians }))
}

/// Hash identifying the (dataset schema, catalog) pair a frame was built from.
pub fn feature_schema_hash(schema: &DatasetSchema, catalog: &FeatureCatalog) -> String {
    json_hash(&(schema.hash(), catalog.hash())).expect("hash inputs serialize")
}

/// Add independent `Normal(0, sigma^2)` noise to every external-prediction
/// value. Missing values stay missing; other columns are untouched.
pub fn inject_prediction_noise(frame: &FeatureFrame, sigma: f64, seed: u64) -> Result<FeatureFrame> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Parameter(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    let mut out = frame.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let targets: Vec<usize> = frame
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.group == FeatureGroup::ExternalPred)
        .map(|(j, _)| j)
        .collect();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cols = frame.n_cols();
    let data = out.data_mut();
    for i in 0..frame.n_rows() {
        for &j in &targets {
            let noise = normal.sample(&mut rng);
            let v = &mut data[i * n_cols + j];
            if !v.is_nan() {
                *v += noise;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LesionRecord;

    fn record(id: &str, patient: &str, numerics: &[(&str, f64)]) -> LesionRecord {
        LesionRecord {
            lesion_id: id.into(),
            patient_id: patient.into(),
            target: 0,
            diagnosis: None,
            numerics: numerics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            categoricals: BTreeMap::new(),
            predictions: BTreeMap::new(),
            provenance: Provenance::Real,
        }
    }

    fn small_schema() -> DatasetSchema {
        DatasetSchema {
            numeric_columns: vec![
                "tbp_lv_H".into(),
                "tbp_lv_Hext".into(),
                "tbp_lv_areaMM2".into(),
                "tbp_lv_perimeterMM".into(),
                "clin_size_long_diam_mm".into(),
            ],
            categorical_columns: vec!["sex".into(), "anatom_site_general".into()],
            prediction_columns: vec!["predictions_eva".into()],
            categorical_vocabularies: BTreeMap::new(),
            diagnosis_column: None,
        }
    }

    #[test]
    fn patient_normalize_examples() {
        let out = patient_normalize(&[2.0, 4.0, 6.0], &["p", "p", "p"]);
        let expect = 2.0 / (8.0f64 / 3.0).sqrt();
        assert!((out[0] + 1.2247).abs() < 1e-3 && (out[2] - 1.2247).abs() < 1e-3);
        assert!((out[2] - 2.0 / ((8.0f64 / 3.0).sqrt() + 1e-5)).abs() < 1e-12 && expect > 1.22);
        assert_eq!(out[1], 0.0);
        assert_eq!(patient_normalize(&[7.5], &["solo"]), vec![0.0]);
        assert_eq!(patient_normalize(&[3.0, 3.0, 3.0], &["q"; 3]), vec![0.0; 3]);
        let mixed = patient_normalize(&[1.0, f64::NAN, 3.0], &["r"; 3]);
        assert!(mixed[1].is_nan());
        assert!((mixed[0] + mixed[2]).abs() < 1e-12);
    }

    #[test]
    fn one_hot_learned_vocabulary_and_unseen() {
        let mut schema = small_schema();
        schema.categorical_columns = vec!["sex".into()];
        let mut rows = vec![record("a", "p", &[]), record("b", "p", &[]), record("c", "q", &[])];
        rows[0].categoricals.insert("sex".into(), "male".into());
        rows[1].categoricals.insert("sex".into(), "female".into());
        let ds = Dataset::new(schema.clone(), rows).unwrap();
        let vocab = fit_vocabularies(&ds);
        let block = one_hot(&ds, &vocab);
        assert_eq!(block.columns.len(), 3);
        for i in 0..3 {
            assert_eq!(block.values.iter().map(|c| c[i]).sum::<f64>(), 1.0);
        }
        let mut unseen = record("d", "q", &[]);
        unseen.categoricals.insert("sex".into(), "torso_v2".into());
        let ds2 = Dataset::new(schema, vec![unseen]).unwrap();
        let block2 = one_hot(&ds2, &vocab);
        assert!(block2.values.iter().all(|c| c[0] == 0.0));
    }

    #[test]
    fn patient_aggregate_examples() {
        let schema = small_schema();
        let mut rows: Vec<LesionRecord> = (0..5)
            .map(|i| record(&format!("l{i}"), "p5", &[("tbp_lv_areaMM2", 1.0 + i as f64)]))
            .collect();
        rows.push(record(
            "x",
            "p2",
            &[("tbp_lv_areaMM2", 1.0), ("clin_size_long_diam_mm", 4.0)],
        ));
        rows.push(record(
            "y",
            "p2",
            &[("tbp_lv_areaMM2", 3.0), ("clin_size_long_diam_mm", 6.0)],
        ));
        for r in &mut rows {
            r.categoricals.insert("anatom_site_general".into(), "head/neck".into());
        }
        rows[0]
            .categoricals
            .insert("anatom_site_general".into(), "posterior torso".into());
        let ds = Dataset::new(schema, rows).unwrap();
        let block = patient_aggregates(&ds);
        let counts = block.column("count_per_patient").unwrap();
        assert_eq!(&counts[..5], &[5.0; 5]);
        let bp = block.column("tbp_lv_areaMM2_bp").unwrap();
        assert_eq!(&bp[5..], &[2.0, 2.0]);
        assert_eq!(bp[0], 1.0);
        assert_eq!(bp[1], 3.5);
        let max = block.column("max_size_per_patient").unwrap();
        assert_eq!(&max[5..], &[6.0, 6.0]);
        assert!(max[0].is_nan());
    }

    #[test]
    fn hue_contrast_zero_and_catalog_errors() {
        let schema = small_schema();
        let catalog = FeatureCatalog::new(vec![CatalogEntry {
            name: "hue_contrast".into(),
            expression: "abs(tbp_lv_H - tbp_lv_Hext)".into(),
        }]);
        let ds = Dataset::new(
            schema.clone(),
            vec![record("a", "p", &[("tbp_lv_H", 30.0), ("tbp_lv_Hext", 30.0)])],
        )
        .unwrap();
        let (frame, _) = featurize(&ds, &catalog, None).unwrap();
        let j = frame.column_index("hue_contrast").unwrap();
        assert_eq!(frame.value(0, j), 0.0);

        let bad = FeatureCatalog::new(vec![CatalogEntry {
            name: "x".into(),
            expression: "tbp_lv_nope + 1".into(),
        }]);
        assert!(matches!(featurize(&ds, &bad, None), Err(Error::Catalog(_))));
        let empty = Dataset::new(schema, vec![]).unwrap();
        assert!(matches!(featurize(&empty, &catalog, None), Err(Error::Input(_))));
    }

    #[test]
    fn division_by_zero_is_imputed() {
        let catalog = FeatureCatalog::new(vec![CatalogEntry {
            name: "ratio".into(),
            expression: "tbp_lv_H / tbp_lv_Hext".into(),
        }]);
        let ds = Dataset::new(
            small_schema(),
            vec![
                record("a", "p", &[("tbp_lv_H", 1.0), ("tbp_lv_Hext", 0.0)]),
                record("b", "p", &[("tbp_lv_H", 2.0), ("tbp_lv_Hext", 1.0)]),
                record("c", "p", &[("tbp_lv_H", 4.0), ("tbp_lv_Hext", 1.0)]),
            ],
        )
        .unwrap();
        let (frame, stats) = featurize(&ds, &catalog, None).unwrap();
        let j = frame.column_index("ratio").unwrap();
        assert_eq!(frame.value(0, j), 3.0);
        assert_eq!(stats.medians["ratio"], 3.0);
        assert!(frame.column_values(j).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn noise_sigma_zero_and_negative() {
        let ds = Dataset::new(
            small_schema(),
            vec![record("a", "p", &[("tbp_lv_H", 1.0)]), record("b", "q", &[])],
        )
        .unwrap();
        let (frame, _) = featurize(&ds, &FeatureCatalog::new(vec![]), None).unwrap();
        assert_eq!(inject_prediction_noise(&frame, 0.0, 7).unwrap(), frame);
        assert!(matches!(
            inject_prediction_noise(&frame, -0.1, 7),
            Err(Error::Parameter(_))
        ));
    }
}
