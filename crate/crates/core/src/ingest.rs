//! Lesion metadata ingestion: schema validation, diagnosis relabeling,
//! prediction-column merging and the canonical on-disk dataset container.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hashing::json_hash;
use crate::{Error, Result};

pub const LESION_ID_COLUMN: &str = "isic_id";
pub const PATIENT_ID_COLUMN: &str = "patient_id";
pub const TARGET_COLUMN: &str = "target";
pub const PROVENANCE_COLUMN: &str = "provenance";

/// Category label used for absent categorical values.
pub const MISSING_CATEGORY: &str = "missing";

const CANONICAL_FORMAT_VERSION: u32 = 1;
const DEFAULT_SCHEMA_JSON: &str = include_str!("../assets/default_schema.json");

/// The three column groups a lesion table is expected to carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub prediction_columns: Vec<String>,
    /// Fixed one-hot vocabularies. Categoricals without an entry learn
    /// their vocabulary from training rows.
    #[serde(default)]
    pub categorical_vocabularies: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub diagnosis_column: Option<String>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SCHEMA_JSON).expect("shipped default schema is valid JSON")
    }
}

impl DatasetSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema = serde_json::from_reader(BufReader::new(file))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in self
            .numeric_columns
            .iter()
            .chain(&self.categorical_columns)
            .chain(&self.prediction_columns)
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!(
                    "column {name} listed more than once across schema groups"
                )));
            }
            if [LESION_ID_COLUMN, PATIENT_ID_COLUMN, TARGET_COLUMN].contains(&name.as_str()) {
                return Err(Error::Schema(format!("reserved column {name} in schema groups")));
            }
        }
        for key in self.categorical_vocabularies.keys() {
            if !self.categorical_columns.contains(key) {
                return Err(Error::Schema(format!(
                    "vocabulary given for {key}, which is not a categorical column"
                )));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        json_hash(self).expect("schema serializes")
    }

    fn is_numeric(&self, name: &str) -> bool {
        self.numeric_columns.iter().any(|c| c == name)
    }

    fn is_categorical(&self, name: &str) -> bool {
        self.categorical_columns.iter().any(|c| c == name)
    }

    fn is_prediction(&self, name: &str) -> bool {
        self.prediction_columns.iter().any(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Real,
    Synthetic,
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "real" => Ok(Provenance::Real),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::Input(format!("unknown provenance {other:?}"))),
        }
    }
}

/// One lesion row. Absent map keys are missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRecord {
    pub lesion_id: String,
    pub patient_id: String,
    pub target: u8,
    #[serde(default)]
    pub diagnosis: Option<String>,
    #[serde(default)]
    pub numerics: BTreeMap<String, f64>,
    #[serde(default)]
    pub categoricals: BTreeMap<String, String>,
    #[serde(default)]
    pub predictions: BTreeMap<String, f64>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl LesionRecord {
    pub fn numeric(&self, column: &str) -> Option<f64> {
        self.numerics.get(column).copied()
    }

    pub fn category(&self, column: &str) -> &str {
        self.categoricals
            .get(column)
            .map(String::as_str)
            .unwrap_or(MISSING_CATEGORY)
    }
}

/// Validated collection of lesion records sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    records: Vec<LesionRecord>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, records: Vec<LesionRecord>) -> Result<Self> {
        schema.validate()?;
        let mut ids = BTreeSet::new();
        for r in &records {
            if r.target > 1 {
                return Err(Error::Integrity(format!(
                    "lesion {} has target {} outside {{0, 1}}",
                    r.lesion_id, r.target
                )));
            }
            if !ids.insert(r.lesion_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate lesion_id {}", r.lesion_id)));
            }
            if let Some(k) = r.numerics.keys().find(|k| !schema.is_numeric(k)) {
                return Err(Error::Schema(format!(
                    "lesion {}: {k} is not a numeric column",
                    r.lesion_id
                )));
            }
            if let Some(k) = r.categoricals.keys().find(|k| !schema.is_categorical(k)) {
                return Err(Error::Schema(format!(
                    "lesion {}: {k} is not a categorical column",
                    r.lesion_id
                )));
            }
            if let Some(k) = r.predictions.keys().find(|k| !schema.is_prediction(k)) {
                return Err(Error::Schema(format!(
                    "lesion {}: {k} is not a prediction column",
                    r.lesion_id
                )));
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[LesionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices per patient, ordered by patient id.
    pub fn patient_groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.patient_id.as_str()).or_default().push(i);
        }
        groups
    }

    pub fn filter(&self, mut keep: impl FnMut(&LesionRecord) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn real_only(&self) -> Dataset {
        self.filter(|r| r.provenance == Provenance::Real)
    }

    pub fn save_canonical(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let container = CanonicalDatasetRef {
            format_version: CANONICAL_FORMAT_VERSION,
            schema_hash: self.schema.hash(),
            schema: &self.schema,
            records: &self.records,
        };
        serde_json::to_writer(BufWriter::new(file), &container)?;
        Ok(())
    }

    /// Reload a canonical container. When `expected` is given its hash must
    /// match the embedded schema hash.
    pub fn load_canonical(path: impl AsRef<Path>, expected: Option<&DatasetSchema>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let container: CanonicalDataset = serde_json::from_reader(BufReader::new(file))?;
        if container.format_version != CANONICAL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} (expected {CANONICAL_FORMAT_VERSION})",
                container.format_version
            )));
        }
        let actual = container.schema.hash();
        if actual != container.schema_hash {
            return Err(Error::Format(format!(
                "embedded schema hash {} does not match schema contents {actual}",
                container.schema_hash
            )));
        }
        if let Some(expected) = expected {
            if expected.hash() != container.schema_hash {
                return Err(Error::Format("dataset was written under a different schema".into()));
            }
        }
        Dataset::new(container.schema, container.records)
    }
}

#[derive(Serialize)]
struct CanonicalDatasetRef<'a> {
    format_version: u32,
    schema_hash: String,
    schema: &'a DatasetSchema,
    records: &'a [LesionRecord],
}

#[derive(Deserialize)]
struct CanonicalDataset {
    format_version: u32,
    schema_hash: String,
    schema: DatasetSchema,
    records: Vec<LesionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row index (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_loaded: usize,
    pub rejected: Vec<RejectedRow>,
    pub missing_counts: BTreeMap<String, usize>,
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_dataset_from_reader(BufReader::new(file), schema)
}

pub fn load_dataset_from_reader<R: Read>(reader: R, schema: &DatasetSchema) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut csv = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = csv.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| position(name).ok_or_else(|| Error::Schema(format!("missing required column {name}")));

    let id_col = require(LESION_ID_COLUMN)?;
    let patient_col = require(PATIENT_ID_COLUMN)?;
    let target_col = require(TARGET_COLUMN)?;
    let numeric_cols = schema
        .numeric_columns
        .iter()
        .map(|c| Ok((c.as_str(), require(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let categorical_cols = schema
        .categorical_columns
        .iter()
        .map(|c| Ok((c.as_str(), require(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let prediction_cols: Vec<(&str, usize)> = schema
        .prediction_columns
        .iter()
        .filter_map(|c| position(c).map(|i| (c.as_str(), i)))
        .collect();
    let diagnosis_col = schema.diagnosis_column.as_deref().and_then(position);
    let provenance_col = position(PROVENANCE_COLUMN);

    let mut report = LoadReport::default();
    for (name, _) in numeric_cols.iter().chain(&categorical_cols).chain(&prediction_cols) {
        report.missing_counts.insert((*name).to_string(), 0);
    }
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();

    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        report.rows_read += 1;
        let field = |col: usize| row.get(col).unwrap_or("").trim();

        let lesion_id = field(id_col).to_string();
        if !seen.insert(lesion_id.clone()) {
            return Err(Error::Integrity(format!("duplicate lesion_id {lesion_id}")));
        }
        let reject = |reason: String| RejectedRow { row: row_no, reason };
        if lesion_id.is_empty() {
            report.rejected.push(reject("empty isic_id".into()));
            continue;
        }
        let patient_id = field(patient_col).to_string();
        if patient_id.is_empty() {
            report.rejected.push(reject(format!("{lesion_id}: empty patient_id")));
            continue;
        }
        let target = match parse_target(field(target_col)) {
            Some(t) => t,
            None => {
                report.rejected.push(reject(format!(
                    "{lesion_id}: target {:?} is not 0 or 1",
                    field(target_col)
                )));
                continue;
            }
        };
        let provenance = match provenance_col.map(|c| field(c).parse::<Provenance>()) {
            None => Provenance::Real,
            Some(Ok(p)) => p,
            Some(Err(e)) => {
                report.rejected.push(reject(format!("{lesion_id}: {e}")));
                continue;
            }
        };

        let mut numerics = BTreeMap::new();
        for &(name, col) in &numeric_cols {
            match parse_real(field(col)) {
                Some(v) => {
                    numerics.insert(name.to_string(), v);
                }
                None => *report.missing_counts.get_mut(name).unwrap() += 1,
            }
        }
        let mut categoricals = BTreeMap::new();
        for &(name, col) in &categorical_cols {
            let v = field(col);
            if v.is_empty() {
                *report.missing_counts.get_mut(name).unwrap() += 1;
            } else {
                categoricals.insert(name.to_string(), v.to_string());
            }
        }
        let mut predictions = BTreeMap::new();
        for &(name, col) in &prediction_cols {
            match parse_real(field(col)) {
                Some(v) => {
                    check_probability(&lesion_id, name, v)?;
                    predictions.insert(name.to_string(), v);
                }
                None => *report.missing_counts.get_mut(name).unwrap() += 1,
            }
        }
        let diagnosis = diagnosis_col.map(field).filter(|d| !d.is_empty()).map(str::to_string);

        records.push(LesionRecord {
            lesion_id,
            patient_id,
            target,
            diagnosis,
            numerics,
            categoricals,
            predictions,
            provenance,
        });
    }
    report.rows_loaded = records.len();
    if !report.rejected.is_empty() {
        log::warn!("rejected {} of {} rows", report.rejected.len(), report.rows_read);
    }
    Ok((Dataset::new(schema.clone(), records)?, report))
}

fn parse_target(s: &str) -> Option<u8> {
    match s {
        "0" => Some(0),
        "1" => Some(1),
        other => match other.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        },
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn check_probability(lesion_id: &str, column: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Range {
            lesion_id: lesion_id.to_string(),
            column: column.to_string(),
            value,
        })
    }
}

/// Three-way diagnostic grouping used by the auxiliary image classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreeClassLabel {
    Melanoma,
    Nevus,
    Bkl,
}

impl ThreeClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ThreeClassLabel::Melanoma => "melanoma",
            ThreeClassLabel::Nevus => "nevus",
            ThreeClassLabel::Bkl => "bkl",
        }
    }
}

const KERATINOCYTE_DIAGNOSES: [&str; 5] = [
    "basal cell carcinoma",
    "seborrheic keratosis",
    "solar lentigo",
    "lentigo nos",
    "bkl",
];

/// Map a free-text diagnosis onto the three-class scheme. Unrecognised
/// diagnoses fall back to nevus.
pub fn relabel_diagnosis(diagnosis: &str) -> Result<ThreeClassLabel> {
    let key = diagnosis.trim().to_lowercase();
    if key.is_empty() {
        return Err(Error::Input("empty diagnosis string".into()));
    }
    Ok(match key.as_str() {
        "melanoma" => ThreeClassLabel::Melanoma,
        "nevus" => ThreeClassLabel::Nevus,
        k if KERATINOCYTE_DIAGNOSES.contains(&k) => ThreeClassLabel::Bkl,
        _ => {
            log::warn!("diagnosis {diagnosis:?} not in relabel allowlist; mapped to nevus");
            ThreeClassLabel::Nevus
        }
    })
}

/// External image-model outputs keyed by lesion id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl PredictionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lesion_id: impl Into<String>, column: impl Into<String>, value: f64) {
        self.rows
            .entry(lesion_id.into())
            .or_default()
            .insert(column.into(), value);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Read a CSV keyed by `isic_id` (or `lesion_id`). Only the schema's
    /// prediction columns are kept; blank cells are missing.
    pub fn from_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), schema)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let id_col = headers
            .iter()
            .position(|h| h.trim() == LESION_ID_COLUMN || h.trim() == "lesion_id")
            .ok_or_else(|| Error::Schema(format!("missing required column {LESION_ID_COLUMN}")))?;
        let cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| schema.is_prediction(h.trim()))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect();
        let mut table = PredictionTable::new();
        for row in csv.records() {
            let row = row?;
            let id = row.get(id_col).unwrap_or("").trim().to_string();
            let entry = table.rows.entry(id.clone()).or_default();
            for (col, name) in &cols {
                let cell = row.get(*col).unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Input(format!("lesion {id}: unparseable {name} value {cell:?}")))?;
                entry.insert(name.clone(), v);
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    /// Fraction of dataset lesions that received predictions.
    pub coverage: f64,
    pub matched: usize,
    /// Prediction rows whose lesion id is not in the dataset.
    pub unmatched: usize,
}

/// Attach prediction columns. Lesions absent from the table end up with no
/// prediction values.
pub fn merge_prediction_columns(dataset: &Dataset, predictions: &PredictionTable) -> Result<(Dataset, MergeReport)> {
    for (id, cols) in &predictions.rows {
        for (name, &v) in cols {
            if !dataset.schema.is_prediction(name) {
                return Err(Error::Schema(format!("{name} is not a prediction column")));
            }
            check_probability(id, name, v)?;
        }
    }
    let mut matched = 0;
    let records = dataset
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.predictions = match predictions.rows.get(&r.lesion_id) {
                Some(p) if !p.is_empty() => {
                    matched += 1;
                    p.clone()
                }
                _ => BTreeMap::new(),
            };
            r
        })
        .collect();
    let ids: BTreeSet<&str> = dataset.records.iter().map(|r| r.lesion_id.as_str()).collect();
    let unmatched = predictions.rows.keys().filter(|k| !ids.contains(k.as_str())).count();
    let coverage = if dataset.is_empty() {
        0.0
    } else {
        matched as f64 / dataset.len() as f64
    };
    Ok((
        Dataset::new(dataset.schema.clone(), records)?,
        MergeReport {
            coverage,
            matched,
            unmatched,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_schema() -> DatasetSchema {
        DatasetSchema {
            numeric_columns: vec!["age_approx".into(), "clin_size_long_diam_mm".into()],
            categorical_columns: vec!["sex".into()],
            prediction_columns: vec!["predictions_eva".into()],
            categorical_vocabularies: BTreeMap::new(),
            diagnosis_column: Some("iddx_full".into()),
        }
    }

    fn load(csv: &str) -> Result<(Dataset, LoadReport)> {
        load_dataset_from_reader(csv.as_bytes(), &tiny_schema())
    }

    #[test]
    fn default_schema_counts() {
        let s = DatasetSchema::default();
        s.validate().unwrap();
        assert_eq!(s.numeric_columns.len(), 34);
        assert_eq!(s.categorical_columns.len(), 6);
        assert_eq!(s.prediction_columns.len(), 5);
    }

    #[test]
    fn four_rows_two_patients() {
        let (ds, report) = load(
            "isic_id,patient_id,target,age_approx,clin_size_long_diam_mm,sex\n\
             a,p1,0,50,3.1,male\n\
             b,p1,1,50,4.0,male\n\
             c,p2,0,,2.2,\n\
             d,p2,0,35,x,female\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.patient_groups().len(), 2);
        assert_eq!(report.missing_counts["age_approx"], 1);
        assert_eq!(report.missing_counts["clin_size_long_diam_mm"], 1);
        assert_eq!(report.missing_counts["sex"], 1);
        assert_eq!(ds.records()[2].category("sex"), MISSING_CATEGORY);
    }

    #[test]
    fn bad_target_row_rejected() {
        let (ds, report) = load(
            "isic_id,patient_id,target,age_approx,clin_size_long_diam_mm,sex\n\
             a,p1,0,50,3.1,male\n\
             b,p1,1,50,4.0,male\n\
             c,p2,2,40,2.2,female\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].row, 3);
    }

    #[test]
    fn missing_header_names_column() {
        let err = load("isic_id,patient_id,target,age_approx,sex\na,p,0,1,male\n").unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("clin_size_long_diam_mm")),
            "{err}"
        );
    }

    #[test]
    fn duplicate_lesion_id_is_integrity_error() {
        let err = load(
            "isic_id,patient_id,target,age_approx,clin_size_long_diam_mm,sex\n\
             a,p1,0,50,3.1,male\n\
             a,p2,1,50,4.0,male\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn relabel_examples() {
        assert_eq!(relabel_diagnosis("melanoma").unwrap(), ThreeClassLabel::Melanoma);
        assert_eq!(relabel_diagnosis("solar lentigo").unwrap(), ThreeClassLabel::Bkl);
        assert_eq!(relabel_diagnosis("  Lentigo NOS ").unwrap(), ThreeClassLabel::Bkl);
        assert_eq!(relabel_diagnosis("Basal cell carcinoma").unwrap(), ThreeClassLabel::Bkl);
        assert_eq!(relabel_diagnosis("dermatofibroma").unwrap(), ThreeClassLabel::Nevus);
        assert!(matches!(relabel_diagnosis("   "), Err(Error::Input(_))));
        for label in [ThreeClassLabel::Melanoma, ThreeClassLabel::Nevus, ThreeClassLabel::Bkl] {
            assert_eq!(relabel_diagnosis(label.as_str()).unwrap(), label);
        }
    }

    fn three_or_four(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| LesionRecord {
                lesion_id: format!("L{i}"),
                patient_id: format!("P{}", i / 2),
                target: (i % 2) as u8,
                diagnosis: None,
                numerics: BTreeMap::new(),
                categoricals: BTreeMap::new(),
                predictions: BTreeMap::new(),
                provenance: Provenance::Real,
            })
            .collect();
        Dataset::new(tiny_schema(), records).unwrap()
    }

    #[test]
    fn merge_coverage() {
        let ds = three_or_four(3);
        let mut table = PredictionTable::new();
        for i in 0..3 {
            table.insert(format!("L{i}"), "predictions_eva", 0.25);
        }
        let (_, report) = merge_prediction_columns(&ds, &table).unwrap();
        assert_eq!(report.coverage, 1.0);

        let ds = three_or_four(4);
        let mut table = PredictionTable::new();
        table.insert("L0", "predictions_eva", 0.1);
        table.insert("L3", "predictions_eva", 0.9);
        let (merged, report) = merge_prediction_columns(&ds, &table).unwrap();
        assert_eq!(report.coverage, 0.5);
        assert_eq!(merged.records().iter().filter(|r| r.predictions.is_empty()).count(), 2);
    }

    #[test]
    fn merge_range_error_names_lesion() {
        let ds = three_or_four(4);
        let mut table = PredictionTable::new();
        table.insert("L2", "predictions_eva", 1.3);
        match merge_prediction_columns(&ds, &table) {
            Err(Error::Range { lesion_id, .. }) => assert_eq!(lesion_id, "L2"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip_and_hash_check() {
        let ds = three_or_four(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        ds.save_canonical(&path).unwrap();
        assert_eq!(Dataset::load_canonical(&path, Some(ds.schema())).unwrap(), ds);

        let mut other = tiny_schema();
        other.numeric_columns.push("tbp_lv_H".into());
        assert!(matches!(
            Dataset::load_canonical(&path, Some(&other)),
            Err(Error::Format(_))
        ));

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"age_approx\"", "\"age_tampered\"");
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(Dataset::load_canonical(&path, None), Err(Error::Format(_))));
    }
}
