use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    RawNumeric,
    /// Vocabulary index of each categorical variable (missing or unseen = NaN).
    RawCategorical,
    Onehot,
    Engineered,
    PatientNorm,
    PatientAgg,
    ExternalPred,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::RawNumeric,
        FeatureGroup::RawCategorical,
        FeatureGroup::Onehot,
        FeatureGroup::Engineered,
        FeatureGroup::PatientNorm,
        FeatureGroup::PatientAgg,
        FeatureGroup::ExternalPred,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::RawNumeric => "raw_numeric",
            FeatureGroup::RawCategorical => "raw_categorical",
            FeatureGroup::Onehot => "onehot",
            FeatureGroup::Engineered => "engineered",
            FeatureGroup::PatientNorm => "patient_norm",
            FeatureGroup::PatientAgg => "patient_agg",
            FeatureGroup::ExternalPred => "external_pred",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub group: FeatureGroup,
    pub origin: String,
}

/// A set of columns stored column-major, as produced by one featurization step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnBlock {
    pub columns: Vec<FeatureColumn>,
    pub values: Vec<Vec<f64>>,
}

impl ColumnBlock {
    pub fn push(&mut self, column: FeatureColumn, values: Vec<f64>) {
        self.columns.push(column);
        self.values.push(values);
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .map(|i| self.values[i].as_slice())
    }
}

/// Row-major feature matrix with per-column metadata. Missing values are NaN.
///
/// Equality compares matrix values bitwise, so two frames with NaN in the
/// same cells are equal.
#[derive(Debug, Clone)]
pub struct FeatureFrame {
    pub(crate) columns: Vec<FeatureColumn>,
    pub(crate) data: Vec<f64>,
    pub(crate) row_ids: Vec<String>,
    pub(crate) row_patients: Vec<String>,
    pub(crate) labels: Vec<u8>,
    pub(crate) synthetic: Vec<bool>,
    pub(crate) schema_hash: String,
}

impl PartialEq for FeatureFrame {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.row_ids == other.row_ids
            && self.row_patients == other.row_patients
            && self.labels == other.labels
            && self.synthetic == other.synthetic
            && self.schema_hash == other.schema_hash
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Serialize, Deserialize)]
struct FrameHeader {
    schema_hash: String,
    columns: Vec<FeatureColumn>,
    row_ids: Vec<String>,
    row_patients: Vec<String>,
    labels: Vec<u8>,
    synthetic: Vec<bool>,
}

const CACHE_MAGIC: &[u8; 4] = b"LTFF";
const CACHE_VERSION: u32 = 1;

impl FeatureFrame {
    /// Assemble a frame from column blocks (all of `n_rows` length).
    pub fn from_blocks(
        blocks: Vec<ColumnBlock>,
        row_ids: Vec<String>,
        row_patients: Vec<String>,
        labels: Vec<u8>,
        synthetic: Vec<bool>,
        schema_hash: String,
    ) -> Result<Self> {
        let n_rows = row_ids.len();
        if row_patients.len() != n_rows || labels.len() != n_rows || synthetic.len() != n_rows {
            return Err(Error::Shape("row metadata lengths differ".into()));
        }
        let mut columns = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for block in blocks {
            for (c, v) in block.columns.into_iter().zip(block.values) {
                if v.len() != n_rows {
                    return Err(Error::Shape(format!(
                        "column {} has {} values for {n_rows} rows",
                        c.name,
                        v.len()
                    )));
                }
                columns.push(c);
                cols.push(v);
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.name.as_str())) {
            return Err(Error::Schema(format!("duplicate feature column {}", dup.name)));
        }
        let n_cols = columns.len();
        let mut data = vec![0.0; n_rows * n_cols];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n_cols + j] = v;
            }
        }
        Ok(Self {
            columns,
            data,
            row_ids,
            row_patients,
            labels,
            synthetic,
            schema_hash,
        })
    }

    /// Frame from plain rows, every column tagged raw numeric. Row ids are
    /// `r{i}` and every row is its own patient unless `patients` is given.
    pub fn from_matrix(names: &[&str], rows: &[Vec<f64>], labels: &[u8], patients: Option<&[String]>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows vs {} labels", rows.len(), labels.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(Error::Shape(format!(
                "row of width {} for {} columns",
                r.len(),
                names.len()
            )));
        }
        let row_ids: Vec<String> = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let row_patients = match patients {
            Some(p) => p.to_vec(),
            None => row_ids.clone(),
        };
        if row_patients.len() != rows.len() {
            return Err(Error::Shape("patients length differs from rows".into()));
        }
        Ok(Self {
            columns: names
                .iter()
                .map(|n| FeatureColumn {
                    name: n.to_string(),
                    group: FeatureGroup::RawNumeric,
                    origin: "matrix".into(),
                })
                .collect(),
            data: rows.concat(),
            synthetic: vec![false; rows.len()],
            row_ids,
            row_patients,
            labels: labels.to_vec(),
            schema_hash: String::new(),
        })
    }

    /// Replace column metadata (same count) - used to regroup matrix frames.
    pub fn with_columns(mut self, columns: Vec<FeatureColumn>) -> Result<Self> {
        if columns.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "{} column descriptors for {} columns",
                columns.len(),
                self.columns.len()
            )));
        }
        self.columns = columns;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, col)).collect()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row_patients(&self) -> &[String] {
        &self.row_patients
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn synthetic(&self) -> &[bool] {
        &self.synthetic
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn group_counts(&self) -> BTreeMap<FeatureGroup, usize> {
        let mut counts: BTreeMap<FeatureGroup, usize> = FeatureGroup::ALL.iter().map(|&g| (g, 0)).collect();
        for c in &self.columns {
            *counts.get_mut(&c.group).unwrap() += 1;
        }
        counts
    }

    /// Rows by index; repeated indices duplicate rows.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureFrame {
        let n = self.n_cols();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureFrame {
            columns: self.columns.clone(),
            data,
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            row_patients: indices.iter().map(|&i| self.row_patients[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            synthetic: indices.iter().map(|&i| self.synthetic[i]).collect(),
            schema_hash: self.schema_hash.clone(),
        }
    }

    /// Keep only columns whose group is in `groups`, preserving order.
    pub fn select_groups(&self, groups: &[FeatureGroup]) -> FeatureFrame {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| groups.contains(&self.columns[j].group))
            .collect();
        let mut data = Vec::with_capacity(self.n_rows() * keep.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            data.extend(keep.iter().map(|&j| row[j]));
        }
        FeatureFrame {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            data,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> FeatureFrame {
        FeatureFrame {
            columns: Vec::new(),
            data: Vec::new(),
            row_ids: self.row_ids.clone(),
            row_patients: self.row_patients.clone(),
            labels: self.labels.clone(),
            synthetic: self.synthetic.clone(),
            schema_hash: self.schema_hash.clone(),
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// CSV export; missing values are written as empty cells.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["isic_id", "patient_id", "target"];
        header.extend(self.columns.iter().map(|c| c.name.as_str()));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![
                self.row_ids[i].clone(),
                self.row_patients[i].clone(),
                self.labels[i].to_string(),
            ];
            rec.extend(
                self.row(i)
                    .iter()
                    .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Sidecar JSON describing column groups.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            schema_hash: &'a str,
            group_counts: BTreeMap<&'static str, usize>,
            total: usize,
            columns: &'a [FeatureColumn],
        }
        let path = path.as_ref();
        let sidecar = Sidecar {
            schema_hash: &self.schema_hash,
            group_counts: self.group_counts().into_iter().map(|(g, n)| (g.as_str(), n)).collect(),
            total: self.n_cols(),
            columns: &self.columns,
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
        Ok(())
    }

    /// Binary cache: magic, version, JSON header, then little-endian f64 matrix.
    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&FrameHeader {
            schema_hash: self.schema_hash.clone(),
            columns: self.columns.clone(),
            row_ids: self.row_ids.clone(),
            row_patients: self.row_patients.clone(),
            labels: self.labels.clone(),
            synthetic: self.synthetic.clone(),
        })?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn load_cache(path: impl AsRef<Path>, expected_schema_hash: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let file = File::open(path).map_err(io)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a feature-frame cache".into()));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(io)?;
        let version = u32::from_le_bytes(buf4);
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "feature cache version {version} (expected {CACHE_VERSION})"
            )));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8).map_err(io)?;
        let mut header = vec![0u8; u64::from_le_bytes(buf8) as usize];
        r.read_exact(&mut header).map_err(io)?;
        let header: FrameHeader = serde_json::from_slice(&header)?;
        if let Some(expected) = expected_schema_hash {
            if expected != header.schema_hash {
                return Err(Error::Format(format!(
                    "feature cache schema hash {} does not match {expected}",
                    header.schema_hash
                )));
            }
        }
        let n = header.row_ids.len() * header.columns.len();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf8).map_err(io)?;
            data.push(f64::from_le_bytes(buf8));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes in feature cache".into()));
        }
        Ok(FeatureFrame {
            columns: header.columns,
            data,
            row_ids: header.row_ids,
            row_patients: header.row_patients,
            labels: header.labels,
            synthetic: header.synthetic,
            schema_hash: header.schema_hash,
        })
    }
}
