//! Patient-disjoint stratified cross-validation plans and class rebalancing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::json_hash;
use crate::{Error, Result};

pub const DEFAULT_POS_CAP: usize = 20;

/// Train/validation patient partition for one (seed, fold).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub seed: u64,
    pub fold: usize,
    pub train_patients: BTreeSet<String>,
    pub validation_patients: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub seed: u64,
    pub fold: usize,
    pub n_rows: usize,
    pub n_pos: usize,
    /// `|fold rate - global rate| / global rate`.
    pub relative_rate_deviation: f64,
}

/// Quality summary of one seed's split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub global_positive_rate: f64,
    pub folds: Vec<FoldStats>,
    pub max_relative_deviation: f64,
    /// Folds whose validation partition holds no positive row.
    pub positive_free_folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    assignments: Vec<FoldAssignment>,
}

#[derive(Serialize, Deserialize)]
struct FoldRecord {
    seed: u64,
    fold: usize,
    validation_patients: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FoldPlanFile {
    n_folds: usize,
    seeds: Vec<u64>,
    folds: Vec<FoldRecord>,
}

impl FoldPlan {
    /// Build a plan covering every seed.
    pub fn build(row_patients: &[String], labels: &[u8], n_folds: usize, seeds: &[u64]) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Input("at least one seed is required".into()));
        }
        let mut assignments = Vec::new();
        for &seed in seeds {
            assignments.extend(stratified_group_kfold(row_patients, labels, n_folds, seed)?.0);
        }
        Ok(Self {
            n_folds,
            seeds: seeds.to_vec(),
            assignments,
        })
    }

    pub fn assignments(&self) -> &[FoldAssignment] {
        &self.assignments
    }

    pub fn get(&self, seed: u64, fold: usize) -> Option<&FoldAssignment> {
        self.assignments.iter().find(|a| a.seed == seed && a.fold == fold)
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.assignments
            .iter()
            .flat_map(|a| a.validation_patients.iter().map(String::as_str))
            .collect()
    }

    fn to_file(&self) -> FoldPlanFile {
        FoldPlanFile {
            n_folds: self.n_folds,
            seeds: self.seeds.clone(),
            folds: self
                .assignments
                .iter()
                .map(|a| FoldRecord {
                    seed: a.seed,
                    fold: a.fold,
                    validation_patients: a.validation_patients.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn hash(&self) -> String {
        json_hash(&self.to_file()).expect("plan serializes")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let raw: FoldPlanFile = serde_json::from_reader(BufReader::new(file))?;
        Self::from_file(raw)
    }

    fn from_file(raw: FoldPlanFile) -> Result<Self> {
        let mut assignments = Vec::new();
        for &seed in &raw.seeds {
            let folds: Vec<&FoldRecord> = raw.folds.iter().filter(|f| f.seed == seed).collect();
            if folds.len() != raw.n_folds {
                return Err(Error::Validation(format!(
                    "seed {seed} has {} folds, expected {}",
                    folds.len(),
                    raw.n_folds
                )));
            }
            let all: BTreeSet<String> = folds
                .iter()
                .flat_map(|f| f.validation_patients.iter().cloned())
                .collect();
            let total: usize = folds.iter().map(|f| f.validation_patients.len()).sum();
            if total != all.len() {
                return Err(Error::Validation(format!(
                    "seed {seed}: a patient is validated in more than one fold"
                )));
            }
            let mut folds = folds;
            folds.sort_by_key(|f| f.fold);
            for f in folds {
                let validation: BTreeSet<String> = f.validation_patients.iter().cloned().collect();
                assignments.push(FoldAssignment {
                    seed,
                    fold: f.fold,
                    train_patients: all.difference(&validation).cloned().collect(),
                    validation_patients: validation,
                });
            }
        }
        Ok(Self {
            n_folds: raw.n_folds,
            seeds: raw.seeds,
            assignments,
        })
    }
}

struct PatientGroup<'a> {
    id: &'a str,
    pos: usize,
    total: usize,
}

/// Greedy stratified group k-fold for one seed.
///
/// Patient groups are shuffled with the seed, stably sorted by positive
/// count then size (both descending), and each is placed in the fold whose
/// scaled squared deviation from the ideal (positives, rows) per fold grows
/// least. Ties go to the lowest fold index.
pub fn stratified_group_kfold(
    row_patients: &[String],
    labels: &[u8],
    n_folds: usize,
    seed: u64,
) -> Result<(Vec<FoldAssignment>, SplitReport)> {
    if row_patients.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} patients vs {} labels",
            row_patients.len(),
            labels.len()
        )));
    }
    if n_folds < 2 {
        return Err(Error::Input(format!("n_folds {n_folds} < 2")));
    }
    let mut by_patient: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, &y) in row_patients.iter().zip(labels) {
        let e = by_patient.entry(p.as_str()).or_default();
        e.0 += usize::from(y == 1);
        e.1 += 1;
    }
    if by_patient.len() < n_folds {
        return Err(Error::Input(format!(
            "{} patients cannot fill {n_folds} folds",
            by_patient.len()
        )));
    }
    let mut groups: Vec<PatientGroup> = by_patient
        .iter()
        .map(|(&id, &(pos, total))| PatientGroup { id, pos, total })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    groups.sort_by(|a, b| b.pos.cmp(&a.pos).then(b.total.cmp(&a.total)));

    let total_pos: usize = groups.iter().map(|g| g.pos).sum();
    let total_rows: usize = groups.iter().map(|g| g.total).sum();
    let ideal_pos = total_pos as f64 / n_folds as f64;
    let ideal_rows = total_rows as f64 / n_folds as f64;
    let scaled = |x: f64, ideal: f64| if ideal > 0.0 { (x - ideal) / ideal } else { 0.0 };
    let cost =
        |pos: usize, rows: usize| scaled(pos as f64, ideal_pos).powi(2) + scaled(rows as f64, ideal_rows).powi(2);

    let mut fold_pos = vec![0usize; n_folds];
    let mut fold_rows = vec![0usize; n_folds];
    let mut members: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_folds];
    for g in &groups {
        let mut best = 0;
        let mut best_delta = f64::INFINITY;
        for f in 0..n_folds {
            let delta = cost(fold_pos[f] + g.pos, fold_rows[f] + g.total) - cost(fold_pos[f], fold_rows[f]);
            if delta < best_delta {
                best_delta = delta;
                best = f;
            }
        }
        fold_pos[best] += g.pos;
        fold_rows[best] += g.total;
        members[best].insert(g.id.to_string());
    }

    let all: BTreeSet<String> = by_patient.keys().map(|s| s.to_string()).collect();
    let assignments: Vec<FoldAssignment> = members
        .into_iter()
        .enumerate()
        .map(|(fold, validation)| FoldAssignment {
            seed,
            fold,
            train_patients: all.difference(&validation).cloned().collect(),
            validation_patients: validation,
        })
        .collect();

    let global = total_pos as f64 / total_rows as f64;
    let folds: Vec<FoldStats> = (0..n_folds)
        .map(|f| {
            let rate = if fold_rows[f] > 0 {
                fold_pos[f] as f64 / fold_rows[f] as f64
            } else {
                0.0
            };
            FoldStats {
                seed,
                fold: f,
                n_rows: fold_rows[f],
                n_pos: fold_pos[f],
                relative_rate_deviation: if global > 0.0 {
                    (rate - global).abs() / global
                } else {
                    0.0
                },
            }
        })
        .collect();
    let report = SplitReport {
        global_positive_rate: global,
        max_relative_deviation: folds.iter().map(|f| f.relative_rate_deviation).fold(0.0, f64::max),
        positive_free_folds: folds.iter().filter(|f| f.n_pos == 0).map(|f| f.fold).collect(),
        folds,
    };
    Ok((assignments, report))
}

/// Resample row indices so that positives per negative equals
/// `target_ratio` (within rounding).
///
/// Every positive is kept once and extra copies are drawn with replacement,
/// up to `pos_cap` copies per positive in total. Negatives are subsampled
/// without replacement. If positives dominate even after all negatives are
/// kept, positives are subsampled instead. Output order is shuffled.
pub fn rebalance(labels: &[u8], rows: &[usize], target_ratio: f64, pos_cap: usize, seed: u64) -> Result<Vec<usize>> {
    if !(target_ratio.is_finite() && target_ratio > 0.0) {
        return Err(Error::Parameter(format!("target ratio {target_ratio} must be > 0")));
    }
    if pos_cap == 0 {
        return Err(Error::Parameter("pos_cap must be >= 1".into()));
    }
    let pos: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() {
        return Err(Error::Sampling("no positive (malignant) rows to rebalance".into()));
    }
    if neg.is_empty() {
        return Err(Error::Sampling("no negative (benign) rows to rebalance".into()));
    }
    let (n_pos, n_neg) = (pos.len(), neg.len());
    let wanted_pos = ((target_ratio * n_neg as f64).round() as usize).max(n_pos);
    let mut pos_out = wanted_pos.min(pos_cap * n_pos);
    let neg_out = ((pos_out as f64 / target_ratio).round() as usize).clamp(1, n_neg);
    let matched_pos = ((target_ratio * neg_out as f64).round() as usize).max(1);
    if matched_pos < pos_out {
        pos_out = matched_pos;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pos_out + neg_out);
    if pos_out <= n_pos {
        out.extend(pos.choose_multiple(&mut rng, pos_out).copied());
    } else {
        out.extend(&pos);
        out.extend((0..pos_out - n_pos).map(|_| pos[rng.random_range(0..n_pos)]));
    }
    out.extend(neg.choose_multiple(&mut rng, neg_out).copied());
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn six_singletons_three_folds() {
        let patients = ids(6);
        let labels = [1, 1, 1, 0, 0, 0];
        for seed in 0..20 {
            let (folds, report) = stratified_group_kfold(&patients, &labels, 3, seed).unwrap();
            for f in &folds {
                let pos = f
                    .validation_patients
                    .iter()
                    .filter(|p| labels[p[1..].parse::<usize>().unwrap()] == 1)
                    .count();
                assert_eq!((pos, f.validation_patients.len()), (1, 2), "seed {seed}");
            }
            assert_eq!(report.max_relative_deviation, 0.0);
        }
    }

    #[test]
    fn one_patient_holds_every_positive() {
        let mut patients = vec!["sick".to_string(); 4];
        patients.extend(ids(8));
        let mut labels = vec![1u8; 4];
        labels.extend([0u8; 8]);
        let (folds, report) = stratified_group_kfold(&patients, &labels, 3, 1).unwrap();
        let holding: Vec<_> = folds
            .iter()
            .filter(|f| f.validation_patients.contains("sick"))
            .collect();
        assert_eq!(holding.len(), 1);
        assert_eq!(report.positive_free_folds.len(), 2);
        assert!(!report.positive_free_folds.contains(&holding[0].fold));
    }

    #[test]
    fn too_few_patients() {
        let err = stratified_group_kfold(&ids(2), &[0, 1], 3, 0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(matches!(
            stratified_group_kfold(&ids(4), &[0, 1, 0, 1], 1, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn plan_json_round_trip() {
        let patients: Vec<String> = (0..30).map(|i| format!("p{}", i / 2)).collect();
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i % 5 == 0)).collect();
        let plan = FoldPlan::build(&patients, &labels, 5, &[0, 1, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        let back = FoldPlan::load(&path).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.hash(), plan.hash());
        assert_eq!(plan.assignments().len(), 15);
    }

    #[test]
    fn rebalance_cap_example() {
        let labels: Vec<u8> = (0..1010).map(|i| u8::from(i < 10)).collect();
        let rows: Vec<usize> = (0..1010).collect();
        let out = rebalance(&labels, &rows, 1.0, 20, 3).unwrap();
        let pos = out.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!((pos, out.len() - pos), (200, 200));
        let negs: BTreeSet<usize> = out.iter().copied().filter(|&i| labels[i] == 0).collect();
        assert_eq!(negs.len(), 200);
        let originals: BTreeSet<usize> = out.iter().copied().filter(|&i| i < 10).collect();
        assert_eq!(originals.len(), 10);
    }

    #[test]
    fn rebalance_balanced_is_permutation() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 2 == 0)).collect();
        let rows: Vec<usize> = (0..100).collect();
        let mut out = rebalance(&labels, &rows, 1.0, 20, 9).unwrap();
        out.sort_unstable();
        assert_eq!(out, rows);
    }

    #[test]
    fn rebalance_missing_class() {
        let labels = [0u8, 0, 0];
        let err = rebalance(&labels, &[0, 1, 2], 1.0, 20, 0).unwrap_err();
        assert!(matches!(&err, Error::Sampling(m) if m.contains("positive")));
        let err = rebalance(&[1u8, 1], &[0, 1], 1.0, 20, 0).unwrap_err();
        assert!(matches!(&err, Error::Sampling(m) if m.contains("negative")));
    }

    #[test]
    fn rebalance_positive_majority() {
        let labels: Vec<u8> = (0..110).map(|i| u8::from(i >= 10)).collect();
        let rows: Vec<usize> = (0..110).collect();
        let out = rebalance(&labels, &rows, 1.0, 20, 0).unwrap();
        let pos = out.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!((pos, out.len() - pos), (10, 10));
    }
}
