//! Quantile binning of feature columns.

use crate::{Error, Result};

pub const MISSING_BIN: u16 = u16::MAX;

/// Column-major bin indices plus, per feature, the ascending split
/// thresholds. A value `x` falls in bin `#{t : t < x}`, so `x <= t_b`
/// exactly when its bin is at most `b`. Thresholds are midpoints between
/// observed values, which keeps binned and raw routing identical on the
/// training rows.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_features: usize,
    pub bins: Vec<u16>,
    pub thresholds: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    /// `values` is row-major with `n_features` columns.
    pub fn build(values: &[f64], n_features: usize, n_bins: usize) -> Result<Self> {
        if !(2..=256).contains(&n_bins) {
            return Err(Error::Parameter(format!("n_bins {n_bins} outside [2, 256]")));
        }
        let n_rows = values.len().checked_div(n_features).unwrap_or(0);
        if let Some(v) = values.iter().find(|v| v.is_infinite()) {
            return Err(Error::Data(format!("non-finite feature value {v}")));
        }
        let mut bins = vec![0u16; n_rows * n_features];
        let mut thresholds = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let column: Vec<f64> = (0..n_rows).map(|i| values[i * n_features + f]).collect();
            let cuts = quantile_cuts(&column, n_bins);
            for (i, &v) in column.iter().enumerate() {
                bins[f * n_rows + i] = bin_of(&cuts, v);
            }
            thresholds.push(cuts);
        }
        Ok(Self {
            n_rows,
            n_features,
            bins,
            thresholds,
        })
    }

    pub fn feature_bins(&self, f: usize) -> &[u16] {
        &self.bins[f * self.n_rows..(f + 1) * self.n_rows]
    }

    /// Number of non-missing bins of feature `f`.
    pub fn n_bins(&self, f: usize) -> usize {
        self.thresholds[f].len() + 1
    }
}

pub fn bin_of(cuts: &[f64], v: f64) -> u16 {
    if v.is_nan() {
        MISSING_BIN
    } else {
        cuts.partition_point(|&t| t < v) as u16
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// At most `n_bins - 1` cut points. With few distinct values every gap
/// between consecutive values gets a cut; otherwise cuts follow equal-count
/// quantiles of the non-missing values.
pub fn quantile_cuts(column: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted.iter().copied() {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= n_bins {
        return distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let total = sorted.len() as f64;
    let per_bin = total / n_bins as f64;
    let mut cuts = Vec::with_capacity(n_bins - 1);
    let mut cumulative = 0usize;
    let mut next = 1usize;
    for k in 0..distinct.len() - 1 {
        cumulative += distinct[k].1;
        if cumulative as f64 >= per_bin * next as f64 {
            cuts.push(midpoint(distinct[k].0, distinct[k + 1].0));
            next = (cumulative as f64 / per_bin).floor() as usize + 1;
            if cuts.len() == n_bins - 1 {
                break;
            }
        }
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_every_gap() {
        let cuts = quantile_cuts(&[3.0, 1.0, 2.0, 2.0, f64::NAN], 255);
        assert_eq!(cuts, vec![1.5, 2.5]);
        assert_eq!(bin_of(&cuts, 1.0), 0);
        assert_eq!(bin_of(&cuts, 2.0), 1);
        assert_eq!(bin_of(&cuts, 3.0), 2);
        assert_eq!(bin_of(&cuts, f64::NAN), MISSING_BIN);
    }

    #[test]
    fn many_values_respect_bin_budget() {
        let col: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        for n_bins in [2, 16, 255] {
            let cuts = quantile_cuts(&col, n_bins);
            assert!(cuts.len() < n_bins && !cuts.is_empty());
            assert!(cuts.windows(2).all(|w| w[0] < w[1]));
            let mut counts = vec![0usize; cuts.len() + 1];
            for &v in &col {
                counts[bin_of(&cuts, v) as usize] += 1;
            }
            let expected = 1000 / n_bins;
            assert!(counts.iter().all(|&c| c <= 2 * expected + 1), "{n_bins}: {counts:?}");
        }
    }

    #[test]
    fn threshold_routing_matches_bins() {
        let col = [0.1, 0.1, 0.7, 5.0, -2.0, 3.3];
        let cuts = quantile_cuts(&col, 4);
        for (b, &t) in cuts.iter().enumerate() {
            for &v in &col {
                assert_eq!(v <= t, (bin_of(&cuts, v) as usize) <= b);
            }
        }
    }

    #[test]
    fn bin_count_validation() {
        assert!(matches!(BinnedMatrix::build(&[1.0], 1, 1), Err(Error::Parameter(_))));
        assert!(matches!(BinnedMatrix::build(&[1.0], 1, 257), Err(Error::Parameter(_))));
        assert!(matches!(
            BinnedMatrix::build(&[f64::INFINITY], 1, 8),
            Err(Error::Data(_))
        ));
    }
}
