//! Imputation, outlier winsorization, standardization and fold construction.
//!
//! Every statistic is fitted on an explicit row set and then applied to the
//! whole dataset, so callers decide which rows may inform the fit.

use serde::{Deserialize, Serialize};

use crate::dataio::{TabularDataset, UNKNOWN_LEVEL};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

/// Default winsorization threshold in standard deviations.
pub const DEFAULT_ZMAX: f64 = 4.0;

/// Share of all records placed in each fold's validation split.
pub const VALIDATION_FRACTION: f64 = 0.1;

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub numeric_fill: Vec<f64>,
    pub categorical_fill: Vec<u32>,
}

impl ImputeStats {
    /// Medians (numeric) and modes (categorical) over the observed cells of `rows`.
    pub fn fit(ds: &TabularDataset, rows: &[usize]) -> Result<Self> {
        let p = ds.numeric.cols();
        let mut unusable = Vec::new();
        let mut numeric_fill = Vec::with_capacity(p);
        for j in 0..p {
            let mut observed: Vec<f64> = rows
                .iter()
                .filter(|&&r| !ds.is_missing(r, j))
                .map(|&r| ds.numeric[(r, j)])
                .collect();
            if observed.is_empty() {
                unusable.push(ds.numeric_names[j].clone());
                numeric_fill.push(0.0);
                continue;
            }
            numeric_fill.push(median(&mut observed));
        }
        let mut categorical_fill = Vec::with_capacity(ds.categorical.len());
        for col in &ds.categorical {
            let mut counts = vec![0usize; col.levels.len()];
            for &r in rows {
                if !col.missing[r] && col.codes[r] != UNKNOWN_LEVEL {
                    counts[col.codes[r] as usize] += 1;
                }
            }
            // max_by_key keeps the last maximum; scan reversed so ties go to the lowest code.
            match counts.iter().enumerate().rev().filter(|(_, &c)| c > 0).max_by_key(|(_, &c)| c) {
                Some((code, _)) => categorical_fill.push(code as u32),
                None => {
                    unusable.push(col.name.clone());
                    categorical_fill.push(UNKNOWN_LEVEL);
                }
            }
        }
        if !unusable.is_empty() {
            return Err(Error::UnusableColumns(unusable));
        }
        Ok(ImputeStats {
            numeric_fill,
            categorical_fill,
        })
    }

    pub fn apply(&self, ds: &TabularDataset) -> TabularDataset {
        let mut out = ds.clone();
        let p = out.numeric.cols();
        for r in 0..out.n() {
            for j in 0..p {
                if out.numeric_missing[r * p + j] {
                    out.numeric[(r, j)] = self.numeric_fill[j];
                    out.numeric_missing[r * p + j] = false;
                }
            }
        }
        for (col, &fill) in out.categorical.iter_mut().zip(&self.categorical_fill) {
            for r in 0..col.codes.len() {
                if col.missing[r] {
                    col.codes[r] = fill;
                    col.missing[r] = false;
                }
            }
        }
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median/mode imputation fitted on every row.
pub fn impute(ds: &TabularDataset) -> Result<TabularDataset> {
    Ok(ImputeStats::fit(ds, &all_rows(ds.n()))?.apply(ds))
}

/// Per-column clipping interval `mean ± zmax·sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OutlierBounds {
    pub fn fit(ds: &TabularDataset, rows: &[usize], zmax: f64) -> Result<Self> {
        if !(zmax > 0.0) {
            return Err(Error::param(format!("zmax must be > 0, got {zmax}")));
        }
        if ds.numeric_missing.iter().any(|&m| m) {
            return Err(Error::param("outlier clipping requires imputed numeric columns"));
        }
        let stats = StandardizeStats::fit(&ds.numeric, rows)?;
        Ok(OutlierBounds {
            lower: stats.mean.iter().zip(&stats.sd).map(|(m, s)| m - zmax * s).collect(),
            upper: stats.mean.iter().zip(&stats.sd).map(|(m, s)| m + zmax * s).collect(),
        })
    }

    pub fn apply(&self, ds: &TabularDataset) -> TabularDataset {
        let mut out = ds.clone();
        let p = out.numeric.cols();
        for r in 0..out.n() {
            for j in 0..p {
                let v = &mut out.numeric[(r, j)];
                *v = v.clamp(self.lower[j], self.upper[j]);
            }
        }
        out
    }
}

/// Winsorizes entries with |z| > `zmax`, statistics over every row.
pub fn clip_outliers(ds: &TabularDataset, zmax: f64) -> Result<TabularDataset> {
    Ok(OutlierBounds::fit(ds, &all_rows(ds.n()), zmax)?.apply(ds))
}

/// Column means and population standard deviations.
///
/// Applying the same stats twice is not idempotent: the second application
/// still subtracts the original means and divides by the original sds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardizeStats {
    pub fn fit(m: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::param("cannot fit standardization on an empty row set"));
        }
        let p = m.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for &r in rows {
            for (acc, &v) in mean.iter_mut().zip(m.row(r)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; p];
        for &r in rows {
            for ((acc, &v), &mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let sd = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(StandardizeStats { mean, sd })
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.mean.len() {
            return Err(Error::shape("standardize", m.shape(), (1, self.mean.len())));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if self.is_constant(j) {
                    0.0
                } else {
                    (*v - self.mean[j]) / self.sd[j]
                };
            }
        }
        Ok(out)
    }

    /// Undoes [`apply`](Self::apply). Constant columns come back as their mean.
    pub fn inverse(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.mean.len() {
            return Err(Error::shape("inverse standardize", m.shape(), (1, self.mean.len())));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if self.is_constant(j) {
                    self.mean[j]
                } else {
                    *v * self.sd[j] + self.mean[j]
                };
            }
        }
        Ok(out)
    }
}

pub fn fit_standardize(ds: &TabularDataset, rows: &[usize]) -> Result<StandardizeStats> {
    StandardizeStats::fit(&ds.numeric, rows)
}

pub fn apply_standardize(ds: &TabularDataset, stats: &StandardizeStats) -> Result<TabularDataset> {
    let mut out = ds.clone();
    out.numeric = stats.apply(&ds.numeric)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Shuffles `0..n` and cuts it into `k` test folds whose sizes differ by at
/// most one. The validation split is the `round(0.1·n)` records that follow
/// the test block in shuffled order (wrapping), and the rest is training.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::param(format!("fold count must be ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::param(format!("cannot make {k} folds from {n} records")));
    }
    let perm = RngStream::new(seed).permutation(n);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test: Vec<usize> = perm[start..start + size].to_vec();
        let rest = n - size;
        let mut n_val = (n as f64 * VALIDATION_FRACTION).round() as usize;
        if rest >= 2 {
            n_val = n_val.clamp(1, rest - 1);
        } else {
            n_val = 0;
        }
        let remaining: Vec<usize> = (0..rest).map(|i| perm[(start + size + i) % n]).collect();
        let validation = remaining[..n_val].to_vec();
        let train = remaining[n_val..].to_vec();
        folds.push(Fold {
            train,
            validation,
            test,
        });
        start += size;
    }
    Ok(FoldPlan { n, k, seed, folds })
}

impl FoldPlan {
    /// Line-oriented manifest: a header line, then one line per split.
    pub fn to_manifest(&self) -> String {
        let mut out = format!("folds n={} k={} seed={}\n", self.n, self.k, self.seed);
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        for (f, fold) in self.folds.iter().enumerate() {
            out.push_str(&format!("{f} train: {}\n", join(&fold.train)));
            out.push_str(&format!("{f} validation: {}\n", join(&fold.validation)));
            out.push_str(&format!("{f} test: {}\n", join(&fold.test)));
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("fold manifest: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let mut fields = header.strip_prefix("folds ").ok_or_else(|| bad("missing header"))?.split(' ');
        let mut field = |name: &str| -> Result<u64> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(name))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("bad header field {name}")))
        };
        let n = field("n=")? as usize;
        let k = field("k=")? as usize;
        let seed = field("seed=")?;
        let mut folds = vec![
            Fold {
                train: vec![],
                validation: vec![],
                test: vec![]
            };
            k
        ];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (head, body) = line.split_once(':').ok_or_else(|| bad("missing ':'"))?;
            let (f, split) = head.split_once(' ').ok_or_else(|| bad("bad split label"))?;
            let f: usize = f.parse().map_err(|_| bad("bad fold index"))?;
            let idx = body
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad index"))?;
            let fold = folds.get_mut(f).ok_or_else(|| bad("fold index out of range"))?;
            match split {
                "train" => fold.train = idx,
                "validation" => fold.validation = idx,
                "test" => fold.test = idx,
                _ => return Err(bad("unknown split")),
            }
        }
        Ok(FoldPlan { n, k, seed, folds })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{read_csv, FeatureSchema};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn dataset(csv: &str, categorical: &[&str]) -> TabularDataset {
        let header: Vec<String> = csv.lines().next().unwrap().split(',').map(String::from).collect();
        let cats: Vec<String> = categorical.iter().map(|s| s.to_string()).collect();
        let schema = FeatureSchema::from_header(&header, "y", &cats, &["NA".into()]).unwrap();
        read_csv(csv.as_bytes(), &schema).unwrap()
    }

    #[test]
    fn impute_median_and_mode() {
        let ds = dataset("a,c,y\n1,u,0\nNA,v,0\n3,v,0\nNA,NA,0\n", &["c"]);
        let out = impute(&ds).unwrap();
        assert_eq!(out.numeric.col_values(0), vec![1.0, 2.0, 3.0, 2.0]);
        assert_eq!(out.categorical[0].codes, vec![0, 1, 1, 1]);
        assert_eq!(out.missing_count(), 0);
    }

    #[test]
    fn mode_ties_go_to_lowest_code() {
        let ds = dataset("c,y\nu,0\nv,0\nNA,0\n", &["c"]);
        assert_eq!(impute(&ds).unwrap().categorical[0].codes[2], 0);
    }

    #[test]
    fn impute_without_missing_is_identity() {
        let ds = dataset("a,b,y\n1,2,0\n3,4,1\n", &[]);
        assert_eq!(impute(&ds).unwrap(), ds);
    }

    #[test]
    fn fully_missing_column_is_unusable() {
        let ds = dataset("a,b,y\nNA,2,0\nNA,4,1\n", &[]);
        match impute(&ds) {
            Err(Error::UnusableColumns(cols)) => assert_eq!(cols, vec!["a".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn impute_uses_only_fit_rows() {
        let ds = dataset("a,y\n1,0\n100,0\nNA,0\n", &[]);
        let stats = ImputeStats::fit(&ds, &[0, 2]).unwrap();
        assert_eq!(stats.numeric_fill, vec![1.0]);
    }

    #[test]
    fn clip_leaves_inliers_alone() {
        let ds = dataset("a,y\n1,0\n2,0\n3,0\n", &[]);
        assert_eq!(clip_outliers(&ds, 4.0).unwrap(), ds);
    }

    #[test]
    fn clip_winsorizes_to_bound() {
        let ds = dataset("a,y\n0,0\n0,0\n0,0\n0,0\n100,0\n", &[]);
        // mean 20, population sd 40, bound 20 + 2·40
        let out = clip_outliers(&ds, 2.0).unwrap();
        assert_eq!(out.numeric[(4, 0)], 20.0 + 2.0 * 40.0);
        let tight = clip_outliers(&ds, 1.0).unwrap();
        assert_eq!(tight.numeric[(4, 0)], 60.0);
        assert_eq!(tight.numeric[(0, 0)], 0.0);
    }

    #[test]
    fn clip_rejects_nonpositive_zmax() {
        let ds = dataset("a,y\n1,0\n", &[]);
        assert!(matches!(clip_outliers(&ds, 0.0), Err(Error::Param(_))));
    }

    #[test]
    fn standardize_hand_computed() {
        let m = Matrix::from_rows(&[[2.0, 5.0], [4.0, 5.0]]).unwrap();
        let stats = StandardizeStats::fit(&m, &[0, 1]).unwrap();
        assert_eq!(stats.mean, vec![3.0, 5.0]);
        assert_eq!(stats.sd, vec![1.0, 0.0]);
        assert!(stats.is_constant(1));
        let applied = stats.apply(&m).unwrap();
        assert_eq!(applied.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        // applying again re-uses the original stats
        let twice = stats.apply(&applied).unwrap();
        assert_eq!(twice.as_slice(), &[-4.0, 0.0, -2.0, 0.0]);
    }

    #[test]
    fn standardize_empty_rows_errors() {
        assert!(matches!(StandardizeStats::fit(&Matrix::zeros(2, 2), &[]), Err(Error::Param(_))));
    }

    #[test]
    fn standardized_train_rows_have_unit_moments() {
        let mut rng = RngStream::new(2);
        let m = rng
            .sample(crate::numkit::Distribution::Gaussian { mean: 3.0, sd: 7.0 }, 50, 4)
            .unwrap();
        let rows: Vec<usize> = (0..30).collect();
        let z = StandardizeStats::fit(&m, &rows).unwrap().apply(&m).unwrap().select_rows(&rows);
        for j in 0..4 {
            let (mu, sd) = crate::numkit::mean_sd(&z.col_values(j));
            assert!(mu.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn folds_for_hundred_records() {
        let plan = make_folds(100, 5, 7).unwrap();
        let mut all_test = Vec::new();
        for fold in &plan.folds {
            assert_eq!((fold.test.len(), fold.validation.len(), fold.train.len()), (20, 10, 70));
            all_test.extend(fold.test.iter().copied());
        }
        all_test.sort_unstable();
        assert_eq!(all_test, (0..100).collect::<Vec<_>>());
        assert_eq!(plan, make_folds(100, 5, 7).unwrap());
    }

    #[test]
    fn folds_reject_bad_sizes() {
        assert!(matches!(make_folds(3, 5, 0), Err(Error::Param(_))));
        assert!(matches!(make_folds(10, 1, 0), Err(Error::Param(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let plan = make_folds(23, 4, 99).unwrap();
        assert_eq!(FoldPlan::from_manifest(&plan.to_manifest()).unwrap(), plan);
    }

    proptest! {
        #[test]
        fn standardize_inverse_recovers(vals in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let m = Matrix::from_vec(4, 3, vals).unwrap();
            let stats = StandardizeStats::fit(&m, &[0, 1, 2, 3]).unwrap();
            let back = stats.inverse(&stats.apply(&m).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&m) < 1e-9);
        }

        #[test]
        fn fold_partition_properties(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let plan = make_folds(n, k, seed).unwrap();
            let mut seen_test = HashSet::new();
            for fold in &plan.folds {
                let sets = [&fold.train, &fold.validation, &fold.test];
                let total: usize = sets.iter().map(|s| s.len()).sum();
                let union: HashSet<usize> = sets.iter().flat_map(|s| s.iter().copied()).collect();
                prop_assert_eq!(total, n);
                prop_assert_eq!(union.len(), n);
                prop_assert!(fold.test.len() == n / k || fold.test.len() == n.div_ceil(k));
                for &t in &fold.test {
                    prop_assert!(seen_test.insert(t));
                }
            }
            prop_assert_eq!(seen_test.len(), n);
        }
    }
}
