//! Feature scaling fitted on training rows only, one-hot expansion of
//! categorical features and per-class distribution summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Feature, FeatureKind};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMethod {
    /// `(x - mean) / sd`
    Standardize,
    /// `(x - min) / (max - min)`
    MinMax,
    /// `(x - mean) / (max - min)`
    MeanNorm,
}

impl std::str::FromStr for ScalerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standardize" => Ok(ScalerMethod::Standardize),
            "minmax" => Ok(ScalerMethod::MinMax),
            "meannorm" => Ok(ScalerMethod::MeanNorm),
            other => Err(Error::InvalidParameter(format!("unknown scaler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub features: Vec<String>,
    pub rows: usize,
}

/// Statistics of every continuous feature of the data it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub method: ScalerMethod,
    pub columns: Vec<ColumnStats>,
    pub fitted_on: Fingerprint,
}

impl ScalerParams {
    pub fn constant_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.constant)
            .map(|c| c.name.as_str())
            .collect()
    }

    fn transform(&self, c: &ColumnStats, x: f64) -> f64 {
        if c.constant {
            return 0.0;
        }
        match self.method {
            ScalerMethod::Standardize => (x - c.mean) / c.sd,
            ScalerMethod::MinMax => (x - c.min) / (c.max - c.min),
            ScalerMethod::MeanNorm => (x - c.mean) / (c.max - c.min),
        }
    }

    fn inverse(&self, c: &ColumnStats, z: f64) -> f64 {
        if c.constant {
            return c.mean;
        }
        match self.method {
            ScalerMethod::Standardize => z * c.sd + c.mean,
            ScalerMethod::MinMax => z * (c.max - c.min) + c.min,
            ScalerMethod::MeanNorm => z * (c.max - c.min) + c.mean,
        }
    }

    fn map(&self, ds: &Dataset, f: impl Fn(&ColumnStats, f64) -> f64) -> Result<Dataset> {
        let idx = self
            .columns
            .iter()
            .map(|c| {
                ds.feature_index(&c.name).map_err(|_| {
                    Error::FeatureMismatch(format!("scaled feature `{}` absent from data", c.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = ds.n_features();
        let mut values = ds.values().to_vec();
        for i in 0..ds.rows() {
            for (c, &j) in self.columns.iter().zip(&idx) {
                let cell = &mut values[i * k + j];
                *cell = f(c, *cell);
            }
        }
        ds.with_features(ds.features().to_vec(), values)
    }

    /// Undoes [`apply_scaler`]; constant columns come back as their mean.
    pub fn unscale(&self, ds: &Dataset) -> Result<Dataset> {
        self.map(ds, |c, z| self.inverse(c, z))
    }
}

/// Fits scaling statistics (sample sd with the n-1 denominator) on the
/// continuous features of `train`. Constant columns are flagged, not fatal.
pub fn fit_scaler(train: &Dataset, method: ScalerMethod) -> Result<ScalerParams> {
    if train.rows() == 0 {
        return Err(Error::Empty("scaler training data".into()));
    }
    let columns = train
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FeatureKind::Continuous)
        .map(|(j, f)| {
            let col = train.column(j);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sd = sample_sd(&col);
            ColumnStats {
                name: f.name.clone(),
                mean: mean(&col),
                sd,
                min,
                max,
                constant: max == min || sd == 0.0,
            }
        })
        .collect();
    Ok(ScalerParams {
        method,
        columns,
        fitted_on: Fingerprint {
            features: train.feature_names(),
            rows: train.rows(),
        },
    })
}

/// Rescales the fitted features of `ds` using only `params`.
pub fn apply_scaler(ds: &Dataset, params: &ScalerParams) -> Result<Dataset> {
    params.map(ds, |c, x| params.transform(c, x))
}

/// Replaces a categorical feature with one binary `feature=level` column per
/// level, in place. All levels are kept (no reference level).
pub fn one_hot(ds: &Dataset, feature: &str) -> Result<Dataset> {
    let j = ds.feature_index(feature)?;
    let f = &ds.features()[j];
    if f.kind != FeatureKind::Categorical {
        return Err(Error::InvalidParameter(format!(
            "feature `{feature}` is {}, not categorical",
            f.kind.as_str()
        )));
    }
    let levels: Vec<String> = if f.levels.is_empty() {
        let max = ds.column(j).iter().copied().fold(0.0, f64::max) as usize;
        (0..=max).map(|l| l.to_string()).collect()
    } else {
        f.levels.clone()
    };
    if levels.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "feature `{feature}` has fewer than 2 levels"
        )));
    }
    let l = levels.len();
    let mut features: Vec<Feature> = Vec::with_capacity(ds.n_features() + l - 1);
    features.extend_from_slice(&ds.features()[..j]);
    features.extend(levels.iter().map(|lv| Feature::binary(format!("{feature}={lv}"))));
    features.extend_from_slice(&ds.features()[j + 1..]);
    let mut values = Vec::with_capacity(ds.rows() * features.len());
    for i in 0..ds.rows() {
        let r = ds.row(i);
        values.extend_from_slice(&r[..j]);
        let level = r[j] as usize;
        values.extend((0..l).map(|k| if k == level { 1.0 } else { 0.0 }));
        values.extend_from_slice(&r[j + 1..]);
    }
    ds.with_features(features, values)
}

/// Expands every categorical feature.
pub fn one_hot_all(ds: &Dataset) -> Result<Dataset> {
    let names: Vec<String> = ds
        .features()
        .iter()
        .filter(|f| f.kind == FeatureKind::Categorical)
        .map(|f| f.name.clone())
        .collect();
    names.iter().try_fold(ds.clone(), |acc, n| one_hot(&acc, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub feature: String,
    pub class: u8,
    pub mean: f64,
    pub sd: f64,
    /// 10th..90th percentiles (linear interpolation between order statistics).
    pub deciles: [f64; 9],
}

/// Per-feature, per-class mean, sd and deciles. Classes with no rows are
/// omitted.
pub fn conditional_summary(ds: &Dataset, label: &str) -> Result<Vec<SummaryRow>> {
    let y = ds.label(label)?;
    let mut out = Vec::new();
    for (j, f) in ds.features().iter().enumerate() {
        for class in [0u8, 1] {
            let mut col: Vec<f64> = (0..ds.rows())
                .filter(|&i| y[i] == class)
                .map(|i| ds.value(i, j))
                .collect();
            if col.is_empty() {
                continue;
            }
            let m = mean(&col);
            let sd = sample_sd(&col);
            col.sort_by(f64::total_cmp);
            let mut deciles = [0.0; 9];
            for (d, slot) in deciles.iter_mut().enumerate() {
                *slot = quantile_sorted(&col, (d + 1) as f64 / 10.0);
            }
            out.push(SummaryRow {
                feature: f.name.clone(),
                class,
                mean: m,
                sd,
                deciles,
            });
        }
    }
    Ok(out)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("feature,class,mean,sd,d10,d20,d30,d40,d50,d60,d70,d80,d90\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{}", r.feature, r.class, r.mean, r.sd));
        for d in r.deciles {
            text.push_str(&format!(",{d}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_col(v: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = v.iter().map(|&x| vec![x]).collect();
        Dataset::from_rows(&["x"], &rows).unwrap()
    }

    #[test]
    fn standardize_stats_and_values() {
        let ds = one_col(&[1.0, 2.0, 3.0]);
        let p = fit_scaler(&ds, ScalerMethod::Standardize).unwrap();
        assert_eq!(p.columns[0].mean, 2.0);
        assert_eq!(p.columns[0].sd, 1.0);
        assert_eq!(apply_scaler(&ds, &p).unwrap().column(0), vec![-1.0, 0.0, 1.0]);
        // train-fitted params applied to a test value, not refitted
        assert_eq!(apply_scaler(&one_col(&[4.0]), &p).unwrap().column(0), vec![2.0]);
    }

    #[test]
    fn minmax_and_meannorm() {
        let ds = one_col(&[2.0, 4.0, 6.0]);
        let p = fit_scaler(&ds, ScalerMethod::MinMax).unwrap();
        assert_eq!((p.columns[0].min, p.columns[0].max), (2.0, 6.0));
        assert_eq!(apply_scaler(&ds, &p).unwrap().column(0), vec![0.0, 0.5, 1.0]);
        let p = fit_scaler(&ds, ScalerMethod::MeanNorm).unwrap();
        assert_eq!(apply_scaler(&ds, &p).unwrap().column(0), vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn constant_column_flagged_and_zeroed() {
        let ds = one_col(&[5.0, 5.0, 5.0]);
        for m in [ScalerMethod::Standardize, ScalerMethod::MinMax, ScalerMethod::MeanNorm] {
            let p = fit_scaler(&ds, m).unwrap();
            assert_eq!(p.constant_columns(), vec!["x"]);
            assert_eq!(p.columns[0].sd, 0.0);
            assert_eq!(apply_scaler(&ds, &p).unwrap().column(0), vec![0.0; 3]);
        }
    }

    #[test]
    fn missing_feature_is_error() {
        let p = fit_scaler(&one_col(&[1.0, 2.0]), ScalerMethod::Standardize).unwrap();
        let other = Dataset::from_rows(&["z"], &[vec![1.0]]).unwrap();
        assert!(matches!(apply_scaler(&other, &p), Err(Error::FeatureMismatch(_))));
    }

    #[test]
    fn only_continuous_features_scaled() {
        let ds = Dataset::new(
            vec![Feature::continuous("x"), Feature::binary("b")],
            vec![1.0, 0.0, 3.0, 1.0],
            2,
            Default::default(),
        )
        .unwrap();
        let p = fit_scaler(&ds, ScalerMethod::Standardize).unwrap();
        assert_eq!(p.columns.len(), 1);
        assert_eq!(apply_scaler(&ds, &p).unwrap().column(1), vec![0.0, 1.0]);
    }

    fn categorical(levels: &[&str], cells: &[f64]) -> Dataset {
        Dataset::new(
            vec![
                Feature::continuous("a"),
                Feature::categorical("c", levels.iter().map(|s| s.to_string()).collect()),
            ],
            cells.iter().flat_map(|&c| [7.0, c]).collect(),
            cells.len(),
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn one_hot_three_levels() {
        let ds = categorical(&["A", "B", "C"], &[1.0, 0.0, 2.0]);
        let oh = one_hot(&ds, "c").unwrap();
        assert_eq!(oh.feature_names(), vec!["a", "c=A", "c=B", "c=C"]);
        assert_eq!(oh.row(0), &[7.0, 0.0, 1.0, 0.0]);
        assert_eq!(oh.rows(), 3);
        assert_eq!(oh.n_features(), ds.n_features() + 2);
        for i in 0..oh.rows() {
            assert_eq!(oh.row(i)[1..].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn one_hot_two_levels_keeps_both() {
        let oh = one_hot(&categorical(&["x", "y"], &[0.0, 1.0]), "c").unwrap();
        assert_eq!(oh.n_features(), 3);
        assert!(matches!(one_hot(&oh, "a"), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn summary_cases() {
        let ds = one_col(&[1.0, 2.0, 3.0, 4.0])
            .with_label("y", vec![0, 0, 0, 0])
            .unwrap();
        let s = conditional_summary(&ds, "y").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].class, 0);
        assert!(conditional_summary(&ds, "nope").is_err());

        // feature equal to the label
        let y = vec![0u8, 1, 1, 0, 1];
        let rows: Vec<Vec<f64>> = y.iter().map(|&v| vec![v as f64, 3.0]).collect();
        let ds = Dataset::from_rows(&["f", "same"], &rows)
            .unwrap()
            .with_label("y", y)
            .unwrap();
        let s = conditional_summary(&ds, "y").unwrap();
        assert_eq!((s[0].mean, s[1].mean), (0.0, 1.0));
        assert!((s[2].mean - s[3].mean).abs() < 1e-12);
        assert_eq!(s[0].deciles, [0.0; 9]);
    }

    proptest! {
        #[test]
        fn scale_roundtrip_and_moments(v in proptest::collection::vec(-1e3f64..1e3, 3..60)) {
            let ds = one_col(&v);
            for m in [ScalerMethod::Standardize, ScalerMethod::MinMax, ScalerMethod::MeanNorm] {
                let p = fit_scaler(&ds, m).unwrap();
                let scaled = apply_scaler(&ds, &p).unwrap();
                if !p.columns[0].constant {
                    let back = p.unscale(&scaled).unwrap();
                    for (a, b) in back.column(0).iter().zip(&v) {
                        prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
                    }
                    if m == ScalerMethod::Standardize {
                        let col = scaled.column(0);
                        prop_assert!(mean(&col).abs() < 1e-10);
                        prop_assert!((sample_sd(&col) - 1.0).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
