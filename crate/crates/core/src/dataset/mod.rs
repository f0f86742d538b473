//! Tabular feature data: the in-memory [`Dataset`], CSV loading against a
//! column schema, a seeded synthetic generator and stratified splitting.

mod csv_io;
mod schema;
mod split;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, write_csv, MissingPolicy};
pub use schema::{ColumnKind, Schema};
pub use split::{stratified_split, SplitPair};
pub(crate) use split::stratified_indices;
pub use synth::{synth_generate, Signal, SynthFeature, SynthSpec, AUTOENCODER_FEATURES, RARE_ANOMALY_SHIFT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
    Binary,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Categorical => "categorical",
            FeatureKind::Binary => "binary",
        }
    }
}

/// A named column. Categorical features carry their level strings; cells
/// hold the level index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous,
            levels: Vec::new(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Binary,
            levels: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical,
            levels,
        }
    }
}

/// Row-major feature matrix with named binary outcome vectors.
///
/// Immutable once built; every transformation returns a new dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    features: Vec<Feature>,
    values: Vec<f64>,
    labels: BTreeMap<String, Vec<u8>>,
}

impl Dataset {
    pub fn new(
        features: Vec<Feature>,
        values: Vec<f64>,
        rows: usize,
        labels: BTreeMap<String, Vec<u8>>,
    ) -> Result<Self> {
        if values.len() != rows * features.len() {
            return Err(Error::Shape(format!(
                "{} cells for {} rows x {} features",
                values.len(),
                rows,
                features.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        for (name, y) in &labels {
            if y.len() != rows {
                return Err(Error::Shape(format!(
                    "label `{name}` has {} entries for {rows} rows",
                    y.len()
                )));
            }
            if y.iter().any(|&v| v > 1) {
                return Err(Error::NonBinaryLabel(name.clone()));
            }
        }
        let k = features.len();
        for (j, f) in features.iter().enumerate() {
            for i in 0..rows {
                let v = values[i * k + j];
                let ok = match f.kind {
                    FeatureKind::Continuous => v.is_finite(),
                    FeatureKind::Binary => v == 0.0 || v == 1.0,
                    FeatureKind::Categorical => {
                        v >= 0.0
                            && v.fract() == 0.0
                            && (f.levels.is_empty() || (v as usize) < f.levels.len())
                    }
                };
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "invalid {} cell {v} at row {i}, feature `{}`",
                        f.kind.as_str(),
                        f.name
                    )));
                }
            }
        }
        Ok(Dataset {
            rows,
            features,
            values,
            labels,
        })
    }

    /// Builds a dataset of continuous features from row vectors.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * names.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != names.len() {
                return Err(Error::Shape(format!(
                    "row {i} has {} cells, expected {}",
                    r.len(),
                    names.len()
                )));
            }
            values.extend_from_slice(r);
        }
        let features = names.iter().map(|n| Feature::continuous(*n)).collect();
        Dataset::new(features, values, rows.len(), BTreeMap::new())
    }

    pub fn with_label(mut self, name: impl Into<String>, y: Vec<u8>) -> Result<Self> {
        let name = name.into();
        if y.len() != self.rows {
            return Err(Error::Shape(format!(
                "label `{name}` has {} entries for {} rows",
                y.len(),
                self.rows
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::NonBinaryLabel(name));
        }
        self.labels.insert(name, y);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.features.len();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.features.len() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.value(i, feature)).collect()
    }

    pub fn labels(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Result<&[u8]> {
        self.labels
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn positives(&self, label: &str) -> Result<usize> {
        Ok(self.label(label)?.iter().filter(|&&v| v == 1).count())
    }

    /// New dataset with the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let k = self.features.len();
        let mut values = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .iter()
            .map(|(n, y)| (n.clone(), idx.iter().map(|&i| y[i]).collect()))
            .collect();
        Dataset {
            rows: idx.len(),
            features: self.features.clone(),
            values,
            labels,
        }
    }

    /// New dataset restricted to the named features, in the given order.
    pub fn select_features<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            values.extend(idx.iter().map(|&j| r[j]));
        }
        Dataset::new(
            idx.iter().map(|&j| self.features[j].clone()).collect(),
            values,
            self.rows,
            self.labels.clone(),
        )
    }

    /// Replaces the feature block, keeping rows and labels.
    pub(crate) fn with_features(&self, features: Vec<Feature>, values: Vec<f64>) -> Result<Dataset> {
        Dataset::new(features, values, self.rows, self.labels.clone())
    }

    /// Values of the given rows arranged as a dense matrix over `features`,
    /// looked up by name. Used by models to align inputs with training order.
    pub fn aligned_matrix(&self, features: &[String]) -> Result<Vec<f64>> {
        let idx = features
            .iter()
            .map(|n| {
                self.feature_index(n).map_err(|_| {
                    Error::FeatureMismatch(format!("feature `{n}` absent from input data"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            out.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_rows(&["a", "b"], &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap()
            .with_label("y", vec![0, 1, 0])
            .unwrap()
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Dataset::from_rows(&["a", "a"], &[vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn label_must_be_binary_and_sized() {
        let ds = Dataset::from_rows(&["a"], &[vec![1.0], vec![2.0]]).unwrap();
        assert!(ds.clone().with_label("y", vec![0, 2]).is_err());
        assert!(ds.with_label("y", vec![0]).is_err());
    }

    #[test]
    fn select_rows_and_features() {
        let ds = small();
        let sub = ds.select_rows(&[2, 0]);
        assert_eq!(sub.row(0), &[5.0, 6.0]);
        assert_eq!(sub.label("y").unwrap(), &[0, 0]);
        let cols = ds.select_features(&["b"]).unwrap();
        assert_eq!(cols.column(0), vec![2.0, 4.0, 6.0]);
        assert!(matches!(
            ds.select_features(&["zz"]),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn aligned_matrix_reorders_by_name() {
        let ds = small();
        let m = ds.aligned_matrix(&["b".into(), "a".into()]).unwrap();
        assert_eq!(m, vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0]);
    }
}
