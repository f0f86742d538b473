use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{ColumnKind, Dataset, Feature, FeatureKind, Schema};

/// What to do with empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    Error,
    /// Column mean for continuous features, column mode (lowest level on ties)
    /// for categorical and binary ones. Rows with a missing label are dropped.
    Impute,
}

enum Column {
    Feature {
        kind: FeatureKind,
        levels: Vec<String>,
        fixed: bool,
        cells: Vec<Option<f64>>,
    },
    Label(Vec<Option<u8>>),
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::csv(path, e)
}

/// Reads a comma-separated file whose header names exactly the schema's
/// columns (any order). Rows keep file order; data rows are numbered from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, policy: MissingPolicy) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();

    let mut missing_in_file: Vec<&str> = schema
        .columns()
        .iter()
        .map(|(n, _)| n.as_str())
        .filter(|n| !header.iter().any(|h| h == n))
        .collect();
    let extra: Vec<&str> = header
        .iter()
        .map(String::as_str)
        .filter(|h| schema.get(h).is_none())
        .collect();
    if !missing_in_file.is_empty() || !extra.is_empty() {
        missing_in_file.sort_unstable();
        return Err(Error::SchemaMismatch(format!(
            "columns missing from file: [{}]; columns not in schema: [{}]",
            missing_in_file.join(", "),
            extra.join(", ")
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::SchemaMismatch(format!("duplicate header column `{h}`")));
        }
    }

    let mut columns: Vec<Column> = header
        .iter()
        .map(|h| match schema.get(h).expect("checked above") {
            ColumnKind::Label => Column::Label(Vec::new()),
            ColumnKind::Feature(kind) => Column::Feature {
                kind: *kind,
                levels: Vec::new(),
                fixed: false,
                cells: Vec::new(),
            },
            ColumnKind::CategoricalLevels(levels) => Column::Feature {
                kind: FeatureKind::Categorical,
                levels: levels.clone(),
                fixed: true,
                cells: Vec::new(),
            },
        })
        .collect();

    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            let name = &header[c];
            let non_numeric = || Error::NonNumeric {
                row,
                column: name.clone(),
                value: cell.to_string(),
            };
            match &mut columns[c] {
                Column::Label(cells) => {
                    if cell.is_empty() {
                        cells.push(None);
                        continue;
                    }
                    let v: f64 = cell.parse().map_err(|_| non_numeric())?;
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::NonBinaryLabel(name.clone()));
                    }
                    cells.push(Some(v as u8));
                }
                Column::Feature {
                    kind,
                    levels,
                    fixed,
                    cells,
                } => {
                    if cell.is_empty() {
                        cells.push(None);
                        continue;
                    }
                    let v = match kind {
                        FeatureKind::Continuous | FeatureKind::Binary => {
                            let v: f64 = cell.parse().map_err(|_| non_numeric())?;
                            if !v.is_finite() {
                                return Err(non_numeric());
                            }
                            if *kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                                return Err(non_numeric());
                            }
                            v
                        }
                        FeatureKind::Categorical => match levels.iter().position(|l| l == cell) {
                            Some(p) => p as f64,
                            None if *fixed => {
                                return Err(Error::InvalidParameter(format!(
                                    "unknown level `{cell}` at row {row}, column `{name}`"
                                )))
                            }
                            None => {
                                levels.push(cell.to_string());
                                (levels.len() - 1) as f64
                            }
                        },
                    };
                    cells.push(Some(v));
                }
            }
        }
    }

    let n_read = match columns.first() {
        Some(Column::Feature { cells, .. }) => cells.len(),
        Some(Column::Label(cells)) => cells.len(),
        None => 0,
    };

    // Missing-value pass.
    let mut keep = vec![true; n_read];
    for (c, col) in columns.iter().enumerate() {
        let missing_row = match col {
            Column::Feature { cells, .. } => cells.iter().position(Option::is_none),
            Column::Label(cells) => cells.iter().position(Option::is_none),
        };
        if let Some(i) = missing_row {
            if policy == MissingPolicy::Error {
                return Err(Error::MissingValue {
                    row: i + 1,
                    column: header[c].clone(),
                });
            }
        }
        if let Column::Label(cells) = col {
            for (i, v) in cells.iter().enumerate() {
                if v.is_none() {
                    keep[i] = false;
                }
            }
        }
    }

    let rows = keep.iter().filter(|&&k| k).count();
    let mut features = Vec::new();
    let mut feature_cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = BTreeMap::new();
    for (c, col) in columns.into_iter().enumerate() {
        match col {
            Column::Label(cells) => {
                let y = cells
                    .into_iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(v, _)| v.expect("kept rows have labels"))
                    .collect();
                labels.insert(header[c].clone(), y);
            }
            Column::Feature {
                kind,
                levels,
                cells,
                ..
            } => {
                let fill = impute_value(kind, &cells, levels.len());
                let values = cells
                    .into_iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(v, _)| v.unwrap_or(fill))
                    .collect();
                features.push(Feature {
                    name: header[c].clone(),
                    kind,
                    levels,
                });
                feature_cols.push(values);
            }
        }
    }
    let k = features.len();
    let mut values = vec![0.0; rows * k];
    for (j, col) in feature_cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * k + j] = *v;
        }
    }
    Dataset::new(features, values, rows, labels)
}

fn impute_value(kind: FeatureKind, cells: &[Option<f64>], n_levels: usize) -> f64 {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    if present.is_empty() {
        return 0.0;
    }
    match kind {
        FeatureKind::Continuous => present.iter().sum::<f64>() / present.len() as f64,
        FeatureKind::Categorical | FeatureKind::Binary => {
            let size = match kind {
                FeatureKind::Binary => 2,
                _ => n_levels.max(1),
            };
            let mut counts = vec![0usize; size];
            for v in present {
                counts[v as usize] += 1;
            }
            let best = counts.iter().copied().max().unwrap_or(0);
            counts.iter().position(|&c| c == best).unwrap_or(0) as f64
        }
    }
}

/// Writes features then labels; categorical cells are written as level strings.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = ds.features().iter().map(|f| f.name.as_str()).collect();
    header.extend(ds.labels().keys().map(String::as_str));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.rows() {
        record.clear();
        for (j, f) in ds.features().iter().enumerate() {
            let v = ds.value(i, j);
            record.push(match f.kind {
                FeatureKind::Categorical if !f.levels.is_empty() => f.levels[v as usize].clone(),
                _ => format!("{v}"),
            });
        }
        for y in ds.labels().values() {
            record.push(y[i].to_string());
        }
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn schema() -> Schema {
        Schema::parse("x = continuous\nc = categorical\ny = label").unwrap()
    }

    #[test]
    fn loads_rows_in_file_order() {
        let f = write_tmp("x,c,y\n1.5,b,0\n2,a,1\n3,b,0\n");
        let ds = load_csv(f.path(), &schema(), MissingPolicy::Error).unwrap();
        assert_eq!(ds.rows(), 3);
        assert_eq!(ds.column(0), vec![1.5, 2.0, 3.0]);
        // first-appearance level order
        assert_eq!(ds.features()[1].levels, vec!["b", "a"]);
        assert_eq!(ds.column(1), vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.label("y").unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn impute_fills_mean_and_mode() {
        let f = write_tmp("x,c,y\n1,a,0\n,b,1\n3,,0\n");
        let ds = load_csv(f.path(), &schema(), MissingPolicy::Impute).unwrap();
        assert_eq!(ds.column(0), vec![1.0, 2.0, 3.0]);
        // a and b tie with one count each; lowest level index wins
        assert_eq!(ds.column(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_under_error_policy_names_cell() {
        let f = write_tmp("x,c,y\n1,a,0\n,b,1\n");
        match load_csv(f.path(), &schema(), MissingPolicy::Error) {
            Err(Error::MissingValue { row, column }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_label_rows_dropped_under_impute() {
        let f = write_tmp("x,c,y\n1,a,0\n2,b,\n3,a,1\n");
        let ds = load_csv(f.path(), &schema(), MissingPolicy::Impute).unwrap();
        assert_eq!(ds.rows(), 2);
        assert_eq!(ds.column(0), vec![1.0, 3.0]);
    }

    #[test]
    fn header_mismatch_and_bad_cells() {
        let f = write_tmp("x,z,y\n1,a,0\n");
        assert!(matches!(
            load_csv(f.path(), &schema(), MissingPolicy::Error),
            Err(Error::SchemaMismatch(_))
        ));
        let f = write_tmp("x,c,y\nabc,a,0\n");
        assert!(matches!(
            load_csv(f.path(), &schema(), MissingPolicy::Error),
            Err(Error::NonNumeric { row: 1, .. })
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &schema(), MissingPolicy::Error),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_with_pinned_levels() {
        let f = write_tmp("x,c,y\n1.25,b,0\n-2,a,1\n");
        let ds = load_csv(f.path(), &schema(), MissingPolicy::Error).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        let again = load_csv(out.path(), &Schema::of(&ds), MissingPolicy::Error).unwrap();
        assert_eq!(again, ds);
    }
}
