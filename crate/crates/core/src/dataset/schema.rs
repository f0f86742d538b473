use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Dataset, FeatureKind};

/// Role of one CSV column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Feature(FeatureKind),
    /// Categorical feature with a fixed level list; cells outside it are rejected.
    CategoricalLevels(Vec<String>),
    Label,
}

/// Ordered column-name to kind map.
///
/// Text form, one column per line, `#` starts a comment:
///
/// ```text
/// sim.past = continuous
/// many_field = binary
/// tech_field = categorical: t0, t1, t2
/// breakthrough = label
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    columns: Vec<(String, ColumnKind)>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn with(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.columns.push((name.into(), kind));
        self
    }

    pub fn columns(&self) -> &[(String, ColumnKind)] {
        &self.columns
    }

    pub fn get(&self, name: &str) -> Option<&ColumnKind> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, k)| k)
    }

    pub fn parse(text: &str) -> Result<Schema> {
        let mut schema = Schema::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, kind) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("schema line {}: expected `name = kind`", lineno + 1))
            })?;
            let name = name.trim().to_string();
            let kind = kind.trim();
            let kind = match kind.split_once(':') {
                Some((k, levels)) if k.trim() == "categorical" => ColumnKind::CategoricalLevels(
                    levels
                        .split(',')
                        .map(|l| l.trim().to_string())
                        .filter(|l| !l.is_empty())
                        .collect(),
                ),
                _ => match kind {
                    "continuous" => ColumnKind::Feature(FeatureKind::Continuous),
                    "categorical" => ColumnKind::Feature(FeatureKind::Categorical),
                    "binary" => ColumnKind::Feature(FeatureKind::Binary),
                    "label" => ColumnKind::Label,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "schema line {}: unknown kind `{other}`",
                            lineno + 1
                        )))
                    }
                },
            };
            if schema.get(&name).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "schema line {}: duplicate column `{name}`",
                    lineno + 1
                )));
            }
            schema.columns.push((name, kind));
        }
        Ok(schema)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }

    /// Schema describing an existing dataset, pinning categorical levels so a
    /// reload maps cells to the same indices.
    pub fn of(ds: &Dataset) -> Schema {
        let mut schema = Schema::new();
        for f in ds.features() {
            let kind = match f.kind {
                FeatureKind::Categorical if !f.levels.is_empty() => {
                    ColumnKind::CategoricalLevels(f.levels.clone())
                }
                k => ColumnKind::Feature(k),
            };
            schema.columns.push((f.name.clone(), kind));
        }
        for name in ds.labels().keys() {
            schema.columns.push((name.clone(), ColumnKind::Label));
        }
        schema
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, kind) in &self.columns {
            let kind = match kind {
                ColumnKind::Feature(k) => k.as_str().to_string(),
                ColumnKind::CategoricalLevels(levels) => format!("categorical: {}", levels.join(", ")),
                ColumnKind::Label => "label".to_string(),
            };
            let _ = writeln!(out, "{name} = {kind}");
        }
        out
    }
}
