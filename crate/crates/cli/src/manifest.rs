//! Run manifest: a sorted `key = value` file recording, per stage, the
//! artifacts read and written (with sha256), the stage seed, and the final
//! hash of every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RUNLOG_FILE: &str = "runlog.txt";
/// Directory for wall-clock timings; excluded from the manifest.
pub const TIMING_DIR: &str = "timing";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn parse(text: &str) -> Manifest {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Manifest { entries }
    }

    pub fn read(out_dir: &Path) -> Result<Manifest, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Manifest::parse(&text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(CliError::Runtime(format!("{}: {e}", path.display()))),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_text()).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# rareml run manifest\n");
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Drops every key starting with `prefix`.
    pub fn clear_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !k.starts_with(prefix));
    }
}

/// Provenance recorder for one stage. Every artifact access goes through it.
pub struct StageContext {
    pub name: &'static str,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    reads: BTreeMap<String, String>,
    writes: BTreeMap<String, String>,
}

impl StageContext {
    pub fn new(name: &'static str, out_dir: &Path) -> StageContext {
        StageContext {
            name,
            out_dir: out_dir.to_path_buf(),
            seed: None,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    /// Fails with a validation error naming the stage that produces `rel`
    /// when it is absent.
    pub fn require(&self, rel: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Validation(format!(
                "missing prerequisite {rel} for `{}`: run `{producer}` first",
                self.name
            )))
        }
    }

    /// Hashes and records an artifact that the stage is about to parse.
    pub fn read(&mut self, rel: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.require(rel, producer)?;
        let bytes = std::fs::read(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.reads.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(p)
    }

    pub fn read_text(&mut self, rel: &str, producer: &str) -> Result<String, CliError> {
        let p = self.read(rel, producer)?;
        std::fs::read_to_string(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    /// Records a file outside the run directory (external input data).
    pub fn read_external(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        self.reads.insert(label.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Prepares the parent directory of `rel` and returns its full path.
    pub fn output(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, content: &[u8]) -> Result<(), CliError> {
        let p = self.output(rel)?;
        std::fs::write(&p, content).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.writes.insert(rel.to_string(), sha256_hex(content));
        Ok(())
    }

    /// Records a file already written under the run directory.
    pub fn wrote(&mut self, rel: &str) -> Result<(), CliError> {
        let p = self.path(rel);
        let bytes = std::fs::read(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        self.writes.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes an unhashed file (timings) that stays out of the manifest.
    pub fn write_untracked(&self, rel: &str, content: &str) -> Result<(), CliError> {
        let p = self.output(rel)?;
        std::fs::write(&p, content).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    /// Replaces this stage's entries in `manifest`.
    pub fn commit(self, manifest: &mut Manifest) {
        let prefix = format!("stage.{}.", self.name);
        manifest.clear_prefix(&prefix);
        let join = |m: &BTreeMap<String, String>| {
            m.iter().map(|(k, v)| format!("{k}@{v}")).collect::<Vec<_>>().join(", ")
        };
        manifest.set(format!("{prefix}reads"), join(&self.reads));
        manifest.set(format!("{prefix}writes"), join(&self.writes));
        if let Some(seed) = self.seed {
            manifest.set(format!("{prefix}seed"), seed);
        }
        for (path, sha) in &self.writes {
            manifest.set(format!("artifact.{path}"), sha);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_sorted() {
        let mut m = Manifest::default();
        m.set("b", 2);
        m.set("a", "x");
        let text = m.to_text();
        assert!(text.find("a = x").unwrap() < text.find("b = 2").unwrap());
        assert_eq!(Manifest::parse(&text), m);
    }

    #[test]
    fn stage_commit_records_reads_and_writes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("in.txt"), "hello").unwrap();
        let mut ctx = StageContext::new("demo", dir.path());
        ctx.seed = Some(7);
        ctx.read("in.txt", "nothing").unwrap();
        ctx.write("sub/out.txt", b"world").unwrap();
        let mut m = Manifest::default();
        ctx.commit(&mut m);
        assert_eq!(m.get("stage.demo.reads"), Some(format!("in.txt@{}", sha256_hex(b"hello")).as_str()));
        assert!(m.get("stage.demo.writes").unwrap().starts_with("sub/out.txt@"));
        assert_eq!(m.get("artifact.sub/out.txt"), Some(sha256_hex(b"world").as_str()));
        assert_eq!(m.get("stage.demo.seed"), Some("7"));
    }

    #[test]
    fn missing_prerequisite_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = StageContext::new("train", dir.path());
        assert!(matches!(ctx.read("data/train.csv", "split"), Err(CliError::Validation(_))));
    }
}
