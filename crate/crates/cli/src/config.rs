//! Run configuration: TOML parsing and field-level validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rareml::anomaly::{AeArch, AeOptions, BandObjective, BandSearch, ErrorMetric, ThresholdBand};
use rareml::dataset::{ColumnKind, FeatureKind, Schema, SynthSpec};
use rareml::model::{check_point, HyperPoint, ModelKind};
use rareml::neural::{Activation, LossKind};
use rareml::preprocess::ScalerMethod;
use rareml::tune::{HyperGrid, Metric};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub label: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_scaler")]
    pub scaler: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub data: DataConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    pub autoencoder: Option<AeConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}
fn default_split_fraction() -> f64 {
    0.75
}
fn default_scaler() -> String {
    "standardize".into()
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synth: Option<SynthConfig>,
    pub csv: Option<CsvConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// indicators | rare_event | rare_anomaly | breakthrough50
    pub preset: String,
    pub n: usize,
    /// Overrides the preset's positive rate.
    pub positive_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub path: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_missing")]
    pub missing: String,
}

fn default_missing() -> String {
    "error".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_subset")]
    pub subset_frac: f64,
    #[serde(default = "default_metric")]
    pub metric: String,
}

fn default_k() -> usize {
    5
}
fn default_repeats() -> usize {
    1
}
fn default_subset() -> f64 {
    0.10
}
fn default_metric() -> String {
    "auc".into()
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            k: default_k(),
            repeats: default_repeats(),
            subset_frac: default_subset(),
            metric: default_metric(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub params: HyperPoint,
    #[serde(default)]
    pub grid: HyperGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    pub features: Vec<String>,
    /// Hidden layer sizes between input and output; default `[9, 4, 4]`.
    pub hidden: Option<Vec<usize>>,
    pub activations: Option<Vec<String>>,
    #[serde(default = "default_ae_epochs")]
    pub epochs: usize,
    #[serde(default = "default_ae_batch")]
    pub batch: usize,
    #[serde(default = "default_ae_lr")]
    pub lr: f64,
    #[serde(default = "default_ae_loss")]
    pub loss: String,
    #[serde(default = "default_ae_l2")]
    pub activity_l2: f64,
    #[serde(default = "default_ae_metric")]
    pub metric: String,
    pub band: Option<[f64; 2]>,
    pub calibrate: Option<String>,
    #[serde(default = "default_search")]
    pub search: String,
}

fn default_ae_epochs() -> usize {
    10
}
fn default_ae_batch() -> usize {
    512
}
fn default_ae_lr() -> f64 {
    0.001
}
fn default_ae_loss() -> String {
    "cosine_proximity".into()
}
fn default_ae_l2() -> f64 {
    1e-4
}
fn default_ae_metric() -> String {
    "l2".into()
}
fn default_search() -> String {
    "lower_bound".into()
}

#[derive(Debug, Clone)]
pub enum Source {
    Synth(SynthSpec),
    Csv { path: PathBuf, schema: PathBuf, impute: bool },
}

#[derive(Debug, Clone)]
pub struct ModelPlan {
    pub name: String,
    pub kind: ModelKind,
    /// Grid with the fixed params folded in as one-value entries.
    pub grid: HyperGrid,
}

#[derive(Debug, Clone)]
pub enum BandRule {
    Fixed(ThresholdBand),
    Calibrate(BandObjective, BandSearch),
}

#[derive(Debug, Clone)]
pub struct AePlan {
    pub features: Vec<String>,
    pub arch: AeArch,
    pub opts: AeOptions,
    pub metric: ErrorMetric,
    pub band: BandRule,
}

/// A validated configuration with every string option resolved.
#[derive(Debug, Clone)]
pub struct Plan {
    pub seed: u64,
    pub label: String,
    pub out_dir: PathBuf,
    pub split_fraction: f64,
    pub scaler: Option<ScalerMethod>,
    pub threshold: f64,
    pub source: Source,
    pub tuning: TuningConfig,
    pub metric: Metric,
    pub models: Vec<ModelPlan>,
    pub autoencoder: Option<AePlan>,
    /// sha256 of the configuration text.
    pub config_sha256: String,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn parse_field<T: std::str::FromStr<Err = rareml::Error>>(field: &str, value: &str) -> Result<T, CliError> {
    value.parse::<T>().map_err(|e| invalid(field, e))
}

/// Reads, parses and validates a configuration file. Relative data paths
/// resolve against the file's directory.
pub fn load(path: &Path, out_override: Option<PathBuf>, seed_override: Option<u64>) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    if let Some(out) = out_override {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut plan = resolve(cfg, base)?;
    plan.config_sha256 = crate::manifest::sha256_hex(text.as_bytes());
    Ok(plan)
}

fn resolve(cfg: RunConfig, base: &Path) -> Result<Plan, CliError> {
    let source = match (&cfg.data.synth, &cfg.data.csv) {
        (Some(_), Some(_)) => return Err(invalid("data", "give exactly one of [data.synth] or [data.csv], not both")),
        (None, None) => return Err(invalid("data", "missing a [data.synth] or [data.csv] section")),
        (Some(s), None) => {
            let mut spec = match s.preset.as_str() {
                "indicators" => SynthSpec::indicators(s.n, s.positive_rate.unwrap_or(0.01), &cfg.label, 0),
                "rare_event" => SynthSpec::rare_event(s.n, 0),
                "rare_anomaly" => SynthSpec::rare_anomaly(s.n, 0),
                "breakthrough50" => SynthSpec::breakthrough50(s.n, 0),
                other => {
                    return Err(invalid(
                        "data.synth.preset",
                        format!("unknown preset `{other}` (expected indicators, rare_event, rare_anomaly or breakthrough50)"),
                    ))
                }
            };
            if s.n == 0 {
                return Err(invalid("data.synth.n", "must be >= 1"));
            }
            if let Some(r) = s.positive_rate {
                if !(r > 0.0 && r < 1.0) {
                    return Err(invalid("data.synth.positive_rate", format!("{r} outside (0, 1)")));
                }
                spec.positive_rate = r;
            }
            Source::Synth(spec)
        }
        (None, Some(c)) => Source::Csv {
            path: base.join(&c.path),
            schema: base.join(&c.schema),
            impute: match c.missing.as_str() {
                "error" => false,
                "impute" => true,
                other => return Err(invalid("data.csv.missing", format!("unknown policy `{other}` (expected error or impute)"))),
            },
        },
    };

    // column names and kinds of the data source
    let (features, labels): (BTreeMap<String, FeatureKind>, Vec<String>) = match &source {
        Source::Synth(spec) => (
            spec.features.iter().map(|f| (f.name.clone(), f.kind)).collect(),
            vec![spec.label.clone()],
        ),
        Source::Csv { schema, .. } => {
            let schema = Schema::read(schema).map_err(|e| invalid("data.csv.schema", e))?;
            let mut feats = BTreeMap::new();
            let mut labels = Vec::new();
            for (name, kind) in schema.columns() {
                match kind {
                    ColumnKind::Feature(k) => {
                        feats.insert(name.clone(), *k);
                    }
                    ColumnKind::CategoricalLevels(_) => {
                        feats.insert(name.clone(), FeatureKind::Categorical);
                    }
                    ColumnKind::Label => labels.push(name.clone()),
                }
            }
            (feats, labels)
        }
    };
    if !labels.contains(&cfg.label) {
        return Err(invalid(
            "label",
            format!("`{}` is not a label column of the data source (available: {})", cfg.label, labels.join(", ")),
        ));
    }
    if !(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0) {
        return Err(invalid("split_fraction", format!("{} outside (0, 1)", cfg.split_fraction)));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(invalid("threshold", format!("{} outside (0, 1)", cfg.threshold)));
    }
    let scaler = match cfg.scaler.as_str() {
        "none" => None,
        s => Some(parse_field::<ScalerMethod>("scaler", s)?),
    };
    let t = &cfg.tuning;
    if t.k < 2 {
        return Err(invalid("tuning.k", "must be >= 2"));
    }
    if t.repeats == 0 {
        return Err(invalid("tuning.repeats", "must be >= 1"));
    }
    if !(t.subset_frac > 0.0 && t.subset_frac <= 1.0) {
        return Err(invalid("tuning.subset_frac", format!("{} outside (0, 1]", t.subset_frac)));
    }
    let metric = parse_field::<Metric>("tuning.metric", &t.metric)?;

    let mut models = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for (i, m) in cfg.models.iter().enumerate() {
        let field = format!("models[{i}]");
        if m.name.trim().is_empty() {
            return Err(invalid(&format!("{field}.name"), "must not be empty"));
        }
        if !names.insert(rareml::eval::file_stem(&m.name)) {
            return Err(invalid(&format!("{field}.name"), format!("duplicate model name `{}`", m.name)));
        }
        let kind = parse_field::<ModelKind>(&format!("{field}.kind"), &m.kind)?;
        let mut grid = m.grid.clone();
        for (k, v) in &m.params {
            if grid.insert(k.clone(), vec![v.clone()]).is_some() {
                return Err(invalid(&format!("{field}.params.{k}"), "also given in the grid"));
            }
        }
        for (k, values) in &grid {
            if values.is_empty() {
                return Err(invalid(&format!("{field}.grid.{k}"), "empty value list"));
            }
            for v in values {
                let p: HyperPoint = [(k.clone(), v.clone())].into();
                check_point(kind, &p).map_err(|e| invalid(&format!("{field}.grid.{k}"), e))?;
            }
        }
        if let Some(rareml::model::HyperValue::Text(list)) = m.params.get("drop_features") {
            for f in list.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                if !features.contains_key(f) {
                    return Err(invalid(&format!("{field}.params.drop_features"), format!("unknown feature `{f}`")));
                }
            }
        }
        models.push(ModelPlan {
            name: m.name.clone(),
            kind,
            grid,
        });
    }

    let autoencoder = match &cfg.autoencoder {
        None => None,
        Some(a) => Some(resolve_ae(a, &features)?),
    };

    Ok(Plan {
        seed: cfg.seed,
        label: cfg.label,
        out_dir: cfg.out_dir,
        split_fraction: cfg.split_fraction,
        scaler,
        threshold: cfg.threshold,
        source,
        tuning: cfg.tuning,
        metric,
        models,
        autoencoder,
        config_sha256: String::new(),
    })
}

fn resolve_ae(a: &AeConfig, features: &BTreeMap<String, FeatureKind>) -> Result<AePlan, CliError> {
    if a.features.is_empty() {
        return Err(invalid("autoencoder.features", "must list at least two features"));
    }
    for f in &a.features {
        match features.get(f) {
            None => return Err(invalid("autoencoder.features", format!("unknown feature `{f}`"))),
            Some(FeatureKind::Categorical) => {
                return Err(invalid("autoencoder.features", format!("`{f}` is categorical; the autoencoder takes numeric inputs")))
            }
            Some(_) => {}
        }
    }
    let d = a.features.len();
    let mut arch = AeArch::for_inputs(d);
    if let Some(hidden) = &a.hidden {
        arch.sizes = std::iter::once(d).chain(hidden.iter().copied()).chain(std::iter::once(d)).collect();
        arch.activations = vec![Activation::Tanh; arch.sizes.len() - 1];
    }
    if let Some(acts) = &a.activations {
        arch.activations = acts
            .iter()
            .map(|s| parse_field::<Activation>("autoencoder.activations", s))
            .collect::<Result<_, _>>()?;
    }
    if arch.activations.len() != arch.sizes.len() - 1 {
        return Err(invalid(
            "autoencoder.activations",
            format!("{} activations for {} layers", arch.activations.len(), arch.sizes.len() - 1),
        ));
    }
    if arch.latent_dim() >= d {
        return Err(invalid("autoencoder.hidden", format!("smallest layer must be below the input size {d}")));
    }
    let loss = parse_field::<LossKind>("autoencoder.loss", &a.loss)?;
    if loss == LossKind::BinaryCrossEntropy {
        return Err(invalid("autoencoder.loss", "must be mse or cosine_proximity"));
    }
    if a.epochs == 0 || a.batch == 0 {
        return Err(invalid("autoencoder.epochs", "epochs and batch must be >= 1"));
    }
    if !(a.lr > 0.0) {
        return Err(invalid("autoencoder.lr", "must be > 0"));
    }
    if !(a.activity_l2 >= 0.0) {
        return Err(invalid("autoencoder.activity_l2", "must be >= 0"));
    }
    let band = match (&a.band, &a.calibrate) {
        (Some(_), Some(_)) => return Err(invalid("autoencoder", "give either `band` or `calibrate`, not both")),
        (None, None) => return Err(invalid("autoencoder", "needs a `band = [lo, hi]` or a `calibrate` objective")),
        (Some([lo, hi]), None) => BandRule::Fixed(ThresholdBand::new(*lo, *hi).map_err(|e| invalid("autoencoder.band", e))?),
        (None, Some(obj)) => BandRule::Calibrate(
            parse_field::<BandObjective>("autoencoder.calibrate", obj)?,
            match a.search.as_str() {
                "lower_bound" => BandSearch::LowerBound,
                "window" => BandSearch::Window,
                other => return Err(invalid("autoencoder.search", format!("unknown search `{other}` (expected lower_bound or window)"))),
            },
        ),
    };
    Ok(AePlan {
        features: a.features.clone(),
        arch,
        opts: AeOptions {
            epochs: a.epochs,
            batch: a.batch,
            lr: a.lr,
            seed: 0,
            loss,
            activity_l2: a.activity_l2,
        },
        metric: parse_field::<ErrorMetric>("autoencoder.metric", &a.metric)?,
        band,
    })
}
