//! Model kinds, hyperparameter points, fitted models and their versioned
//! on-disk format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear::{fit_elastic_net, fit_logit, CdOptions, ElasticNetModel, IrlsOptions, LinearScorer, LogitModel};
use crate::neural::{train_ffn, Activation, FfnArch, FfnModel, TrainOptions};
use crate::preprocess::{apply_scaler, fit_scaler, ScalerMethod, ScalerParams};
use crate::trees::{fit_cart, fit_forest, variable_importance, DecisionTree, Forest, ForestHyper, SplitRule, TreeConstraints, DEFAULT_CP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logit,
    ElasticNet,
    Cart,
    Forest,
    Ffn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logit => "logit",
            ModelKind::ElasticNet => "elastic_net",
            ModelKind::Cart => "cart",
            ModelKind::Forest => "forest",
            ModelKind::Ffn => "ffn",
        }
    }

    /// Hyperparameter names the kind accepts.
    pub fn hyper_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Logit => &["drop_features", "max_iter", "tol"],
            ModelKind::ElasticNet => &["drop_features", "lambda", "alpha", "max_sweeps", "tol"],
            ModelKind::Cart => &["drop_features", "cp", "min_split_obs", "max_depth"],
            ModelKind::Forest => &["drop_features", "n_trees", "mtry", "min_node", "splitrule", "bootstrap"],
            ModelKind::Ffn => &["drop_features", "hidden", "dropout", "activation", "epochs", "batch", "lr"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(ModelKind::Logit),
            "elastic_net" => Ok(ModelKind::ElasticNet),
            "cart" => Ok(ModelKind::Cart),
            "forest" => Ok(ModelKind::Forest),
            "ffn" => Ok(ModelKind::Ffn),
            other => Err(Error::InvalidParameter(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

pub type HyperPoint = BTreeMap<String, HyperValue>;

/// `a=1;b=x` rendering of a point.
pub fn point_label(point: &HyperPoint) -> String {
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

struct Hypers<'a> {
    point: &'a HyperPoint,
}

impl Hypers<'_> {
    fn bad(name: &str, v: &HyperValue, want: &str) -> Error {
        Error::InvalidParameter(format!("hyperparameter `{name}` = {v} is not {want}"))
    }

    fn f64(&self, name: &str, default: f64) -> Result<f64> {
        match self.point.get(name) {
            None => Ok(default),
            Some(HyperValue::Float(x)) => Ok(*x),
            Some(HyperValue::Int(i)) => Ok(*i as f64),
            Some(v) => Err(Self::bad(name, v, "a number")),
        }
    }

    fn usize(&self, name: &str, default: usize) -> Result<usize> {
        match self.point.get(name) {
            None => Ok(default),
            Some(HyperValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(Self::bad(name, v, "a non-negative integer")),
        }
    }

    fn opt_usize(&self, name: &str) -> Result<Option<usize>> {
        match self.point.get(name) {
            None => Ok(None),
            Some(_) => self.usize(name, 0).map(Some),
        }
    }

    fn bool(&self, name: &str, default: bool) -> Result<bool> {
        match self.point.get(name) {
            None => Ok(default),
            Some(HyperValue::Bool(b)) => Ok(*b),
            Some(v) => Err(Self::bad(name, v, "a boolean")),
        }
    }

    fn text(&self, name: &str) -> Result<Option<&str>> {
        match self.point.get(name) {
            None => Ok(None),
            Some(HyperValue::Text(s)) => Ok(Some(s)),
            Some(v) => Err(Self::bad(name, v, "a string")),
        }
    }

    fn list<T: std::str::FromStr>(&self, name: &str) -> Result<Option<Vec<T>>> {
        let Some(s) = self.text(name)? else { return Ok(None) };
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| Error::InvalidParameter(format!("hyperparameter `{name}`: cannot parse `{t}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

/// Rejects names the kind does not understand.
pub fn check_point(kind: ModelKind, point: &HyperPoint) -> Result<()> {
    for name in point.keys() {
        if !kind.hyper_names().contains(&name.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "model `{kind}` has no hyperparameter `{name}` (accepted: {})",
                kind.hyper_names().join(", ")
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Logit(LogitModel),
    ElasticNet(ElasticNetModel),
    Cart(DecisionTree),
    Forest(Forest),
    Ffn(FfnModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Logit(_) => ModelKind::Logit,
            FittedModel::ElasticNet(_) => ModelKind::ElasticNet,
            FittedModel::Cart(_) => ModelKind::Cart,
            FittedModel::Forest(_) => ModelKind::Forest,
            FittedModel::Ffn(_) => ModelKind::Ffn,
        }
    }

    /// Positive-class score per row: probability for the linear models and
    /// the network, leaf share for CART, vote fraction for the forest.
    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        match self {
            FittedModel::Logit(m) => m.predict_proba(ds),
            FittedModel::ElasticNet(m) => m.predict_proba(ds),
            FittedModel::Cart(m) => m.predict_proba(ds),
            FittedModel::Forest(m) => m.predict_proba(ds),
            FittedModel::Ffn(m) => m.predict_proba(ds),
        }
    }

    /// Normalized variable importance; `None` for the network.
    pub fn importance(&self) -> Option<Result<Vec<(String, f64)>>> {
        match self {
            FittedModel::Logit(m) => Some(variable_importance(m)),
            FittedModel::ElasticNet(m) => Some(variable_importance(m)),
            FittedModel::Cart(m) => Some(variable_importance(m)),
            FittedModel::Forest(m) => Some(variable_importance(m)),
            FittedModel::Ffn(_) => None,
        }
    }
}

/// Fits one model of `kind` at `point`. `seed` drives the forest and the network.
pub fn fit_model(kind: ModelKind, point: &HyperPoint, train: &Dataset, label: &str, seed: u64) -> Result<FittedModel> {
    check_point(kind, point)?;
    let h = Hypers { point };
    let dropped: Vec<String> = h.list::<String>("drop_features")?.unwrap_or_default();
    let owned;
    let train = if dropped.is_empty() {
        train
    } else {
        for d in &dropped {
            train.feature_index(d)?;
        }
        let keep: Vec<String> = train.feature_names().into_iter().filter(|f| !dropped.contains(f)).collect();
        owned = train.select_features(&keep)?;
        &owned
    };
    Ok(match kind {
        ModelKind::Logit => FittedModel::Logit(fit_logit(
            train,
            label,
            IrlsOptions {
                tol: h.f64("tol", IrlsOptions::default().tol)?,
                max_iter: h.usize("max_iter", IrlsOptions::default().max_iter)?,
            },
        )?),
        ModelKind::ElasticNet => FittedModel::ElasticNet(fit_elastic_net(
            train,
            label,
            h.f64("lambda", 1e-3)?,
            h.f64("alpha", 0.5)?,
            CdOptions {
                tol: h.f64("tol", CdOptions::default().tol)?,
                max_sweeps: h.usize("max_sweeps", CdOptions::default().max_sweeps)?,
            },
        )?),
        ModelKind::Cart => FittedModel::Cart(fit_cart(
            train,
            label,
            h.f64("cp", DEFAULT_CP)?,
            TreeConstraints {
                min_split_obs: h.usize("min_split_obs", TreeConstraints::default().min_split_obs)?,
                max_depth: h.opt_usize("max_depth")?,
            },
        )?),
        ModelKind::Forest => {
            let d = ForestHyper::default();
            let splitrule = match h.text("splitrule")? {
                Some(s) => s.parse::<SplitRule>()?,
                None => d.splitrule,
            };
            FittedModel::Forest(fit_forest(
                train,
                label,
                &ForestHyper {
                    n_trees: h.usize("n_trees", d.n_trees)?,
                    mtry: h.usize("mtry", d.mtry)?,
                    min_node: h.usize("min_node", d.min_node)?,
                    splitrule,
                    seed,
                    bootstrap: h.bool("bootstrap", d.bootstrap)?,
                },
            )?)
        }
        ModelKind::Ffn => {
            let d = FfnArch::default();
            let o = TrainOptions::default();
            let arch = FfnArch {
                hidden: h.list::<usize>("hidden")?.unwrap_or(d.hidden),
                dropout: h.list::<f64>("dropout")?.unwrap_or(d.dropout),
                activation: match h.text("activation")? {
                    Some(s) => s.parse::<Activation>()?,
                    None => d.activation,
                },
            };
            let opts = TrainOptions {
                epochs: h.usize("epochs", o.epochs)?,
                batch: h.usize("batch", o.batch)?,
                lr: h.f64("lr", o.lr)?,
                seed,
            };
            FittedModel::Ffn(train_ffn(train, label, &arch, opts)?)
        }
    })
}

/// A fitted model together with the scaler fitted on the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub name: String,
    pub point: HyperPoint,
    pub seed: u64,
    pub scaler: Option<ScalerParams>,
    pub model: FittedModel,
}

impl TrainedModel {
    /// Fits the optional scaler on `train`, then the model on the scaled rows.
    pub fn fit(
        name: &str,
        kind: ModelKind,
        point: &HyperPoint,
        train: &Dataset,
        label: &str,
        scaler: Option<ScalerMethod>,
        seed: u64,
    ) -> Result<Self> {
        let (scaler, model) = match scaler {
            Some(method) => {
                let params = fit_scaler(train, method)?;
                let scaled = apply_scaler(train, &params)?;
                (Some(params), fit_model(kind, point, &scaled, label, seed)?)
            }
            None => (None, fit_model(kind, point, train, label, seed)?),
        };
        Ok(TrainedModel {
            name: name.to_string(),
            point: point.clone(),
            seed,
            scaler,
            model,
        })
    }

    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        match &self.scaler {
            Some(p) => self.model.predict_proba(&apply_scaler(ds, p)?),
            None => self.model.predict_proba(ds),
        }
    }
}

pub const MODEL_FORMAT: &str = "rareml-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

/// Pretty-printed JSON inside a `{format, version, payload}` envelope.
pub fn to_text<T: Serialize>(value: &T) -> Result<String> {
    let env = Envelope {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_FORMAT_VERSION,
        payload: value,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_text<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if h.format != MODEL_FORMAT {
        return Err(Error::Format(format!("expected format `{MODEL_FORMAT}`, found `{}`", h.format)));
    }
    if h.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (this build reads {MODEL_FORMAT_VERSION})",
            h.version
        )));
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    Ok(env.payload)
}

pub fn save<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(value)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
