//! Confusion-matrix metrics, ROC curves and the evaluation report bundle.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(Error::Shape(format!("{} labels for {} predictions", labels.len(), preds.len())));
    }
    if labels.is_empty() {
        return Err(Error::Empty("confusion matrix needs at least one row".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub kappa: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, Cohen's kappa, sensitivity and specificity.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let n = cm.total() as f64;
    let accuracy = if n > 0.0 { (cm.tp + cm.tn) as f64 / n } else { f64::NAN };
    let kappa = if n > 0.0 {
        let p_pos = (cm.tp + cm.fp) as f64 * (cm.tp + cm.fn_) as f64;
        let p_neg = (cm.tn + cm.fn_) as f64 * (cm.tn + cm.fp) as f64;
        let pe = (p_pos + p_neg) / (n * n);
        (pe < 1.0).then(|| (accuracy - pe) / (1.0 - pe))
    } else {
        None
    };
    Metrics {
        accuracy,
        kappa,
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
    }
}

/// Positive iff `score >= threshold`.
pub fn threshold_predictions(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `thresholds[0]` is `+∞` for the (0, 0) point; the rest are the
    /// distinct scores in descending order.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

pub fn roc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("roc"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = RocCurve {
        thresholds: vec![f64::INFINITY],
        fpr: vec![0.0],
        tpr: vec![0.0],
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.thresholds.push(t);
        curve.fpr.push(fp as f64 / neg as f64);
        curve.tpr.push(tp as f64 / pos as f64);
    }
    Ok(curve)
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .fpr
        .windows(2)
        .zip(curve.tpr.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// `auc(roc(scores, labels))`.
pub fn auc_score(scores: &[f64], labels: &[u8]) -> Result<f64> {
    roc(scores, labels).map(|c| auc(&c))
}

/// One model's test-set output for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub name: String,
    pub scores: Vec<f64>,
    pub preds: Vec<u8>,
    /// Normalized variable importance, when the model defines it.
    pub importance: Option<Vec<(String, f64)>>,
}

/// Metrics gathered for one model in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub models: Vec<ModelSummary>,
    pub files: Vec<PathBuf>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".into(),
    }
}

/// Lowercase file-name stem: letters, digits, `-` and `_` kept, others `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn write_file(path: &Path, content: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Writes `metrics.csv`, and per model `roc_<name>.csv`,
/// `confusion_<name>.csv` and (when available) `importance_<name>.csv`.
pub fn write_report(models: &[ModelOutput], labels: &[u8], out_dir: impl AsRef<Path>) -> Result<Report> {
    let out_dir = out_dir.as_ref();
    if models.is_empty() {
        return Err(Error::Empty("report needs at least one model".into()));
    }
    let mut stems = BTreeSet::new();
    for m in models {
        if m.scores.len() != labels.len() || m.preds.len() != labels.len() {
            return Err(Error::Shape(format!(
                "model `{}`: {} scores / {} predictions for {} labels",
                m.name,
                m.scores.len(),
                m.preds.len(),
                labels.len()
            )));
        }
        if !stems.insert(file_stem(&m.name)) {
            return Err(Error::InvalidParameter(format!("duplicate model name `{}`", m.name)));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for m in models {
        let cm = confusion(labels, &m.preds)?;
        let curve = match roc(&m.scores, labels) {
            Ok(c) => Some(c),
            Err(Error::SingleClass(_)) => None,
            Err(e) => return Err(e),
        };
        let stem = file_stem(&m.name);
        if let Some(c) = &curve {
            let mut s = String::from("threshold,fpr,tpr\n");
            for i in 0..c.fpr.len() {
                let t = if c.thresholds[i].is_infinite() { "Inf".to_string() } else { format!("{}", c.thresholds[i]) };
                writeln!(s, "{t},{},{}", c.fpr[i], c.tpr[i]).expect("string write");
            }
            write_file(&out_dir.join(format!("roc_{stem}.csv")), &s, &mut files)?;
        }
        let s = format!(
            "actual,predicted_0,predicted_1\n0,{},{}\n1,{},{}\n",
            cm.tn, cm.fp, cm.fn_, cm.tp
        );
        write_file(&out_dir.join(format!("confusion_{stem}.csv")), &s, &mut files)?;
        if let Some(imp) = &m.importance {
            let mut s = String::from("feature,importance\n");
            for (f, v) in imp {
                writeln!(s, "{f},{v}").expect("string write");
            }
            write_file(&out_dir.join(format!("importance_{stem}.csv")), &s, &mut files)?;
        }
        summaries.push(ModelSummary {
            name: m.name.clone(),
            confusion: cm,
            metrics: metrics(&cm),
            auc: curve.as_ref().map(auc),
        });
    }

    let mut s = String::from("metric");
    for m in &summaries {
        write!(s, ",{}", m.name).expect("string write");
    }
    s.push('\n');
    type Getter = fn(&ModelSummary) -> Option<f64>;
    let rows: [(&str, Getter); 5] = [
        ("Accuracy", |m| Some(m.metrics.accuracy)),
        ("Kappa", |m| m.metrics.kappa),
        ("Sensitivity", |m| m.metrics.sensitivity),
        ("Specificity", |m| m.metrics.specificity),
        ("AUC", |m| m.auc),
    ];
    for (name, get) in rows {
        s.push_str(name);
        for m in &summaries {
            write!(s, ",{}", fmt_opt(get(m))).expect("string write");
        }
        s.push('\n');
    }
    write_file(&out_dir.join("metrics.csv"), &s, &mut files)?;
    Ok(Report { models: summaries, files })
}
