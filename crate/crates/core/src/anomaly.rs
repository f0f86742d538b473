//! Autoencoder anomaly scoring: train on normal rows only, score rows by
//! reconstruction error, and flag rows whose error falls inside a band.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neural::{train_network, Activation, LossKind, Network, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeArch {
    /// Layer sizes including input and output, e.g. `[11, 9, 4, 4, 11]`.
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Default for AeArch {
    fn default() -> Self {
        AeArch {
            sizes: vec![11, 9, 4, 4, 11],
            activations: vec![Activation::Tanh, Activation::Relu, Activation::Tanh, Activation::Relu],
        }
    }
}

impl AeArch {
    /// Default layer pattern re-sized for `inputs` features.
    pub fn for_inputs(inputs: usize) -> Self {
        let mut arch = AeArch::default();
        arch.sizes[0] = inputs;
        arch.sizes[4] = inputs;
        arch
    }

    fn validate(&self) -> Result<()> {
        let (first, last) = match (self.sizes.first(), self.sizes.last()) {
            (Some(&f), Some(&l)) if self.sizes.len() >= 3 => (f, l),
            _ => return Err(Error::InvalidParameter("autoencoder needs input, latent and output sizes".into())),
        };
        if first != last {
            return Err(Error::InvalidParameter(format!("autoencoder output size {last} differs from input size {first}")));
        }
        let latent = self.latent_dim();
        if latent >= first {
            return Err(Error::InvalidParameter(format!(
                "latent size {latent} must be smaller than the input size {first}"
            )));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.sizes[1..self.sizes.len() - 1].iter().copied().min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeOptions {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub activity_l2: f64,
}

impl Default for AeOptions {
    fn default() -> Self {
        AeOptions {
            epochs: 10,
            batch: 512,
            lr: 0.001,
            seed: 0,
            loss: LossKind::CosineProximity,
            activity_l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub features: Vec<String>,
    pub network: Network,
    pub latent_dim: usize,
    pub activity_l2: f64,
    pub loss: LossKind,
    /// Mean training objective per epoch.
    pub history: Vec<f64>,
}

/// Fits an autoencoder to reproduce its inputs.
///
/// When `label` is given every training row must be negative for it.
pub fn train_autoencoder(normals: &Dataset, label: Option<&str>, arch: &AeArch, opts: AeOptions) -> Result<Autoencoder> {
    if let Some(label) = label {
        let positives = normals.positives(label)?;
        if positives > 0 {
            return Err(Error::ContaminatedTraining(positives));
        }
    }
    arch.validate()?;
    if normals.rows() == 0 {
        return Err(Error::Empty("autoencoder training rows".into()));
    }
    if arch.sizes[0] != normals.n_features() {
        return Err(Error::Shape(format!(
            "autoencoder input size {} but {} features supplied",
            arch.sizes[0],
            normals.n_features()
        )));
    }
    if !(opts.activity_l2 >= 0.0 && opts.activity_l2.is_finite()) {
        return Err(Error::InvalidParameter("activity_l2 must be finite and >= 0".into()));
    }
    if opts.loss == LossKind::BinaryCrossEntropy {
        return Err(Error::InvalidParameter("autoencoder loss must be mse or cosine_proximity".into()));
    }
    let mut network = Network::new(&arch.sizes, &arch.activations, &[], opts.seed)?;
    let x = normals.values();
    let history = train_network(
        &mut network,
        x,
        x,
        normals.rows(),
        opts.loss,
        opts.activity_l2,
        TrainOptions {
            epochs: opts.epochs,
            batch: opts.batch,
            lr: opts.lr,
            seed: opts.seed,
        },
    )?;
    Ok(Autoencoder {
        features: normals.feature_names(),
        network,
        latent_dim: arch.latent_dim(),
        activity_l2: opts.activity_l2,
        loss: opts.loss,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    SquaredL2,
    L2,
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_l2" => Ok(ErrorMetric::SquaredL2),
            "l2" => Ok(ErrorMetric::L2),
            other => Err(Error::InvalidParameter(format!("unknown error metric `{other}`"))),
        }
    }
}

/// Distance between a row and its reconstruction.
pub fn distance(x: &[f64], reconstructed: &[f64], metric: ErrorMetric) -> Result<f64> {
    if x.len() != reconstructed.len() {
        return Err(Error::Shape(format!("{} values against {} reconstructed", x.len(), reconstructed.len())));
    }
    let sq: f64 = x.iter().zip(reconstructed).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(match metric {
        ErrorMetric::SquaredL2 => sq,
        ErrorMetric::L2 => sq.sqrt(),
    })
}

pub fn reconstruction_error(ae: &Autoencoder, x: &[f64], metric: ErrorMetric) -> Result<f64> {
    let out = ae.network.predict(x)?;
    distance(x, &out, metric)
}

/// One reconstruction error per row, in row order.
pub fn score_dataset(ae: &Autoencoder, ds: &Dataset, metric: ErrorMetric) -> Result<Vec<f64>> {
    let k = ae.features.len();
    let m = ds.aligned_matrix(&ae.features)?;
    if k == 0 {
        return Ok(vec![0.0; ds.rows()]);
    }
    m.par_chunks_exact(k).map(|row| reconstruction_error(ae, row, metric)).collect()
}

/// Closed interval `[lo, hi]`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBand {
    pub lo: f64,
    pub hi: f64,
}

impl ThresholdBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidParameter(format!("invalid band [{lo}, {hi}]")));
        }
        Ok(ThresholdBand { lo, hi })
    }

    pub fn above(lo: f64) -> Result<Self> {
        ThresholdBand::new(lo, f64::INFINITY)
    }

    pub fn contains(&self, score: f64) -> bool {
        self.lo <= score && score <= self.hi
    }
}

impl std::fmt::Display for ThresholdBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

pub fn classify_band(scores: &[f64], band: ThresholdBand) -> Result<Vec<u8>> {
    ThresholdBand::new(band.lo, band.hi)?;
    Ok(scores.iter().map(|&s| u8::from(band.contains(s))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandObjective {
    Youden,
    F1,
}

impl std::str::FromStr for BandObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "youden" => Ok(BandObjective::Youden),
            "f1" => Ok(BandObjective::F1),
            other => Err(Error::InvalidParameter(format!("unknown band objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSearch {
    /// Lower bound only, `hi = +∞`.
    LowerBound,
    /// Both bounds over a percentile grid of the scores.
    Window,
}

fn objective_value(objective: BandObjective, tp: usize, fp: usize, pos: usize, neg: usize) -> f64 {
    let fn_ = pos - tp;
    let tn = neg - fp;
    match objective {
        BandObjective::Youden => tp as f64 / pos as f64 + tn as f64 / neg as f64 - 1.0,
        BandObjective::F1 => {
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        }
    }
}

/// Value of `objective` for classifying `scores` with `band`.
pub fn band_objective(scores: &[f64], labels: &[u8], band: ThresholdBand, objective: BandObjective) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let (mut tp, mut fp) = (0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        if band.contains(s) {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(objective_value(objective, tp, fp, pos, neg))
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass("band calibration"));
    }
    Ok((pos, neg))
}

/// Picks the band maximizing `objective`; among equal values the lowest
/// threshold wins.
///
/// `LowerBound` tries every distinct observed score as `lo`. `Window` tries
/// every pair of score percentiles (0, 1, ..., 100) with `lo <= hi`, plus
/// `hi = +∞`.
pub fn calibrate_band(scores: &[f64], labels: &[u8], objective: BandObjective, search: BandSearch) -> Result<ThresholdBand> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    match search {
        BandSearch::LowerBound => {
            // walk thresholds from the highest score down, accumulating counts
            let mut best: Option<(f64, f64)> = None;
            let (mut tp, mut fp) = (0usize, 0usize);
            let mut i = order.len();
            while i > 0 {
                let value = scores[order[i - 1]];
                while i > 0 && scores[order[i - 1]] == value {
                    if labels[order[i - 1]] == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                    i -= 1;
                }
                let v = objective_value(objective, tp, fp, pos, neg);
                // descending walk: `>=` lets lower thresholds win ties
                if best.is_none_or(|(bv, _)| v >= bv) {
                    best = Some((v, value));
                }
            }
            let (_, lo) = best.expect("non-empty scores");
            ThresholdBand::above(lo)
        }
        BandSearch::Window => {
            let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
            let mut grid: Vec<f64> = (0..=100).map(|p| crate::stats::quantile_sorted(&sorted, p as f64 / 100.0)).collect();
            grid.dedup();
            let mut his = grid.clone();
            his.push(f64::INFINITY);
            let mut best: Option<(f64, ThresholdBand)> = None;
            for &lo in &grid {
                for &hi in his.iter().filter(|&&h| h >= lo) {
                    let band = ThresholdBand { lo, hi };
                    let (mut tp, mut fp) = (0, 0);
                    let start = sorted.partition_point(|&s| s < lo);
                    for &i in &order[start..] {
                        if scores[i] > hi {
                            break;
                        }
                        if labels[i] == 1 {
                            tp += 1;
                        } else {
                            fp += 1;
                        }
                    }
                    let v = objective_value(objective, tp, fp, pos, neg);
                    if best.is_none_or(|(bv, _)| v > bv) {
                        best = Some((v, band));
                    }
                }
            }
            Ok(best.expect("non-empty grid").1)
        }
    }
}

/// Writes `row_id,score[,label]` with one line per score.
pub fn write_scores_csv(path: impl AsRef<Path>, scores: &[f64], labels: Option<&[u8]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(y) = labels {
        if y.len() != scores.len() {
            return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), y.len())));
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: &[&str] = if labels.is_some() { &["row_id", "score", "label"] } else { &["row_id", "score"] };
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for (i, s) in scores.iter().enumerate() {
        let mut rec = vec![i.to_string(), format!("{s}")];
        if let Some(y) = labels {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
