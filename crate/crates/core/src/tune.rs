//! K-fold partitioning, grid expansion, cross-validation and grid search
//! with optional tuning on a stratified subset of the training rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_indices, Dataset};
use crate::error::{Error, Result};
use crate::eval::{auc_score, confusion, metrics, threshold_predictions};
use crate::model::{check_point, point_label, HyperPoint, HyperValue, ModelKind, TrainedModel};
use crate::preprocess::ScalerMethod;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ascending (training rows, held-out rows) for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }
}

/// Seeded shuffle then round-robin fold assignment. With labels, each class
/// is shuffled and dealt in turn (negatives first) with the round-robin
/// counter carried across classes, so every fold gets its share of both.
pub fn kfold_partition(n: usize, k: usize, seed: u64, stratify: Option<&[u8]>) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!("fold count {k} must lie in [2, {n}]")));
    }
    let mut rng = seeded(seed);
    let groups: Vec<Vec<usize>> = match stratify {
        Some(y) => {
            if y.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} rows", y.len())));
            }
            [0u8, 1].iter().map(|&c| (0..n).filter(|&i| y[i] == c).collect()).collect()
        }
        None => vec![(0..n).collect()],
    };
    let mut assignments = vec![0; n];
    let mut counter = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            assignments[i] = counter % k;
            counter += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified: stratify.is_some(),
    })
}

pub type HyperGrid = BTreeMap<String, Vec<HyperValue>>;

/// Every combination of grid values. Names vary slowest-first in sorted
/// order; an empty grid yields one empty point.
pub fn grid_expand(grid: &HyperGrid) -> Result<Vec<HyperPoint>> {
    if let Some((name, _)) = grid.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::InvalidParameter(format!("grid entry `{name}` has no values")));
    }
    let mut points = vec![HyperPoint::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Accuracy,
    Kappa,
    Sensitivity,
    Specificity,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Accuracy => "accuracy",
            Metric::Kappa => "kappa",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
        }
    }

    /// Metric of `scores` against `labels`; `None` when undefined.
    pub fn compute(self, scores: &[f64], labels: &[u8], threshold: f64) -> Result<Option<f64>> {
        if self == Metric::Auc {
            return match auc_score(scores, labels) {
                Ok(a) => Ok(Some(a)),
                Err(Error::SingleClass(_)) => Ok(None),
                Err(e) => Err(e),
            };
        }
        let m = metrics(&confusion(labels, &threshold_predictions(scores, threshold))?);
        Ok(match self {
            Metric::Accuracy => Some(m.accuracy),
            Metric::Kappa => m.kappa,
            Metric::Sensitivity => m.sensitivity,
            Metric::Specificity => m.specificity,
            Metric::Auc => unreachable!(),
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auc" => Ok(Metric::Auc),
            "accuracy" => Ok(Metric::Accuracy),
            "kappa" => Ok(Metric::Kappa),
            "sensitivity" => Ok(Metric::Sensitivity),
            "specificity" => Ok(Metric::Specificity),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

/// What to fit and how to score it inside each fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSetup {
    pub kind: ModelKind,
    pub label: String,
    pub metric: Metric,
    /// Probability cut for the threshold-based metrics.
    pub threshold: f64,
    /// Scaler refitted on each fold's training rows.
    pub scaler: Option<ScalerMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub repeat: usize,
    pub fold: usize,
    pub value: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: HyperPoint,
    pub folds: Vec<FoldOutcome>,
    /// Mean over every fold (all repeats) that produced a value.
    pub mean: Option<f64>,
}

impl PointResult {
    fn new(point: HyperPoint, folds: Vec<FoldOutcome>) -> Self {
        let values: Vec<f64> = folds.iter().filter_map(|f| f.value).collect();
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        PointResult { point, folds, mean }
    }
}

fn run_fold(setup: &CvSetup, point: &HyperPoint, ds: &Dataset, plan: &FoldPlan, fold: usize) -> Result<Option<f64>> {
    let (train_idx, test_idx) = plan.split(fold);
    let train = ds.select_rows(&train_idx);
    let held = ds.select_rows(&test_idx);
    let seed = derive_seed(plan.seed, fold as u64);
    let model = TrainedModel::fit(setup.kind.as_str(), setup.kind, point, &train, &setup.label, setup.scaler, seed)?;
    let scores = model.predict_proba(&held)?;
    setup.metric.compute(&scores, held.label(&setup.label)?, setup.threshold)
}

fn run_folds(setup: &CvSetup, point: &HyperPoint, ds: &Dataset, plan: &FoldPlan, repeat: usize) -> Vec<FoldOutcome> {
    (0..plan.k)
        .map(|fold| {
            let start = Instant::now();
            let r = run_fold(setup, point, ds, plan, fold);
            let seconds = start.elapsed().as_secs_f64();
            let (value, error) = match r {
                Ok(Some(v)) => (Some(v), None),
                Ok(None) => (None, Some(format!("{} undefined on this fold", setup.metric.as_str()))),
                Err(e) => (None, Some(e.to_string())),
            };
            FoldOutcome { repeat, fold, value, error, seconds }
        })
        .collect()
}

/// Fits on all rows outside each fold and scores the fold. The model seed
/// for fold `i` is `derive_seed(plan.seed, i)`. Any failing fold aborts with
/// its index.
pub fn cross_validate(setup: &CvSetup, point: &HyperPoint, ds: &Dataset, plan: &FoldPlan) -> Result<PointResult> {
    check_point(setup.kind, point)?;
    if plan.assignments.len() != ds.rows() {
        return Err(Error::Shape(format!("fold plan for {} rows, dataset has {}", plan.assignments.len(), ds.rows())));
    }
    let mut folds = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let start = Instant::now();
        let value = run_fold(setup, point, ds, plan, fold)
            .map_err(|e| Error::Fold { fold, source: Box::new(e) })?
            .ok_or_else(|| Error::Fold {
                fold,
                source: Box::new(Error::InvalidParameter(format!("{} undefined on this fold", setup.metric.as_str()))),
            })?;
        folds.push(FoldOutcome {
            repeat: 0,
            fold,
            value: Some(value),
            error: None,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(PointResult::new(point.clone(), folds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOptions {
    pub k: usize,
    pub repeats: usize,
    /// Share of the training rows (drawn stratified) used for tuning.
    pub subset_frac: f64,
    pub seed: u64,
    pub stratify: bool,
    /// Refit the best point on the full training set.
    pub refit: bool,
}

impl Default for GridSearchOptions {
    fn default() -> Self {
        GridSearchOptions {
            k: 5,
            repeats: 1,
            subset_frac: 0.10,
            seed: 0,
            stratify: true,
            refit: true,
        }
    }
}

const SUBSET_STREAM: u64 = u64::MAX;

impl GridSearchOptions {
    /// Seed of the fold plan for repeat `r`.
    pub fn plan_seed(&self, repeat: usize) -> u64 {
        derive_seed(self.seed, repeat as u64)
    }

    pub fn subset_seed(&self) -> u64 {
        derive_seed(self.seed, SUBSET_STREAM)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub metric: Metric,
    pub points: Vec<PointResult>,
    pub best: usize,
    /// Rows of the training set used for tuning, ascending.
    pub subset_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

impl CvResult {
    pub fn best_point(&self) -> &HyperPoint {
        &self.points[self.best].point
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub cv: CvResult,
    /// Refit on the full training set at the best point with `opts.seed`,
    /// when requested.
    pub model: Option<TrainedModel>,
}

/// Cross-validates every grid point on a stratified tuning subset, pooling
/// `repeats` independent fold plans, picks the best mean (first in grid
/// order on ties) and refits it on all of `train`.
pub fn grid_search(setup: &CvSetup, name: &str, grid: &HyperGrid, train: &Dataset, opts: &GridSearchOptions) -> Result<GridSearchResult> {
    if !(opts.subset_frac > 0.0 && opts.subset_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!("subset_frac {} outside (0, 1]", opts.subset_frac)));
    }
    if opts.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    let points = grid_expand(grid)?;
    for p in &points {
        check_point(setup.kind, p)?;
    }
    let y = train.label(&setup.label)?;
    let subset_rows: Vec<usize> = if opts.subset_frac < 1.0 {
        stratified_indices(y, opts.subset_frac, opts.subset_seed(), true)?.0
    } else {
        (0..train.rows()).collect()
    };
    let subset = if opts.subset_frac < 1.0 { train.select_rows(&subset_rows) } else { train.clone() };
    let sy = subset.label(&setup.label)?;
    let plans = (0..opts.repeats)
        .map(|r| kfold_partition(subset.rows(), opts.k, opts.plan_seed(r), opts.stratify.then_some(sy)))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<PointResult> = points
        .par_iter()
        .map(|p| {
            let folds = plans.iter().enumerate().flat_map(|(r, plan)| run_folds(setup, p, &subset, plan, r)).collect();
            PointResult::new(p.clone(), folds)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        let failed = r.folds.iter().filter(|f| f.value.is_none()).count();
        match r.mean {
            None => warnings.push(format!(
                "{name}: point [{}] failed on every fold and is excluded: {}",
                point_label(&r.point),
                r.folds[0].error.as_deref().unwrap_or("")
            )),
            Some(m) => {
                if failed > 0 {
                    warnings.push(format!("{name}: point [{}] failed on {failed} fold(s)", point_label(&r.point)));
                }
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((i, m));
                }
            }
        }
    }
    let Some((best, _)) = best else {
        return Err(Error::InvalidParameter(format!("{name}: no grid point produced a {} value", setup.metric.as_str())));
    };
    let model = if opts.refit {
        Some(TrainedModel::fit(name, setup.kind, &results[best].point, train, &setup.label, setup.scaler, opts.seed)?)
    } else {
        None
    };
    Ok(GridSearchResult {
        cv: CvResult {
            metric: setup.metric,
            points: results,
            best,
            subset_rows,
            warnings,
        },
        model,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (point, repeat, fold) plus a `mean` row per point. Timings
/// are left out so the file is reproducible; see [`tuning_timings_csv`].
pub fn tuning_report_csv(model: &str, cv: &CvResult) -> String {
    let mut s = String::from("model,point,params,repeat,fold,metric,value,selected,error\n");
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    for (i, r) in cv.points.iter().enumerate() {
        let params = csv_field(&point_label(&r.point));
        let selected = u8::from(i == cv.best);
        for f in &r.folds {
            writeln!(
                s,
                "{model},{i},{params},{},{},{},{},{selected},{}",
                f.repeat,
                f.fold,
                cv.metric.as_str(),
                fmt(f.value),
                csv_field(f.error.as_deref().unwrap_or(""))
            )
            .expect("string write");
        }
        writeln!(s, "{model},{i},{params},all,mean,{},{},{selected},", cv.metric.as_str(), fmt(r.mean)).expect("string write");
    }
    s
}

pub fn tuning_timings_csv(model: &str, cv: &CvResult) -> String {
    let mut s = String::from("model,point,repeat,fold,seconds\n");
    for (i, r) in cv.points.iter().enumerate() {
        for f in &r.folds {
            writeln!(s, "{model},{i},{},{},{:.6}", f.repeat, f.fold, f.seconds).expect("string write");
        }
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
