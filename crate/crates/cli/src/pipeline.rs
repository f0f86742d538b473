//! Pipeline stages. Each stage reads its inputs from the run directory
//! through a [`StageContext`], so the manifest records exactly which
//! artifacts it touched.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use rareml::anomaly::{
    calibrate_band, classify_band, BandObjective, BandSearch, score_dataset, train_autoencoder, write_scores_csv, Autoencoder, ErrorMetric,
    ThresholdBand,
};
use rareml::dataset::{load_csv, stratified_split, synth_generate, write_csv, Dataset, MissingPolicy, Schema};
use rareml::eval::{auc_score, confusion, file_stem, metrics, roc, threshold_predictions, write_report, ModelOutput};
use rareml::model::{self, fit_model, point_label, FittedModel, HyperPoint, TrainedModel};
use rareml::preprocess::{apply_scaler, conditional_summary, fit_scaler, one_hot_all, write_summary_csv, ScalerParams};
use rareml::rng::derive_seed;
use rareml::tune::{grid_search, tuning_report_csv, tuning_timings_csv, CvSetup, GridSearchOptions};

use crate::config::{BandRule, Plan, Source};
use crate::manifest::{Manifest, StageContext, RUNLOG_FILE, TIMING_DIR};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Generate,
    Split,
    Preprocess,
    Tune,
    Train,
    Evaluate,
    Detect,
    Report,
    All,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Split => "split",
            Command::Preprocess => "preprocess",
            Command::Tune => "tune",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Detect => "detect",
            Command::Report => "report",
            Command::All => "all",
        }
    }

    /// Index used to derive the stage seed from the run seed.
    fn seed_stream(self) -> Option<u64> {
        match self {
            Command::Generate => Some(1),
            Command::Split => Some(2),
            Command::Tune => Some(3),
            Command::Train => Some(4),
            Command::Detect => Some(5),
            _ => None,
        }
    }
}

pub const FULL_CSV: &str = "data/full.csv";
pub const SCHEMA_TXT: &str = "data/schema.txt";
pub const TRAIN_CSV: &str = "data/train.csv";
pub const TEST_CSV: &str = "data/test.csv";
pub const SCALER_JSON: &str = "preprocess/scaler.json";
pub const SUMMARY_CSV: &str = "preprocess/summary.csv";
pub const BEST_PARAMS: &str = "tune/best_params.json";
pub const TUNE_WARNINGS: &str = "tune/warnings.txt";
pub const REPORT_DIR: &str = "report";
pub const AE_JSON: &str = "anomaly/autoencoder.json";
pub const BAND_TXT: &str = "anomaly/band.txt";
pub const AE_METRICS: &str = "anomaly/metrics.csv";
pub const EVALUATE_RUNS: &str = "evaluate.runs";

/// Tuned hyperparameters of one configured model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BestParams {
    name: String,
    kind: String,
    point: HyperPoint,
    metric: String,
    cv_mean: Option<f64>,
}

/// Everything `detect` needs to score new rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnomalyModel {
    scaler: Option<ScalerParams>,
    metric: ErrorMetric,
    autoencoder: Autoencoder,
}

fn rt(e: rareml::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Runs `command` against `plan`, updating the manifest after each stage.
pub fn run(plan: &Plan, command: Command) -> Result<(), CliError> {
    let out = &plan.out_dir;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut manifest = if command == Command::All {
        Manifest::default()
    } else {
        Manifest::read(out)?
    };
    manifest.set("config.sha256", &plan.config_sha256);
    manifest.set("seed", plan.seed);
    manifest.set("tool.version", env!("CARGO_PKG_VERSION"));

    let stages: Vec<Command> = match command {
        Command::All => {
            let mut s = vec![Command::Generate, Command::Split, Command::Preprocess];
            if !plan.models.is_empty() {
                s.extend([Command::Tune, Command::Train, Command::Evaluate]);
            }
            if plan.autoencoder.is_some() {
                s.push(Command::Detect);
            }
            s.push(Command::Report);
            s
        }
        c => vec![c],
    };
    for stage in stages {
        let start = Instant::now();
        let mut ctx = StageContext::new(stage.as_str(), out);
        ctx.seed = stage.seed_stream().map(|i| derive_seed(plan.seed, i));
        let result = match stage {
            Command::Generate => generate(plan, &mut ctx),
            Command::Split => split(plan, &mut ctx),
            Command::Preprocess => preprocess(plan, &mut ctx, &mut manifest),
            Command::Tune => tune(plan, &mut ctx),
            Command::Train => train(plan, &mut ctx),
            Command::Evaluate => evaluate(plan, &mut ctx, &mut manifest),
            Command::Detect => detect(plan, &mut ctx),
            Command::Report => report(plan, &mut ctx),
            Command::All => unreachable!("expanded above"),
        };
        let status = if result.is_ok() { "ok" } else { "failed" };
        runlog(out, stage.as_str(), status, start.elapsed().as_secs_f64())?;
        result?;
        ctx.commit(&mut manifest);
        manifest.write(out)?;
    }
    Ok(())
}

fn runlog(out: &std::path::Path, stage: &str, status: &str, seconds: f64) -> Result<(), CliError> {
    use std::io::Write;
    let path = out.join(RUNLOG_FILE);
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| io(&path, e))?;
    writeln!(f, "unix_time={now} stage={stage} status={status} seconds={seconds:.3}").map_err(|e| io(&path, e))
}

fn load_split(ctx: &mut StageContext, rel: &str) -> Result<Dataset, CliError> {
    let schema = Schema::parse(&ctx.read_text(SCHEMA_TXT, "generate")?).map_err(rt)?;
    let path = ctx.read(rel, "split")?;
    load_csv(&path, &schema, MissingPolicy::Error).map_err(rt)
}

fn generate(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    let seed = ctx.seed.expect("generate has a seed");
    let ds = match &plan.source {
        Source::Synth(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed;
            synth_generate(&spec).map_err(rt)?
        }
        Source::Csv { path, schema, impute } => {
            ctx.read_external("input:schema", schema)?;
            ctx.read_external("input:data", path)?;
            let s = Schema::read(schema).map_err(|e| CliError::Validation(format!("data.csv.schema: {e}")))?;
            let policy = if *impute { MissingPolicy::Impute } else { MissingPolicy::Error };
            load_csv(path, &s, policy).map_err(|e| CliError::Validation(format!("data.csv.path: {e}")))?
        }
    };
    ds.label(&plan.label)
        .map_err(|_| CliError::Validation(format!("label: `{}` not present in the data", plan.label)))?;
    ctx.write(SCHEMA_TXT, Schema::of(&ds).to_text().as_bytes())?;
    write_csv(&ds, ctx.output(FULL_CSV)?).map_err(rt)?;
    ctx.wrote(FULL_CSV)
}

fn split(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    let schema = Schema::parse(&ctx.read_text(SCHEMA_TXT, "generate")?).map_err(rt)?;
    let path = ctx.read(FULL_CSV, "generate")?;
    let ds = load_csv(&path, &schema, MissingPolicy::Error).map_err(rt)?;
    let pair = stratified_split(&ds, plan.split_fraction, &plan.label, ctx.seed.expect("split seed")).map_err(rt)?;
    write_csv(&pair.train, ctx.output(TRAIN_CSV)?).map_err(rt)?;
    ctx.wrote(TRAIN_CSV)?;
    write_csv(&pair.test, ctx.output(TEST_CSV)?).map_err(rt)?;
    ctx.wrote(TEST_CSV)
}

fn preprocess(plan: &Plan, ctx: &mut StageContext, manifest: &mut Manifest) -> Result<(), CliError> {
    let train = load_split(ctx, TRAIN_CSV)?;
    let params = match plan.scaler {
        Some(method) => Some(fit_scaler(&train, method).map_err(rt)?),
        None => None,
    };
    manifest.clear_prefix("scaler.");
    if let Some(p) = &params {
        for c in &p.columns {
            manifest.set(format!("scaler.{}.mean", c.name), c.mean);
            manifest.set(format!("scaler.{}.sd", c.name), c.sd);
        }
    }
    ctx.write(SCALER_JSON, model::to_text(&params).map_err(rt)?.as_bytes())?;
    let rows = conditional_summary(&train, &plan.label).map_err(rt)?;
    write_summary_csv(&rows, ctx.output(SUMMARY_CSV)?).map_err(rt)?;
    ctx.wrote(SUMMARY_CSV)
}

fn tune(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    if plan.models.is_empty() {
        return Err(CliError::Validation("models: no [[models]] configured to tune".into()));
    }
    let train = one_hot_all(&load_split(ctx, TRAIN_CSV)?).map_err(rt)?;
    let stage_seed = ctx.seed.expect("tune seed");
    let mut best = Vec::new();
    let mut warnings = String::new();
    for (i, m) in plan.models.iter().enumerate() {
        let setup = CvSetup {
            kind: m.kind,
            label: plan.label.clone(),
            metric: plan.metric,
            threshold: plan.threshold,
            scaler: plan.scaler,
        };
        let opts = GridSearchOptions {
            k: plan.tuning.k,
            repeats: plan.tuning.repeats,
            subset_frac: plan.tuning.subset_frac,
            seed: derive_seed(stage_seed, i as u64),
            stratify: true,
            refit: false,
        };
        let result = grid_search(&setup, &m.name, &m.grid, &train, &opts)
            .map_err(|e| CliError::Runtime(format!("tuning `{}`: {e}", m.name)))?;
        let stem = file_stem(&m.name);
        ctx.write(&format!("tune/{stem}.csv"), tuning_report_csv(&m.name, &result.cv).as_bytes())?;
        ctx.write_untracked(&format!("{TIMING_DIR}/tune_{stem}.csv"), &tuning_timings_csv(&m.name, &result.cv))?;
        for w in &result.cv.warnings {
            warnings.push_str(&format!("{}: {w}\n", m.name));
        }
        best.push(BestParams {
            name: m.name.clone(),
            kind: m.kind.as_str().to_string(),
            point: result.cv.best_point().clone(),
            metric: plan.metric.as_str().to_string(),
            cv_mean: result.cv.points[result.cv.best].mean,
        });
    }
    ctx.write(BEST_PARAMS, model::to_text(&best).map_err(rt)?.as_bytes())?;
    ctx.write(TUNE_WARNINGS, warnings.as_bytes())
}

fn train(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    let best: Vec<BestParams> = model::from_text(&ctx.read_text(BEST_PARAMS, "tune")?).map_err(rt)?;
    let scaler: Option<ScalerParams> = model::from_text(&ctx.read_text(SCALER_JSON, "preprocess")?).map_err(rt)?;
    let train = one_hot_all(&load_split(ctx, TRAIN_CSV)?).map_err(rt)?;
    let scaled = match &scaler {
        Some(p) => apply_scaler(&train, p).map_err(rt)?,
        None => train.clone(),
    };
    let stage_seed = ctx.seed.expect("train seed");
    for (i, m) in plan.models.iter().enumerate() {
        let b = best
            .iter()
            .find(|b| b.name == m.name && b.kind == m.kind.as_str())
            .ok_or_else(|| CliError::Validation(format!("models[{i}]: `{}` has no tuned parameters; run `tune` first", m.name)))?;
        let seed = derive_seed(stage_seed, i as u64);
        let fitted = fit_model(m.kind, &b.point, &scaled, &plan.label, seed)
            .map_err(|e| CliError::Runtime(format!("fitting `{}`: {e}", m.name)))?;
        let stem = file_stem(&m.name);
        if let FittedModel::Cart(tree) = &fitted {
            ctx.write(&format!("models/tree_{stem}.txt"), tree.render().as_bytes())?;
        }
        let trained = TrainedModel {
            name: m.name.clone(),
            point: b.point.clone(),
            seed,
            scaler: scaler.clone(),
            model: fitted,
        };
        ctx.write(&format!("models/{stem}.json"), model::to_text(&trained).map_err(rt)?.as_bytes())?;
    }
    Ok(())
}

fn evaluate(plan: &Plan, ctx: &mut StageContext, manifest: &mut Manifest) -> Result<(), CliError> {
    if plan.models.is_empty() {
        return Err(CliError::Validation("models: no [[models]] configured to evaluate".into()));
    }
    let mut trained = Vec::new();
    for m in &plan.models {
        let rel = format!("models/{}.json", file_stem(&m.name));
        let t: TrainedModel = model::from_text(&ctx.read_text(&rel, "train")?).map_err(rt)?;
        trained.push(t);
    }
    let previous: u64 = manifest.get(EVALUATE_RUNS).and_then(|v| v.parse().ok()).unwrap_or(0);
    if previous > 0 {
        let msg = format!(
            "warning: the test split has already been evaluated {previous} time(s) in this run directory; \
             repeated test-set evaluation turns it into a tuning set and biases the reported performance"
        );
        eprintln!("{msg}");
        let path = ctx.out_dir.join(RUNLOG_FILE);
        let mut log = std::fs::read_to_string(&path).unwrap_or_default();
        log.push_str(&msg);
        log.push('\n');
        std::fs::write(&path, log).map_err(|e| io(&path, e))?;
    }
    let test_raw = load_split(ctx, TEST_CSV)?;
    let test = one_hot_all(&test_raw).map_err(rt)?;
    let labels = test.label(&plan.label).map_err(rt)?.to_vec();
    let mut outputs = Vec::new();
    for t in &trained {
        let scores = t.predict_proba(&test).map_err(rt)?;
        let preds = threshold_predictions(&scores, plan.threshold);
        let importance = t.model.importance().transpose().map_err(rt)?;
        outputs.push(ModelOutput {
            name: t.name.clone(),
            scores,
            preds,
            importance,
        });
    }
    let dir = ctx.output(&format!("{REPORT_DIR}/metrics.csv"))?;
    let report = write_report(&outputs, &labels, dir.parent().expect("report dir")).map_err(rt)?;
    for f in &report.files {
        let rel = f.strip_prefix(&ctx.out_dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
        ctx.wrote(&rel)?;
    }
    manifest.set(EVALUATE_RUNS, previous + 1);
    Ok(())
}

fn detect(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    let ae = plan
        .autoencoder
        .as_ref()
        .ok_or_else(|| CliError::Validation("autoencoder: no [autoencoder] section configured".into()))?;
    let train = load_split(ctx, TRAIN_CSV)?;
    let test = load_split(ctx, TEST_CSV)?;
    let y_train = train.label(&plan.label).map_err(rt)?.to_vec();
    let y_test = test.label(&plan.label).map_err(rt)?.to_vec();
    let normal_rows: Vec<usize> = (0..train.rows()).filter(|&i| y_train[i] == 0).collect();
    let train_x = train.select_features(&ae.features).map_err(rt)?;
    let test_x = test.select_features(&ae.features).map_err(rt)?;
    let normals = train_x.select_rows(&normal_rows);
    let scaler = match plan.scaler {
        Some(m) => Some(fit_scaler(&normals, m).map_err(rt)?),
        None => None,
    };
    let scale = |ds: &Dataset| match &scaler {
        Some(p) => apply_scaler(ds, p).map_err(rt),
        None => Ok(ds.clone()),
    };
    let mut opts = ae.opts;
    opts.seed = ctx.seed.expect("detect seed");
    let net = train_autoencoder(&scale(&normals)?, Some(&plan.label), &ae.arch, opts).map_err(rt)?;
    let s_train = score_dataset(&net, &scale(&train_x)?, ae.metric).map_err(rt)?;
    let s_test = score_dataset(&net, &scale(&test_x)?, ae.metric).map_err(rt)?;

    let (band, how) = match ae.band {
        BandRule::Fixed(b) => (b, "fixed".to_string()),
        BandRule::Calibrate(obj, search) => (
            calibrate_band(&s_train, &y_train, obj, search).map_err(rt)?,
            format!(
                "calibrated on training scores ({}, {})",
                match obj {
                    BandObjective::Youden => "youden",
                    BandObjective::F1 => "f1",
                },
                match search {
                    BandSearch::LowerBound => "lower_bound",
                    BandSearch::Window => "window",
                }
            ),
        ),
    };
    let model = AnomalyModel {
        scaler,
        metric: ae.metric,
        autoencoder: net,
    };
    ctx.write(AE_JSON, model::to_text(&model).map_err(rt)?.as_bytes())?;
    write_scores_csv(ctx.output("anomaly/scores_train.csv")?, &s_train, Some(&y_train)).map_err(rt)?;
    ctx.wrote("anomaly/scores_train.csv")?;
    write_scores_csv(ctx.output("anomaly/scores_test.csv")?, &s_test, Some(&y_test)).map_err(rt)?;
    ctx.wrote("anomaly/scores_test.csv")?;
    ctx.write(BAND_TXT, band_text(band, &how).as_bytes())?;

    let preds = classify_band(&s_test, band).map_err(rt)?;
    let cm = confusion(&y_test, &preds).map_err(rt)?;
    let m = metrics(&cm);
    let auc = auc_score(&s_test, &y_test).ok();
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    let mut csv = String::from("metric,autoencoder\n");
    csv.push_str(&format!("Accuracy,{}\n", m.accuracy));
    csv.push_str(&format!("Kappa,{}\n", fmt(m.kappa)));
    csv.push_str(&format!("Sensitivity,{}\n", fmt(m.sensitivity)));
    csv.push_str(&format!("Specificity,{}\n", fmt(m.specificity)));
    csv.push_str(&format!("AUC,{}\n", fmt(auc)));
    csv.push_str(&format!("TP,{}\nFP,{}\nTN,{}\nFN,{}\n", cm.tp, cm.fp, cm.tn, cm.fn_));
    ctx.write(AE_METRICS, csv.as_bytes())?;
    if let Ok(curve) = roc(&s_test, &y_test) {
        let mut s = String::from("threshold,fpr,tpr\n");
        for i in 0..curve.thresholds.len() {
            let t = curve.thresholds[i];
            let t = if t.is_infinite() { "Inf".to_string() } else { format!("{t}") };
            s.push_str(&format!("{t},{},{}\n", curve.fpr[i], curve.tpr[i]));
        }
        ctx.write("anomaly/roc.csv", s.as_bytes())?;
    }
    Ok(())
}

fn band_text(band: ThresholdBand, how: &str) -> String {
    let hi = if band.hi.is_infinite() { "Inf".to_string() } else { format!("{}", band.hi) };
    format!("lo = {}\nhi = {hi}\nrule = {how}\n", band.lo)
}

fn report(plan: &Plan, ctx: &mut StageContext) -> Result<(), CliError> {
    let mut s = String::from("rareml run summary\n");
    s.push_str(&format!("label: {}\nseed: {}\nthreshold: {}\n", plan.label, plan.seed, plan.threshold));
    let mut any = false;
    if !plan.models.is_empty() {
        let best: Vec<BestParams> = model::from_text(&ctx.read_text(BEST_PARAMS, "tune")?).map_err(rt)?;
        s.push_str("\ntuned hyperparameters (cross-validated on the training subset):\n");
        for b in &best {
            let mean = b.cv_mean.map_or("NA".to_string(), |v| format!("{v:.4}"));
            let point = point_label(&b.point);
            let point = if point.is_empty() { "(defaults)".to_string() } else { point };
            s.push_str(&format!("  {} [{}]: {point}  cv {} = {mean}\n", b.name, b.kind, b.metric));
        }
        let metrics = ctx.read_text(&format!("{REPORT_DIR}/metrics.csv"), "evaluate")?;
        s.push_str("\ntest-set metrics:\n");
        s.push_str(&table(&metrics));
        any = true;
    }
    if plan.autoencoder.is_some() {
        let band = ctx.read_text(BAND_TXT, "detect")?;
        let metrics = ctx.read_text(AE_METRICS, "detect")?;
        s.push_str("\nautoencoder anomaly detection:\n");
        for line in band.lines() {
            s.push_str(&format!("  band {line}\n"));
        }
        s.push_str(&table(&metrics));
        any = true;
    }
    if !any {
        return Err(CliError::Validation("models: nothing to report (no models and no autoencoder configured)".into()));
    }
    ctx.write(&format!("{REPORT_DIR}/summary.txt"), s.as_bytes())
}

/// Space-aligned rendering of a small CSV.
fn table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|v| v.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, v)| format!("{v:<w$}", w = widths[i])).collect();
        out.push_str("  ");
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
