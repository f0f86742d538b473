use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
label = "breakthrough"

[data.synth]
preset = "rare_anomaly"
n = 4000
positive_rate = 0.05

[tuning]
k = 3
subset_frac = 0.5

[[models]]
name = "Logit"
kind = "logit"

[[models]]
name = "Tree"
kind = "cart"
grid = { cp = [0.001, 0.01] }

[autoencoder]
features = ["sim.past", "sim.present", "patent_scope", "family_size", "bwd_cits", "npl_cits"]
hidden = [4, 2, 4]
activations = ["tanh", "relu", "tanh", "linear"]
epochs = 2
band = [1.0, 1e9]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn rareml(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rareml"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn all_writes_bundle_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = rareml(&["all"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "data/train.csv",
        "data/test.csv",
        "preprocess/scaler.json",
        "tune/best_params.json",
        "tune/tree.csv",
        "models/logit.json",
        "models/tree_tree.txt",
        "report/metrics.csv",
        "report/roc_logit.csv",
        "report/summary.txt",
        "anomaly/band.txt",
        "anomaly/scores_test.csv",
        "timing/tune_tree.csv",
        "runlog.txt",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7\n"));
    assert!(manifest.contains("stage.train.seed = "));
    assert!(!manifest.contains("timing/"));
    let band = std::fs::read_to_string(out.join("anomaly/band.txt")).unwrap();
    assert!(band.starts_with("lo = 1\nhi = 1000000000\n"), "{band}");
}

#[test]
fn stages_run_one_at_a_time_and_evaluate_twice_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    for stage in ["generate", "split", "preprocess", "tune", "train", "evaluate"] {
        let o = rareml(&[stage], &cfg, &out);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
        assert!(!stderr(&o).contains("warning"), "{stage}: {}", stderr(&o));
    }
    let first = std::fs::read(out.join("report/metrics.csv")).unwrap();
    let o = rareml(&["evaluate"], &cfg, &out);
    assert!(o.status.success());
    assert!(stderr(&o).contains("already been evaluated"), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("report/metrics.csv")).unwrap(), first);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("evaluate.runs = 2\n"));
}

#[test]
fn missing_prerequisite_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = rareml(&["train"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run `tune` first"), "{}", stderr(&o));
}

#[test]
fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        (SMALL.replace("label = \"breakthrough\"", "label = \"nope\""), "label:"),
        (SMALL.replace("kind = \"cart\"", "kind = \"svm\""), "models[1].kind"),
        (SMALL.replace("cp = [0.001, 0.01]", "depth = [3]"), "models[1].grid.depth"),
        (SMALL.replace("\"npl_cits\"]", "\"tech_field\"]"), "autoencoder.features"),
        (
            SMALL.replace("hidden = [4, 2, 4]\nactivations = [\"tanh\", \"relu\", \"tanh\", \"linear\"]", "hidden = [8]"),
            "autoencoder.hidden",
        ),
        (SMALL.replace("k = 3", "k = 1"), "tuning.k"),
        (SMALL.replace("preset = \"rare_anomaly\"", "preset = \"other\""), "data.synth.preset"),
        (format!("{SMALL}\n[data.csv]\npath = \"a.csv\"\nschema = \"a.schema\"\n"), "data:"),
        (format!("colour = 1\n{SMALL}"), "unknown field `colour`"),
    ];
    for (text, field) in cases {
        let cfg = write_config(dir.path(), &text);
        let o = rareml(&["all"], &cfg, &out);
        assert_eq!(o.status.code(), Some(1), "{field}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "expected `{field}` in: {}", stderr(&o));
    }
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = rareml(&["generate"], &cfg, &blocker);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn csv_source_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,g,y\n");
    for i in 0..200 {
        let y = u8::from(i % 10 == 0);
        csv.push_str(&format!("{},{},{},{y}\n", i as f64 / 10.0, (i * 7 % 13) as f64, ["p", "q"][i % 2]));
    }
    std::fs::create_dir(dir.path().join("in")).unwrap();
    std::fs::write(dir.path().join("in/data.csv"), csv).unwrap();
    std::fs::write(dir.path().join("in/data.schema"), "a = continuous\nb = continuous\ng = categorical\ny = label\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\nlabel = \"y\"\n[data.csv]\npath = \"in/data.csv\"\nschema = \"in/data.schema\"\n\
         [[models]]\nname = \"lr\"\nkind = \"logit\"\n[tuning]\nk = 2\nsubset_frac = 1.0\n",
    );
    let out = dir.path().join("out");
    let o = rareml(&["all"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("input:data@"));
    let schema = std::fs::read_to_string(out.join("data/schema.txt")).unwrap();
    assert!(schema.contains("g = categorical: p, q"), "{schema}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(rareml(&["generate"], &cfg, &a).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_rareml"))
        .args(["generate", "--seed", "8", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(std::fs::read_to_string(b.join("manifest.txt")).unwrap().contains("seed = 8\n"));
    assert_ne!(std::fs::read(a.join("data/full.csv")).unwrap(), std::fs::read(b.join("data/full.csv")).unwrap());
}
