use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_speechgrade"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is json")
}

/// Error JSON from a failing invocation.
fn err(args: &[&str], cwd: &Path) -> Value {
    let out = run(args, cwd);
    assert!(!out.status.success(), "{args:?} should fail");
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("stderr is not json: {line}"))
}

fn synth(dir: &Path, n: &str) {
    ok(&["synth", "--seed", "4", "--n", n, "--out", "corpus"], dir);
}

const NO_AUDIO: &str = "CF,FF,SPF,GVF";

#[test]
fn help_lists_every_flag_with_defaults() {
    type Case<'a> = (&'a str, &'a [&'a str], &'a [(&'a str, &'a str)]);
    let cases: &[Case] = &[
        ("synth", &["--out", "--second-rater"], &[("--n", "500"), ("--grades", "3"), ("--prompts", "1"), ("--noise", "0.15"), ("--acoustic", "false")]),
        ("extract", &["--corpus", "--resources", "--out"], &[("--groups", "CF,FF,SPF,GVF,AF"), ("--no-split", "false")]),
        ("train", &["--features", "--out"], &[("--family", "gbt"), ("--task", "regression"), ("--groups", "all"), ("--folds", "5")]),
        ("evaluate", &["--model", "--features", "--predictions", "--n-grades", "--out"], &[("--split", "test")]),
        ("explain", &["--model", "--features", "--feature", "--class", "--out"], &[("--split", "train"), ("--grid", "20"), ("--method", "gain"), ("--top", "20")]),
        ("ablate", &["--features", "--out"], &[("--order", "CF,FF,SPF,GVF,AF"), ("--family", "gbt"), ("--task", "regression"), ("--folds", "5")]),
        ("report", &["--features", "--out"], &[("--families", "all"), ("--tasks", "all"), ("--groups", "CF,FF,SPF,GVF,AF"), ("--folds", "5")]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    for (sub, plain, defaulted) in cases {
        let out = run(&[sub, "--help"], tmp.path());
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in plain.iter().chain(&["--seed", "--config"]) {
            assert!(text.contains(&format!("{flag} ")), "{sub} --help misses {flag}:\n{text}");
        }
        for (flag, default) in defaulted.iter().chain(&[("--threads", "0")]) {
            let line = text
                .lines()
                .find(|l| l.trim_start().starts_with(&format!("{flag} ")))
                .unwrap_or_else(|| panic!("{sub} --help misses {flag}:\n{text}"));
            // Long help lines wrap; the default follows on the same or a later line.
            let rest = &text[text.find(line).unwrap()..];
            let next_flag = rest[1..].find("\n  -").map_or(rest.len(), |i| i + 1);
            assert!(
                rest[..next_flag].contains(&format!("[default: {default}]")),
                "{sub} {flag} should show default {default}:\n{text}"
            );
        }
    }
}

#[test]
fn extract_three_response_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "60");
    let manifest: Vec<String> = fs::read_to_string(tmp.path().join("corpus/manifest.txt"))
        .unwrap()
        .lines()
        .take(3)
        .map(str::to_string)
        .collect();
    fs::write(tmp.path().join("corpus/three.txt"), manifest.join("\n")).unwrap();
    let s = ok(
        &["extract", "--seed", "4", "--corpus", "corpus/three.txt", "--resources", "corpus/resources", "--groups", NO_AUDIO, "--no-split", "--out", "feats"],
        tmp.path(),
    );
    assert_eq!(s["rows"], 3);
    let csv = fs::read_to_string(tmp.path().join("feats/features_p1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2 + 3);
    let tags: Vec<&str> = lines[0].split(',').collect();
    let names: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&names[..4], &["response_id", "split", "grade", "grade2"]);
    for g in ["CF", "FF", "SPF", "GVF"] {
        assert!(tags.contains(&g), "no {g} column");
    }
    assert!(!tags.contains(&"AF"));
    assert!(names[tags.iter().position(|t| *t == "FF").unwrap()..].contains(&"speaking_rate"));
}

#[test]
fn evaluate_gold_predictions_gives_qwk_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("pred.csv"),
        "response_id,human,predicted\na,0,0\nb,1,1\nc,2,2\nd,1,1\ne,HB1,HB1\n",
    )
    .unwrap();
    let s = ok(&["evaluate", "--seed", "1", "--predictions", "pred.csv", "--out", "ev"], tmp.path());
    assert_eq!(s["qwk"], 1.0);
    assert_eq!(s["mse"], 0.0);
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["qwk"], 1.0);
    assert_eq!(report["n"], 5);
}

fn trained(tmp: &Path) -> (PathBuf, PathBuf) {
    synth(tmp, "90");
    ok(
        &["extract", "--seed", "4", "--corpus", "corpus/manifest.txt", "--resources", "corpus/resources", "--groups", NO_AUDIO, "--out", "feats"],
        tmp,
    );
    ok(&["train", "--seed", "4", "--features", "feats/features_p1.csv", "--family", "decision_tree", "--folds", "3", "--out", "model"], tmp);
    (tmp.join("model/model.json"), tmp.join("feats/features_p1.csv"))
}

#[test]
fn pdp_for_one_feature_writes_one_csv_and_one_svg() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    ok(
        &["explain", "pdp", "--seed", "4", "--model", "model/model.json", "--features", "feats/features_p1.csv", "--feature", "speaking_rate", "--out", "pdp"],
        tmp.path(),
    );
    let mut files: Vec<String> = fs::read_dir(tmp.path().join("pdp"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, vec!["pdp_speaking_rate.csv", "pdp_speaking_rate.svg"]);
    let csv = fs::read_to_string(tmp.path().join("pdp/pdp_speaking_rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
    let svg = fs::read_to_string(tmp.path().join("pdp/pdp_speaking_rate.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn train_evaluate_explain_and_ablate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    let t = tmp.path();
    let ev = ok(&["evaluate", "--seed", "4", "--model", "model/model.json", "--features", "feats/features_p1.csv", "--out", "ev"], t);
    assert!(ev["qwk"].as_f64().unwrap() > 0.0);
    // The predictions file written by evaluate scores identically on its own.
    let again = ok(&["evaluate", "--seed", "4", "--predictions", "ev/predictions.csv", "--n-grades", "3", "--out", "ev2"], t);
    assert_eq!(ev["qwk"], again["qwk"]);
    ok(&["explain", "importance", "--seed", "4", "--model", "model/model.json", "--out", "imp"], t);
    assert!(t.join("imp/importance_gain.csv").exists() && t.join("imp/importance_gain.svg").exists());
    ok(&["explain", "shap", "--seed", "4", "--model", "model/model.json", "--features", "feats/features_p1.csv", "--split", "test", "--out", "shap"], t);
    let values = fs::read_to_string(t.join("shap/shap_values.csv")).unwrap();
    assert_eq!(values.lines().count(), 1 + ev["n"].as_u64().unwrap() as usize);
    let ab = ok(
        &["ablate", "add", "--seed", "4", "--features", "feats/features_p1.csv", "--order", "FF,GVF", "--family", "decision_tree", "--folds", "3", "--out", "abl"],
        t,
    );
    assert_eq!(ab["configurations"], 2);
    let csv = fs::read_to_string(t.join("abl/ablation_add.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("FF+GVF,"));
    ok(
        &["report", "--seed", "4", "--features", "feats/features_p1.csv", "--families", "linear,decision_tree", "--tasks", "regression", "--groups", NO_AUDIO, "--folds", "3", "--out", "rep"],
        t,
    );
    let cmp = fs::read_to_string(t.join("rep/comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 1 + 2);
    assert!(t.join("rep/p1/decision_tree/regression/model.json").exists());
}

#[test]
fn commands_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, _) = trained(tmp.path());
    let first = fs::read(&model).unwrap();
    let feats = fs::read(tmp.path().join("feats/features_p1.csv")).unwrap();
    trained(tmp.path());
    assert_eq!(fs::read(&model).unwrap(), first);
    assert_eq!(fs::read(tmp.path().join("feats/features_p1.csv")).unwrap(), feats);
}

#[test]
fn config_file_supplies_seed_and_paths() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "60");
    fs::write(
        tmp.path().join("run.toml"),
        "seed = 4\n[paths]\ncorpus = \"corpus/manifest.txt\"\nresources = \"corpus/resources\"\nout = \"cfg_out\"\n[features]\ngroups = [\"FF\", \"GVF\"]\n",
    )
    .unwrap();
    let s = ok(&["extract", "--config", "run.toml"], tmp.path());
    assert_eq!(s["rows"], 60);
    let csv = fs::read_to_string(tmp.path().join("cfg_out/features_p1.csv")).unwrap();
    let tags = csv.lines().next().unwrap();
    assert!(!tags.contains("CF") && tags.contains("FF") && tags.contains("GVF"));
}

#[test]
fn unknown_group_is_a_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "60");
    let e = err(&["extract", "--seed", "1", "--corpus", "corpus/manifest.txt", "--groups", "FF,XYZ", "--out", "o"], tmp.path());
    assert_eq!(e["error"], "unknown_group");
    assert!(e["message"].as_str().unwrap().contains("XYZ"));
}

#[test]
fn malformed_manifest_is_a_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("m.txt"), "missing.json\n").unwrap();
    let e = err(&["extract", "--seed", "1", "--corpus", "m.txt", "--out", "o"], tmp.path());
    assert_eq!(e["error"], "io");
    fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    fs::write(tmp.path().join("m.txt"), "broken.json\n").unwrap();
    let e = err(&["extract", "--seed", "1", "--corpus", "m.txt", "--out", "o"], tmp.path());
    assert_eq!(e["error"], "parse");
    assert!(e["message"].as_str().unwrap().contains("malformed json"));
}

#[test]
fn missing_wav_with_acoustic_features_is_a_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "60");
    let e = err(&["extract", "--seed", "1", "--corpus", "corpus/manifest.txt", "--groups", "FF,AF", "--out", "o"], tmp.path());
    assert_eq!(e["error"], "missing_audio");
    // A referenced WAV that is not on disk.
    let first = fs::read_to_string(tmp.path().join("corpus/manifest.txt")).unwrap().lines().next().unwrap().to_string();
    let path = tmp.path().join("corpus").join(&first);
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["wav"] = Value::from("nowhere.wav");
    fs::write(&path, v.to_string()).unwrap();
    let e = err(&["extract", "--seed", "1", "--corpus", "corpus/manifest.txt", "--groups", "FF,AF", "--out", "o"], tmp.path());
    assert!(e["error"] == "missing_audio" || e["error"] == "io" || e["error"] == "audio", "{e}");
}

#[test]
fn missing_seed_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let e = err(&["synth", "--out", "x"], tmp.path());
    assert_eq!(e["error"], "usage");
    let e = err(&["train", "--seed", "1"], tmp.path());
    assert_eq!(e["error"], "usage");
}
