use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use finesent_core::corpus::{parse_corpus, split_corpus, Corpus, Split};
use finesent_core::models::{EmbeddingMatrix, FileEmbeddings};
use finesent_core::synth::{class_corpus, figure_one, pivot_corpus};
use ndarray::{Array1, Array2};
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn finesent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finesent"))
        .args(args)
        .env_remove("FGS_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn write_splits(dir: &Path, corpus: &Corpus) {
    let (train, dev, test) = split_corpus(corpus, 3).unwrap();
    fs::create_dir_all(dir).unwrap();
    for (name, c) in [("train", train), ("dev", dev), ("test", test)] {
        fs::write(dir.join(format!("{name}.json")), c.to_json()).unwrap();
    }
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.json");
    fs::write(&path, body).unwrap();
    path
}

const EXTRACT_SPEC: &str = r#"{
  "name": "pivot",
  "task": "extract",
  "data": {"train": "data/train.json", "dev": "data/dev.json", "test": "data/test.json"},
  "schemes": ["target/targeted"],
  "augment_modes": ["original", "full"],
  "seeds": [1, 2],
  "config": {"epochs": 3},
  "provider": {"kind": "hashed", "dim": 16, "seed": 3, "window": 0},
  "output_dir": "out"
}"#;

#[test]
fn convert_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let out = ok(finesent(&["convert", p(&fixture("reviews.conll")), p(&a), "--adapter", "conll"]));
    assert!(out.contains("3 sentences, 4 opinions, 0 validation errors"), "{out}");
    ok(finesent(&["convert", p(&a), p(&b)]));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let corpus = parse_corpus(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(corpus.sentences[1].sent_id, "r2");
    assert_eq!(corpus.sentences[1].opinions.len(), 2);
}

#[test]
fn convert_splits_with_seed() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("all.json");
    fs::write(&src, pivot_corpus(50, 1, Split::Unsplit).to_json()).unwrap();
    let out = dir.path().join("pivot.json");
    ok(finesent(&["--seed", "4", "convert", p(&src), p(&out), "--split"]));
    let sizes: Vec<usize> = ["train", "dev", "test"]
        .iter()
        .map(|s| parse_corpus(&fs::read(dir.path().join(format!("pivot.{s}.json"))).unwrap()).unwrap().len())
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 50);
}

#[test]
fn bad_input_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"name": "x", "split": "train", "sentences": [{"sent_id": "a", "tokens": ["a"], "opinions": [{"target": [[0, 5]], "polarity": "positive"}]}]}"#).unwrap();
    let o = finesent(&["convert", p(&bad), p(&dir.path().join("o.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("sentences[0]") || stderr(&o).contains("`a`"), "{}", stderr(&o));

    fs::write(&bad, "{not json").unwrap();
    assert_eq!(finesent(&["stats", p(&bad)]).status.code(), Some(2));

    let o = finesent(&["convert", p(&bad), "x", "--adapter", "xml"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(finesent(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(finesent(&["stats", p(&dir.path().join("missing.json"))]).status.code(), Some(3));
}

#[test]
fn stats_on_figure_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("fig.json");
    fs::write(&path, Corpus::new("fig", Split::Train, vec![figure_one()]).to_json()).unwrap();
    let text = ok(finesent(&["stats", p(&path)]));
    assert!(text.lines().next().unwrap().starts_with("corpus"), "{text}");
    let json: Value = serde_json::from_str(&ok(finesent(&["--format", "json", "stats", p(&path)]))).unwrap();
    let row = &json["stats"][0];
    assert_eq!(row["sentences"], 1);
    assert!(row["targets"]["count"].as_u64().unwrap() >= 1);
    assert!(json.get("overlap").is_none());

    let three = ok(finesent(&["--format", "json", "stats", p(&path), p(&path), p(&path)]));
    let json: Value = serde_json::from_str(&three).unwrap();
    assert_eq!(json["overlap"]["dev_in_train"], 100.0);
}

#[test]
fn run_caches_cells_and_models_predict() {
    let dir = TempDir::new().unwrap();
    write_splits(&dir.path().join("data"), &pivot_corpus(200, 8, Split::Unsplit));
    let spec = write_spec(dir.path(), EXTRACT_SPEC);
    let first = ok(finesent(&["--jobs", "2", "run", p(&spec)]));
    assert!(first.contains("4 cells: 4 executed, 0 cached, 0 failed"), "{first}");
    let second = ok(finesent(&["run", p(&spec)]));
    assert!(second.contains("4 cells: 0 executed, 4 cached, 0 failed"), "{second}");
    let forced = ok(finesent(&["--force", "run", p(&spec)]));
    assert!(forced.contains("4 executed"), "{forced}");

    let out = dir.path().join("out");
    for f in ["report.txt", "report.json", "matrix.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let registry = fs::read_to_string(out.join("registry.jsonl")).unwrap();
    assert_eq!(registry.lines().count(), 8);
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 4);
    let csv = fs::read_to_string(out.join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("baseline"), "{report}");

    let model = fs::read_dir(out.join("models"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let test = dir.path().join("data/test.json");
    let pred = dir.path().join("pred.conll");
    ok(finesent(&["predict", p(&model), p(&test), "-o", p(&pred)]));
    let eval: Value = serde_json::from_str(&ok(finesent(&[
        "--format", "json", "eval", p(&test), p(&pred), "--scheme", "target/targeted",
    ])))
    .unwrap();
    let f1 = eval["report"]["per_element"][0]["f1"].as_f64().unwrap();
    assert!(f1 >= 0.95, "{eval}");

    // a --seed override narrows the sweep to one seed
    let one = ok(finesent(&["--seed", "1", "run", p(&spec)]));
    assert!(one.contains("2 cells: 0 executed, 2 cached"), "{one}");
}

#[test]
fn data_dir_override() {
    let dir = TempDir::new().unwrap();
    write_splits(&dir.path().join("elsewhere/data"), &pivot_corpus(60, 8, Split::Unsplit));
    let spec = write_spec(dir.path(), &EXTRACT_SPEC.replace(r#""seeds": [1, 2]"#, r#""seeds": [1]"#));
    let o = finesent(&["run", p(&spec)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_finesent"))
        .args(["run", p(&spec)])
        .env("FGS_DATA_DIR", dir.path().join("elsewhere"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn classifier_predictions_round_trip_through_eval() {
    let dir = TempDir::new().unwrap();
    write_splits(&dir.path().join("data"), &class_corpus(150, 2, Split::Unsplit));
    let spec = write_spec(
        dir.path(),
        r#"{
  "task": "classify",
  "data": {"train": "data/train.json", "dev": "data/dev.json", "test": "data/test.json"},
  "strategies": ["mean"],
  "seeds": [1],
  "config": {"epochs": 20},
  "provider": {"kind": "hashed", "dim": 16, "seed": 3, "window": 2},
  "output_dir": "out"
}"#,
    );
    ok(finesent(&["run", p(&spec)]));
    let model = fs::read_dir(dir.path().join("out/models"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let test = dir.path().join("data/test.json");
    let pred = dir.path().join("pred.json");
    ok(finesent(&["predict", p(&model), p(&test), "-o", p(&pred)]));
    let preds: Value = serde_json::from_slice(&fs::read(&pred).unwrap()).unwrap();
    let first = &preds["predictions"][0];
    let probs = &first["probabilities"];
    let total: f64 = ["positive", "neutral", "negative"].iter().map(|k| probs[k].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let text = ok(finesent(&["eval", p(&test), p(&pred)]));
    assert!(text.contains("macro F1:"), "{text}");
}

#[test]
fn dimension_mismatch_names_both_sides() {
    let dir = TempDir::new().unwrap();
    write_splits(&dir.path().join("data"), &pivot_corpus(40, 8, Split::Unsplit));
    let spec = write_spec(dir.path(), &EXTRACT_SPEC.replace(r#""seeds": [1, 2]"#, r#""seeds": [1]"#));
    ok(finesent(&["run", p(&spec)]));
    let model = fs::read_dir(dir.path().join("out/models"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();

    let mut emb = FileEmbeddings::new(8);
    emb.insert(
        "x",
        EmbeddingMatrix {
            token_vectors: Array2::zeros((2, 8)),
            sentence_vector: Array1::zeros(8),
        },
    )
    .unwrap();
    let emb_path = dir.path().join("emb.fgse");
    emb.save(&emb_path).unwrap();
    let o = finesent(&[
        "predict",
        p(&model),
        p(&dir.path().join("data/test.json")),
        "-o",
        p(&dir.path().join("x.conll")),
        "--embeddings",
        p(&emb_path),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("d=16") && err.contains("d=8"), "{err}");
    assert!(err.contains("emb.fgse") && err.contains(".bin"), "{err}");
}

#[test]
fn empty_corpus_predicts_nothing() {
    let dir = TempDir::new().unwrap();
    write_splits(&dir.path().join("data"), &pivot_corpus(40, 8, Split::Unsplit));
    let spec = write_spec(dir.path(), &EXTRACT_SPEC.replace(r#""seeds": [1, 2]"#, r#""seeds": [1]"#));
    ok(finesent(&["run", p(&spec)]));
    let model = fs::read_dir(dir.path().join("out/models"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, Corpus::new("empty", Split::Test, vec![]).to_json()).unwrap();
    let out = dir.path().join("empty.conll");
    ok(finesent(&["predict", p(&model), p(&empty), "-o", p(&out)]));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}
