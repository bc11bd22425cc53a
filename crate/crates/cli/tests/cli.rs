use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use kbqa::data::{read_jsonl, write_jsonl, Category, DatasetRecord};
use tempfile::TempDir;

fn kbqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbqa"))
        .args(args)
        .env_remove("STAG_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kbqa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type().unwrap().is_dir() {
            for (n, b) in read_dir_sorted(&e.path()) {
                v.push((format!("{name}/{n}"), b));
            }
        } else {
            v.push((name, fs::read(e.path()).unwrap()));
        }
    }
    v.sort();
    v
}

/// A movie-A dataset and a small model trained on its 1-hop questions,
/// shared by the eval and ask tests.
struct Trained {
    dir: TempDir,
}

impl Trained {
    fn kg(&self) -> String {
        p(&self.dir.path().join("data/kg")).to_string()
    }
    fn ckpt(&self) -> String {
        p(&self.dir.path().join("m.ckpt")).to_string()
    }
    fn one_hop(&self) -> String {
        p(&self.dir.path().join("one_hop.jsonl")).to_string()
    }
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["gen-data", "--profile", "movie-A", "--seed", "7", "--out", p(&data)]);
        let all = read_jsonl(&data.join("all.jsonl")).unwrap();
        let one_hop: Vec<DatasetRecord> = all.into_iter().filter(|r| r.category() == Category::OneHop).collect();
        write_jsonl(&dir.path().join("one_hop.jsonl"), &one_hop).unwrap();
        let cfg = dir.path().join("model.cfg");
        fs::write(
            &cfg,
            "# small model\nd_model=32\nff_dim=64\nn_layers_enc=1\nn_layers_dec=1\nn_heads=2\ndropout=0\nlr=0.003\npatience=3\n",
        )
        .unwrap();
        let t = Trained { dir };
        ok(&[
            "train",
            "--config",
            p(&cfg),
            "--kg",
            &t.kg(),
            "--dataset",
            &t.one_hop(),
            "--epochs",
            "12",
            "--out",
            &t.ckpt(),
        ]);
        t
    })
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-data", "--profile", "movie-B", "--seed", "3", "--out", p(&a)]);
    ok(&["gen-data", "--profile", "movie-B", "--seed", "3", "--out", p(&b)]);
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for f in ["all.jsonl", "train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json", "kg/triples.tsv"] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
    assert_eq!(fa, fb);
}

#[test]
fn stag_seed_overrides_the_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (env, flag, other) = (dir.path().join("env"), dir.path().join("flag"), dir.path().join("other"));
    let out = Command::new(env!("CARGO_BIN_EXE_kbqa"))
        .args(["build-kg", "--seed", "1", "--out", p(&env)])
        .env("STAG_SEED", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(&["build-kg", "--seed", "2", "--out", p(&flag)]);
    ok(&["build-kg", "--seed", "1", "--out", p(&other)]);
    let triples = |d: &Path| fs::read(d.join("triples.tsv")).unwrap();
    assert_eq!(triples(&env), triples(&flag));
    assert_ne!(triples(&env), triples(&other));
}

#[test]
fn exit_codes_and_error_prefix() {
    let help = kbqa(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("gen-data"));

    assert_eq!(kbqa(&["no-such-command"]).status.code(), Some(1));
    let missing_out = kbqa(&["build-kg"]);
    assert_eq!(missing_out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_out.stderr).starts_with("error[usage]"));
    assert_eq!(kbqa(&["build-kg", "--profile", "movie-C", "--out", "x"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = kbqa(&["eval", "--kg", p(dir.path()), "--dataset", "nope.jsonl", "--ckpt", "nope.ckpt"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[data]"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key=1\n").unwrap();
    assert_eq!(kbqa(&["build-kg", "--config", p(&cfg), "--out", p(dir.path())]).status.code(), Some(1));
}

#[test]
fn eval_line_matches_json_report() {
    let t = trained();
    let json = t.dir.path().join("eval.json");
    let stdout = ok(&[
        "eval",
        "--kg",
        &t.kg(),
        "--dataset",
        p(&t.dir.path().join("data/test.jsonl")),
        "--ckpt",
        &t.ckpt(),
        "--out",
        p(&json),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    let f = |k: &str| report[k].as_f64().unwrap();
    let expected = format!(
        "P={:.4} R={:.4} F1={:.4} Hits@1={:.4} n={}",
        f("precision"),
        f("recall"),
        f("f1"),
        f("hits_at_1"),
        report["count"]
    );
    assert_eq!(stdout.lines().next().unwrap(), expected);
    assert_eq!(report["per_question"].as_array().unwrap().len() as u64, report["count"].as_u64().unwrap());
    assert!(f("hits_at_1") > 0.0);
}

#[test]
fn ask_prints_labels_and_sparql_of_the_gold_answer() {
    let t = trained();
    let records = read_jsonl(Path::new(&t.one_hop())).unwrap();
    let director = records
        .iter()
        .find(|r| r.split.as_deref() == Some("test") && r.path_signature == "directed_by" && r.question.starts_with("who directed"))
        .or_else(|| records.iter().find(|r| r.split.as_deref() == Some("test")))
        .unwrap();
    let stdout = ok(&["ask", "--kg", &t.kg(), "--ckpt", &t.ckpt(), &director.question]);
    let answer = stdout.lines().find_map(|l| l.strip_prefix("answer: ")).expect("answer line");
    let sparql = stdout.lines().find_map(|l| l.strip_prefix("sparql: ")).expect("sparql line");
    assert!(sparql.starts_with("SELECT"), "{sparql}");

    // gold answers, as labels
    let labels: std::collections::HashMap<String, String> = fs::read_to_string(t.dir.path().join("data/kg/labels.tsv"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(i, l)| (i.to_string(), l.to_string()))
        .collect();
    let mut gold: Vec<&str> = director.answers.iter().map(|a| labels[a].as_str()).collect();
    gold.sort();
    assert_eq!(answer, gold.join(" | "), "question: {}", director.question);

    let trace = ok(&["ask", "--trace", "--kg", &t.kg(), "--ckpt", &t.ckpt(), &director.question]);
    let v: serde_json::Value = serde_json::from_str(&trace).unwrap();
    assert!(v.is_object());
}
