//! End-to-end checks of the binary: pipelines, exit codes, and the golden
//! score report over the checked-in fixtures.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfie"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Order-insensitive view of a relation JSONL stream: one canonical string
/// per SPO entry.
fn normalized_spo_set(jsonl: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line).expect("json line");
        for spo in value["spo_list"].as_array().expect("spo_list") {
            out.insert(serde_json::to_string(spo).unwrap());
        }
    }
    out
}

#[test]
fn disintegrate_then_recompose_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let triples = dir.path().join("triples.jsonl");
    let back = dir.path().join("back.jsonl");

    run_ok(bin()
        .arg("disintegrate")
        .arg("--schema")
        .arg(fixture("schema.jsonl"))
        .arg("--input")
        .arg(fixture("re_gold.jsonl"))
        .arg("--output")
        .arg(&triples));
    run_ok(bin()
        .arg("recompose")
        .arg("--schema")
        .arg(fixture("schema.jsonl"))
        .arg("--input")
        .arg(&triples)
        .arg("--output")
        .arg(&back));

    let original = std::fs::read_to_string(fixture("re_gold.jsonl")).unwrap();
    let recomposed = std::fs::read_to_string(&back).unwrap();
    assert_eq!(normalized_spo_set(&original), normalized_spo_set(&recomposed));
}

#[test]
fn vote_unanimity_returns_the_input_set() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    std::fs::write(&a, "{\"s\": \"x\"}\n{\"s\": \"y\"}\n").unwrap();
    let out = run_ok(bin()
        .arg("vote")
        .arg("--inputs")
        .arg(&a)
        .arg(&a)
        .arg(&a)
        .arg("--threshold")
        .arg("2"));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec!["{\"s\":\"x\"}", "{\"s\":\"y\"}"]);
}

#[test]
fn score_all_matches_the_golden_report() {
    let out = run_ok(bin()
        .arg("score-all")
        .arg("--re-pred")
        .arg(fixture("re_pred.jsonl"))
        .arg("--re-gold")
        .arg(fixture("re_gold.jsonl"))
        .arg("--schema")
        .arg(fixture("schema.jsonl"))
        .arg("--see-pred")
        .arg(fixture("see_pred.jsonl"))
        .arg("--see-gold")
        .arg(fixture("see_gold.jsonl"))
        .arg("--dee-pred")
        .arg(fixture("dee_pred.jsonl"))
        .arg("--dee-gold")
        .arg(fixture("dee_gold.jsonl")));
    let got: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let want: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("golden_report.json")).unwrap())
            .unwrap();
    assert_json_close(&got, &want, "report");
}

fn assert_json_close(got: &serde_json::Value, want: &serde_json::Value, path: &str) {
    use serde_json::Value;
    match (got, want) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= 1e-12, "{path}: {a} vs {b}");
        }
        (Value::Object(a), Value::Object(b)) => {
            let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for key in keys {
                let sub = format!("{path}.{key}");
                assert_json_close(
                    a.get(key).unwrap_or_else(|| panic!("{sub} missing in output")),
                    b.get(key).unwrap_or_else(|| panic!("{sub} missing in golden")),
                    &sub,
                );
            }
        }
        (a, b) => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn eval_commands_emit_single_subtask_reports() {
    let out = run_ok(bin()
        .arg("eval-see")
        .arg("--pred")
        .arg(fixture("see_pred.jsonl"))
        .arg("--gold")
        .arg(fixture("see_gold.jsonl")));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["see"]["precision"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!(report.get("re").is_none());
    assert!(report.get("macro_f1").is_none());
}

#[test]
fn exit_codes_distinguish_usage_data_and_success() {
    // 0: success
    let ok = bin()
        .arg("eval-dee")
        .arg("--pred")
        .arg(fixture("dee_pred.jsonl"))
        .arg("--gold")
        .arg(fixture("dee_gold.jsonl"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));

    // 1: usage problems (unknown flag; missing file)
    let bad_flag = bin().arg("eval-dee").arg("--nope").output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(1));
    let missing = bin()
        .arg("eval-dee")
        .arg("--pred")
        .arg("/nonexistent.jsonl")
        .arg("--gold")
        .arg(fixture("dee_gold.jsonl"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));

    // 2: malformed data
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "not json\n").unwrap();
    let parse = bin()
        .arg("eval-dee")
        .arg("--pred")
        .arg(&bad)
        .arg("--gold")
        .arg(fixture("dee_gold.jsonl"))
        .output()
        .unwrap();
    assert_eq!(parse.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&parse.stderr);
    assert!(stderr.contains("line 1"), "stderr should carry the line number: {stderr}");

    // help exits 0
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn train_predict_eval_see_loop_reaches_perfect_f1() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    std::fs::write(
        &train,
        concat!(
            "{\"text\": \"c1 trigA c2 alpha c3 beta\", \"event_list\": [{\"event_type\": \"A\", \"trigger\": \"trigA\", \"arguments\": [{\"role\": \"r1\", \"argument\": \"alpha\"}, {\"role\": \"r2\", \"argument\": \"beta\"}]}]}\n",
            "{\"text\": \"c2 trigB c1 gamma c3 delta\", \"event_list\": [{\"event_type\": \"B\", \"trigger\": \"trigB\", \"arguments\": [{\"role\": \"r1\", \"argument\": \"gamma\"}, {\"role\": \"r2\", \"argument\": \"delta\"}]}]}\n",
            "{\"text\": \"c3 trigA c1 east c2 west\", \"event_list\": [{\"event_type\": \"A\", \"trigger\": \"trigA\", \"arguments\": [{\"role\": \"r1\", \"argument\": \"east\"}, {\"role\": \"r2\", \"argument\": \"west\"}]}]}\n",
        ),
    )
    .unwrap();
    let model = dir.path().join("model.ckpt");
    let pred = dir.path().join("pred.jsonl");

    run_ok(bin()
        .arg("train-see")
        .arg("--train")
        .arg(&train)
        .arg("--model-out")
        .arg(&model)
        .arg("--epochs")
        .arg("150")
        .arg("--seed")
        .arg("5")
        .arg("--metrics-out")
        .arg(dir.path().join("hist.jsonl")));
    run_ok(bin()
        .arg("predict-see")
        .arg("--model")
        .arg(&model)
        .arg("--input")
        .arg(&train)
        .arg("--output")
        .arg(&pred));
    let out = run_ok(bin()
        .arg("eval-see")
        .arg("--pred")
        .arg(&pred)
        .arg("--gold")
        .arg(&train));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["see"]["f1"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    // a sentence-level checkpoint is not a document-level one
    let wrong = bin()
        .arg("predict-dee")
        .arg("--model")
        .arg(&model)
        .arg("--input")
        .arg(&train)
        .output()
        .unwrap();
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn augment_preserves_entity_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(
        &input,
        "{\"text\": \"w1 w2 ent1 w3 w4 ent2 w5\", \"event_list\": [{\"event_type\": \"t\", \"arguments\": [{\"role\": \"r\", \"argument\": \"ent1\"}, {\"role\": \"q\", \"argument\": \"ent2\"}]}]}\n",
    )
    .unwrap();
    let dict = dir.path().join("syn.tsv");
    std::fs::write(&dict, "w1\tW1\nw2\tW2\nw3\tW3\n").unwrap();
    let out = run_ok(bin()
        .arg("augment")
        .arg("--synonyms")
        .arg(&dict)
        .arg("--replace-prob")
        .arg("1.0")
        .arg("--delete-prob")
        .arg("0.7")
        .arg("--seed")
        .arg("11")
        .arg("--input")
        .arg(&input));
    let line = String::from_utf8(out.stdout).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let text = record["text"].as_str().unwrap();
    assert!(text.contains("ent1"), "entity must survive: {text}");
    assert!(text.contains("ent2"), "entity must survive: {text}");
    assert!(!text.contains("w1"), "replaceable token must be substituted: {text}");
}

#[test]
fn split_doc_emits_clamped_segments() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("docs.jsonl");
    std::fs::write(&input, "{\"id\": \"d\", \"text\": \"abcdefghijk\"}\n").unwrap();
    let out = run_ok(bin()
        .arg("split-doc")
        .arg("--window")
        .arg("4")
        .arg("--stride")
        .arg("2")
        .arg("--input")
        .arg(&input));
    let text = String::from_utf8(out.stdout).unwrap();
    let starts: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["start_offset"].as_u64().unwrap())
        .collect();
    assert_eq!(starts, vec![0, 2, 4, 6, 7]);
}
