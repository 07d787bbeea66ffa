use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kfunc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfunc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = kfunc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32) -> String {
    let out = kfunc(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn synth(dir: &Path, name: &str, reference: &str, edits: &[&str]) {
    let out = format!("{name}.kwpo");
    let mut args = vec!["synth", "--reference", reference, "--out", &out];
    for e in edits {
        args.extend(["--edit", e]);
    }
    ok(dir, &args);
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    let flags: &[(&str, &[&str])] = &[
        ("decode", &["--posteriors", "--reference", "--id", "--manifest", "--jobs", "--k", "--dump-fst", "--format", "--out"]),
        ("greedy", &["--posteriors", "--id", "--manifest", "--jobs", "--out"]),
        ("eval", &["--ref", "--hyp", "--out"]),
        ("score", &["--reference", "--transcribed", "--duration", "--word-count", "--reference-score", "--out"]),
        ("report", &["--transcription", "--score", "--id", "--format", "--out"]),
        (
            "synth",
            &["--reference", "--edit", "--confidence", "--seed", "--jitter", "--frames-per-phoneme", "--blank-frames", "--frame-ms", "--out"],
        ),
        (
            "assess",
            &["--posteriors", "--reference", "--id", "--manifest", "--jobs", "--k", "--word-count", "--reference-score", "--format", "--out"],
        ),
    ];
    for (cmd, expected) in flags {
        let help = ok(dir.path(), &[cmd, "--help"]);
        for flag in expected.iter().chain(&["--config", "--decoder.k", "--phonology.inventory", "--scoring.backend"]) {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}:\n{help}");
        }
    }
    assert!(ok(dir.path(), &["--help"]).contains("assess"));
}

#[test]
fn synth_then_decode_recovers_edits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let realized = ok(d, &["synth", "--reference", "B ER D", "--edit", "sub:2=AH", "--edit", "ins:1=P", "--seed", "42", "--out", "u1.kwpo"]);
    assert_eq!(realized.trim(), "P B AH D");
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(d.join("u1.truth")).unwrap()).unwrap();
    assert_eq!(truth["annotations"], serde_json::json!(["I:P", "M:B", "S:AH|ER", "M:D"]));
    assert_eq!(truth["seed"], 42);

    let t: Value = serde_json::from_str(&ok(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--k", "auto", "--dump-fst", "r.fst"])).unwrap();
    assert_eq!(t["k_used"], 3);
    assert!(t["metadata"]["k_rule"].is_string());
    assert_eq!(t["lattice_id"], "u1");
    let tags: Vec<String> = t["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|tok| {
            let kind = tok["edit"].as_str().unwrap();
            format!("{kind}:{}", tok["phoneme"].as_str().unwrap())
        })
        .collect();
    assert_eq!(tags.len(), 4, "{tags:?}");
    assert!(std::fs::read_to_string(d.join("r.fst")).unwrap().lines().count() > 3);

    let one: Value = serde_json::from_str(&ok(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--decoder.k=1"])).unwrap();
    assert_eq!(one["k_used"], 1);
    assert_eq!(ok(d, &["greedy", "--posteriors", "u1.kwpo"]).trim(), "P B AH D");
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "u1", "B ER D", &[]);
    let err = fails(d, &["decode", "--posteriors", "u1.kwpo"], 1);
    assert!(err.contains("--reference") && err.contains("Usage"), "{err}");
    fails(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--decoder.bogus", "1"], 1);
    fails(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--k", "2"], 1);
    fails(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--decoder.c_del=-1"], 1);
    fails(d, &["frobnicate"], 1);

    std::fs::write(d.join("bad.kwpo"), b"NOPE\x01\x00garbage").unwrap();
    let err = fails(d, &["decode", "--posteriors", "bad.kwpo", "--reference", "B ER D"], 2);
    assert!(err.contains("magic"), "{err}");
    fails(d, &["decode", "--posteriors", "missing.kwpo", "--reference", "B"], 2);
    let err = fails(d, &["decode", "--posteriors", "u1.kwpo", "--reference", "B XX"], 2);
    assert!(err.contains("XX"), "{err}");
    fails(d, &["synth", "--reference", "B ER", "--edit", "del:7", "--out", "x.kwpo"], 1);
}

#[test]
fn eval_pools_and_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ref.tsv"), "a\tB ER D\nb\tK AE T\n").unwrap();
    std::fs::write(d.join("hyp.tsv"), "b\tK AE T\na\tB EH D\n").unwrap();
    let r: Value = serde_json::from_str(&ok(d, &["eval", "--ref", "ref.tsv", "--hyp", "hyp.tsv"])).unwrap();
    assert_eq!(r["pooled"]["S"], 1);
    assert!((r["pooled"]["per"].as_f64().unwrap() - 100.0 / 6.0).abs() < 1e-9);
    assert_eq!(r["utterances"][0]["id"], "a");

    std::fs::write(d.join("short.tsv"), "a\tB EH D\nc\tT\n").unwrap();
    let err = fails(d, &["eval", "--ref", "ref.tsv", "--hyp", "short.tsv"], 2);
    assert!(err.contains("\"b\"") && err.contains("\"c\""), "{err}");
    std::fs::write(d.join("empty.tsv"), "").unwrap();
    let err = fails(d, &["eval", "--ref", "empty.tsv", "--hyp", "empty.tsv"], 2);
    assert!(err.contains("empty"), "{err}");
}

#[test]
fn assess_builds_all_sections_and_score_error_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let reference = "B ER D IY T AH K S M N";
    synth(d, "u2", reference, &["del:3"]);
    let args = ["assess", "--posteriors", "u2.kwpo", "--reference", reference, "--word-count", "50", "--reference-score", "50"];
    let report: Value = serde_json::from_str(&ok(d, &args)).unwrap();
    for field in ["transcription", "errors", "hints", "score", "advice"] {
        assert!(!report[field].is_null(), "missing {field}");
    }
    assert_eq!(report["per"]["per"], 10.0);
    assert_eq!(report["score"]["predicted"], 45.0);
    assert!((report["score"]["error_rate"].as_f64().unwrap() - 0.10).abs() < 1e-12);
    assert_eq!(report["errors"][0]["type"], "deletion");
    assert_eq!(report["hints"][0]["phoneme"], "D");

    let text = ok(d, &[&args[..], &["--format", "text"]].concat());
    assert!(text.contains("5. Advice"), "{text}");
    let err = fails(d, &[&args[..], &["--scoring.backend", "http"]].concat(), 1);
    assert!(err.contains("endpoint"), "{err}");
}

#[test]
fn report_from_parts_equals_assess() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "u3", "B ER D", &["sub:2=AH", "rep:1=1"]);
    let assess = ok(d, &["assess", "--posteriors", "u3.kwpo", "--reference", "B ER D", "--word-count", "9", "--reference-score", "8"]);
    ok(d, &["decode", "--posteriors", "u3.kwpo", "--reference", "B ER D", "--out", "t.json"]);
    let t: Value = serde_json::from_str(&std::fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    let verbatim: Vec<&str> = t["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|tok| tok["edit"] != "deletion")
        .map(|tok| tok["phoneme"].as_str().unwrap())
        .collect();
    ok(d, &["score", "--reference", "B ER D", "--transcribed", &verbatim.join(" "), "--duration", "0.38", "--word-count", "9", "--reference-score", "8", "--out", "s.json"]);
    let report = ok(d, &["report", "--transcription", "t.json", "--score", "s.json"]);
    assert_eq!(report, assess);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "u1", "B ER D", &["sub:2=AH"]);
    std::fs::write(d.join("run.conf"), "decoder.k = 1\nscoring.runs = 2\n").unwrap();
    let t: Value = serde_json::from_str(&ok(d, &["decode", "--config", "run.conf", "--posteriors", "u1.kwpo", "--reference", "B ER D"])).unwrap();
    assert_eq!(t["k_used"], 1);
    let t: Value = serde_json::from_str(&ok(d, &["--config", "run.conf", "decode", "--posteriors", "u1.kwpo", "--reference", "B ER D", "--decoder.k", "3"])).unwrap();
    assert_eq!(t["k_used"], 3);
    std::fs::write(d.join("bad.conf"), "scoring.colour = blue\n").unwrap();
    let err = fails(d, &["decode", "--config", "bad.conf", "--posteriors", "u1.kwpo", "--reference", "B ER D"], 1);
    assert!(err.contains("scoring.colour"), "{err}");
}

#[test]
fn manifest_runs_are_ordered_and_job_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut manifest = String::new();
    for (i, (reference, edit)) in [("B ER D", "del:2"), ("K AE T", "ins:1=P"), ("S IY", "rep:1=1"), ("M AA P", "sub:3=B"), ("D AO G", "del:1")]
        .iter()
        .enumerate()
        .rev()
    {
        let name = format!("utt{i}");
        synth(d, &name, reference, &[edit]);
        manifest.push_str(&format!("{name}\t{name}.kwpo\t{reference}\t10\t9\n"));
    }
    std::fs::write(d.join("m.tsv"), manifest).unwrap();
    let serial = ok(d, &["assess", "--manifest", "m.tsv", "--jobs", "1"]);
    let parallel = ok(d, &["assess", "--manifest", "m.tsv", "--jobs", "4"]);
    assert_eq!(serial, parallel);
    let reports: Vec<Value> = serde_json::from_str(&serial).unwrap();
    let ids: Vec<&str> = reports.iter().map(|r| r["utterance_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["utt0", "utt1", "utt2", "utt3", "utt4"]);

    let tsv = ok(d, &["decode", "--manifest", "m.tsv", "--jobs", "3", "--format", "tsv", "--out", "hyp.tsv"]);
    assert!(tsv.is_empty());
    std::fs::write(d.join("ref.tsv"), "utt0\tB ER D\nutt1\tK AE T\nutt2\tS IY\nutt3\tM AA P\nutt4\tD AO G\n").unwrap();
    let r: Value = serde_json::from_str(&ok(d, &["eval", "--ref", "ref.tsv", "--hyp", "hyp.tsv"])).unwrap();
    // one deletion, one insertion, one repetition (an insertion against the text), one deletion
    assert_eq!(r["pooled"]["D"], 2);
    assert_eq!(r["pooled"]["I"], 2);
    let greedy = ok(d, &["greedy", "--manifest", "m.tsv", "--jobs", "2"]);
    assert_eq!(greedy.lines().next().unwrap(), "utt0\tB D");
}
