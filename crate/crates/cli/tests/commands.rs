//! End-to-end runs of the `werange` binary on the fixture corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn werange(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_werange"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn werange")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn evaluate(out: &Path, extra: &[&str]) -> Output {
    let manifest = fixture("manifest.jsonl");
    let hyps = fixture("hypotheses.jsonl");
    let config = fixture("config.toml");
    let mut args = vec![
        "evaluate",
        manifest.to_str().unwrap(),
        hyps.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    werange(&args)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn evaluate_writes_six_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = evaluate(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(dir.path()),
        [
            "delta_eid.csv",
            "eid.csv",
            "eid_decomposition.csv",
            "gap.csv",
            "range.csv",
            "wer_matrix.csv"
        ]
    );
    let eid = fs::read_to_string(dir.path().join("eid.csv")).unwrap();
    assert!(eid.starts_with("system_id,group,enforced_policy,"));
    assert!(eid.lines().last().unwrap().starts_with("# werange "));
}

#[test]
fn evaluate_is_byte_identical_across_runs_and_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(evaluate(
        a.path(),
        &[
            "--workers",
            "1",
            "--format",
            "csv",
            "--format",
            "json",
            "--format",
            "md"
        ]
    )
    .status
    .success());
    assert!(evaluate(
        b.path(),
        &[
            "--workers",
            "8",
            "--format",
            "csv",
            "--format",
            "json",
            "--format",
            "md"
        ]
    )
    .status
    .success());
    let names = listing(a.path());
    assert_eq!(names, listing(b.path()));
    assert_eq!(names.len(), 8);
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn per_utterance_mode_skips_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let text = fs::read_to_string(fixture("config.toml"))
        .unwrap()
        .replace("\"aggregate\"", "\"per_utterance\"");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let manifest = fixture("manifest.jsonl");
    let hyps = fixture("hypotheses.jsonl");
    let o = werange(&[
        "evaluate",
        manifest.to_str().unwrap(),
        hyps.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(listing(&out).len(), 5);
    assert!(!out.join("eid_decomposition.csv").exists());
    assert!(stderr(&o).contains("eid_decomposition.csv skipped"));
}

#[test]
fn missing_reference_names_utterance_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    let text = fs::read_to_string(fixture("manifest.jsonl")).unwrap();
    let broken = text.replacen(",\"legal\":\"I think the the boy kicked the ball\"", "", 1);
    assert_ne!(text, broken);
    fs::write(&manifest, broken).unwrap();
    let hyps = fixture("hypotheses.jsonl");
    let out = dir.path().join("out");
    let o = werange(&[
        "evaluate",
        manifest.to_str().unwrap(),
        hyps.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("utt-2") && err.contains("legal"), "{err}");
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let hyps = fixture("hypotheses.jsonl");
    let o = werange(&[
        "evaluate",
        "/nonexistent/manifest.jsonl",
        hyps.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/manifest.jsonl"));
}

#[test]
fn unknown_format_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        evaluate(dir.path(), &["--format", "pdf"]).status.code(),
        Some(1)
    );
}

#[test]
fn derive_adds_policy_and_keeps_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture("manifest.jsonl");
    let config = fixture("config.toml");
    let out = dir.path().join("derived.jsonl");
    let args = |overwrite: bool| {
        let mut v = vec![
            "derive".to_string(),
            manifest.to_str().unwrap().into(),
            "--config".into(),
            config.to_str().unwrap().into(),
            "--policy".into(),
            "legal".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ];
        if overwrite {
            v.push("--overwrite".into());
        }
        v
    };
    let run = |v: Vec<String>| werange(&v.iter().map(String::as_str).collect::<Vec<_>>());

    let o = run(args(false));
    assert_eq!(
        o.status.code(),
        Some(1),
        "existing legal references must not be replaced silently"
    );
    let o = run(args(true));
    assert!(o.status.success(), "{}", stderr(&o));

    let original: Vec<serde_json::Value> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let derived: Vec<serde_json::Value> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(original.len(), derived.len());
    for (a, b) in original.iter().zip(&derived) {
        assert_eq!(a["references"]["verbatim"], b["references"]["verbatim"]);
        assert!(b["references"]["legal"].is_string());
    }
    assert_eq!(
        derived[1]["references"]["legal"],
        "i think the the boy kicked the ball"
    );
    assert_eq!(derived[2]["references"]["legal"], "dog dog going home");
}

#[test]
fn chat_import_builds_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chat.jsonl");
    let config = fixture("config.toml");
    let chat = fixture("chat");
    let o = werange(&[
        "chat-import",
        chat.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs: Vec<serde_json::Value> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["utterance_id"], "adler01a");
    assert_eq!(recs[0]["group"], "nonfluent_aphasia");
    assert_eq!(recs[1]["group"], "control");
    for r in &recs {
        assert!(r["references"]["verbatim"].is_string());
    }
}

#[test]
fn chat_import_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chat.jsonl");
    let bad = fixture("chat_bad");
    let o = werange(&[
        "chat-import",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("broken.cha") && err.contains("line 5"),
        "{err}"
    );
}

#[test]
fn chat_import_warns_on_empty_tier_and_rejects_unmapped_groups() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in");
    fs::create_dir(&src).unwrap();
    fs::write(
        src.join("quiet.cha"),
        "@UTF8\n@Begin\n@Participants:\tPAR Participant, INV Investigator\n@ID:\teng|AphasiaBank|PAR|60;|male|Control||Participant|||\n*INV:\ttell me a story .\n@End\n",
    )
    .unwrap();
    let out = dir.path().join("o.jsonl");
    let o = werange(&[
        "chat-import",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning") && stderr(&o).contains("quiet.cha"));

    fs::write(
        src.join("odd.cha"),
        "@UTF8\n@Begin\n@Participants:\tPAR Participant\n@ID:\teng|AphasiaBank|PAR|60;|male|Martian||Participant|||\n*PAR:\thello .\n@End\n",
    )
    .unwrap();
    let o = werange(&[
        "chat-import",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("odd.cha"), "{}", stderr(&o));
}
