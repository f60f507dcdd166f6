//! End-to-end runs of the `loopforge` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXAMPLE_TRANSCRIPT: &str = "\
unit1.c
function=fun2
loop1
count=29
call=1
well_nested=0
-fun3
function=fun1
loop2
count=9
call=1
well_nested=0
-fun2

unit2.c
function=fun3
loop3
count=99
call=0
well_nested=1
";

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn listings() -> Vec<PathBuf> {
    let d = corpus().join("listings");
    vec![d.join("unit1.c"), d.join("unit2.c")]
}

fn los() -> Vec<PathBuf> {
    let d = corpus().join("programs/los");
    vec![d.join("los.c"), d.join("main.c")]
}

fn loopforge(args: &[&str], files: &[PathBuf]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopforge"))
        .args(args)
        .args(files)
        .output()
        .expect("run loopforge")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// collect + synth into `dir`, returning the transcript and build paths.
fn build(dir: &Path, files: &[PathBuf], extra: &[&str]) -> (PathBuf, PathBuf) {
    let t = dir.join("transcript.txt");
    let out = dir.join("build");
    let o = loopforge(&["collect", "-o", s(&t)], files);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut args = vec!["synth", "--transcript", s(&t), "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = loopforge(&args, files);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (t, out)
}

#[test]
fn collect_reproduces_the_example_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    let o = loopforge(&["collect", "-o", s(&t)], &listings());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&t).unwrap();
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(body, EXAMPLE_TRANSCRIPT);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    // No sources.
    assert_eq!(code(&loopforge(&["collect", "-o", s(&t)], &[])), 2);
    // A missing source file.
    let o = loopforge(&["collect", "-o", s(&t)], &[dir.path().join("nope.c")]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    // An unknown configuration key.
    let (_, out) = build(dir.path(), &listings(), &[]);
    let o = loopforge(&["verify", "--out", s(&out), "--set", "colour=red"], &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    // A directory without a build.
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&loopforge(&["verify", "--out", s(&empty)], &[])), 2);
    assert_eq!(code(&loopforge(&["report", "--out", s(&empty)], &[])), 2);
}

#[test]
fn syntax_error_exits_with_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.c");
    std::fs::write(&bad, "int f(int a) { return a + ; }\n").unwrap();
    let t = dir.path().join("t.txt");
    let o = loopforge(&["collect", "-o", s(&t)], &[bad]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.c:1:"), "{}", stderr(&o));
    assert!(!t.exists());
}

#[test]
fn synth_verify_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = build(dir.path(), &listings(), &[]);
    for f in [
        "loop3_core.v",
        "loop3_wrapper.v",
        "loop3_regmap.txt",
        "loop3.fsm",
        "loop3.fsm.json",
        "loop3_wrapper.c",
        "accel_hw.c",
        "patched/unit2.c",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let patched = std::fs::read_to_string(out.join("patched/unit2.c")).unwrap();
    assert!(patched.contains("__accel_call_3"), "{patched}");

    let o = loopforge(&["verify", "--out", s(&out), "--trials", "200", "--program-trials", "20"], &[]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("status=pass"));
    assert!(stdout(&o).contains("loop3.transfers_per_call=4"), "{}", stdout(&o));

    let o = loopforge(&["report", "--out", s(&out)], &[]);
    assert_eq!(code(&o), 0);
    let r = stdout(&o);
    assert!(r.contains("== selection ==") && r.contains("status=pass"), "{r}");
}

#[test]
fn corrupted_fsm_is_caught_with_a_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = build(dir.path(), &listings(), &[]);
    let path = out.join("loop3.fsm.json");
    let json = std::fs::read_to_string(&path).unwrap();
    assert!(json.contains("\"Bin\": \"Add\""));
    std::fs::write(&path, json.replacen("\"Bin\": \"Add\"", "\"Bin\": \"Sub\"", 1)).unwrap();
    let o = loopforge(&["verify", "--out", s(&out), "--trials", "200", "--program-trials", "5"], &[]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stderr(&o).contains("counterexample"), "{}", stderr(&o));
    assert!(stdout(&o).contains("status=fail"));
}

#[test]
fn stale_transcript_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    let files: Vec<PathBuf> = listings()
        .iter()
        .map(|f| {
            let to = src.join(f.file_name().unwrap());
            std::fs::copy(f, &to).unwrap();
            to
        })
        .collect();
    let t = dir.path().join("t.txt");
    assert_eq!(code(&loopforge(&["collect", "-o", s(&t)], &files)), 0);
    let edited = std::fs::read_to_string(&files[1]).unwrap().replace("200", "300");
    std::fs::write(&files[1], edited).unwrap();
    let out = dir.path().join("build");
    let o = loopforge(&["synth", "--transcript", s(&t), "--out", s(&out)], &files);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("stale transcript"), "{}", stderr(&o));
}

#[test]
fn builds_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, out_a) = build(a.path(), &los(), &["--top-n", "2"]);
    let (_, out_b) = build(b.path(), &los(), &["--top-n", "2"]);
    let manifest = std::fs::read_to_string(out_a.join("manifest.txt")).unwrap();
    assert_eq!(manifest, std::fs::read_to_string(out_b.join("manifest.txt")).unwrap());
    for line in manifest.lines() {
        if let Some(f) = line.strip_prefix("file=") {
            assert_eq!(
                std::fs::read(out_a.join(f)).unwrap(),
                std::fs::read(out_b.join(f)).unwrap(),
                "{f} differs"
            );
        }
    }
}

#[test]
fn speedup_threshold_rejects_loops() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = build(dir.path(), &los(), &["--min-speedup", "1000"]);
    let est = std::fs::read_to_string(out.join("estimates.txt")).unwrap();
    assert!(est.contains("status=rejected"), "{est}");
    assert!(!out.join("accel_table.txt").is_file() || {
        let table = std::fs::read_to_string(out.join("accel_table.txt")).unwrap();
        table.lines().all(|l| l.trim().is_empty() || l.starts_with('#'))
    });
    // With nothing accelerated the program still runs unchanged.
    let o = loopforge(&["verify", "--out", s(&out), "--program-trials", "5"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn config_file_and_set_entries_apply_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "# two loops\ntop_n=2\nmin_speedup=1000\n").unwrap();
    let t = dir.path().join("t.txt");
    assert_eq!(code(&loopforge(&["collect", "-o", s(&t)], &los())), 0);
    let out = dir.path().join("build");
    let o = loopforge(
        &["synth", "--transcript", s(&t), "--out", s(&out), "--config", s(&cfg), "--set", "min_speedup=0"],
        &los(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.contains("top_n=2"), "{written}");
    assert!(written.lines().any(|l| l == "min_speedup=0"), "{written}");
}
