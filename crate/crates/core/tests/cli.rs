use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layoutfuse"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env_remove("LAYOUTFUSE_API_KEY").output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn synth(dir: &Path) {
    ok(
        &[
            "synth",
            "--seed",
            "4",
            "--depth",
            "3",
            "--fill",
            "aligned-grid",
            "--tree-out",
            "src.json",
            "--elements-out",
            "els.json",
            "--png-out",
            "page.png",
        ],
        dir,
    );
}

#[test]
fn run_matches_the_chained_stages() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    synth(p);
    ok(&["run", "--elements", "els.json", "--mock", "-o", "run.html"], p);
    ok(&["parse", "--elements", "els.json", "-o", "tree.json"], p);
    ok(&["generate", "--tree", "tree.json", "--mock", "-o", "code.json"], p);
    ok(&["fuse", "--tree", "code.json", "-o", "chain.html"], p);
    assert_eq!(std::fs::read(p.join("run.html")).unwrap(), std::fs::read(p.join("chain.html")).unwrap());

    ok(&["run", "--image", "page.png", "--mock", "-o", "img_run.html", "--artifacts", "art"], p);
    ok(&["detect", "--image", "page.png", "-o", "det.json"], p);
    ok(&["parse", "--elements", "det.json", "--image", "page.png", "--overlay", "overlay.png", "-o", "t2.json"], p);
    ok(&["generate", "--tree", "t2.json", "--image", "page.png", "--mock", "-o", "c2.json"], p);
    ok(&["fuse", "--tree", "c2.json", "-o", "img_chain.html"], p);
    assert_eq!(std::fs::read(p.join("img_run.html")).unwrap(), std::fs::read(p.join("img_chain.html")).unwrap());
    assert_eq!(std::fs::read(p.join("art/tree.json")).unwrap(), std::fs::read(p.join("t2.json")).unwrap());
    assert!(p.join("overlay.png").exists());
}

#[test]
fn stage_errors_exit_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("empty.json"), "[]").unwrap();
    let out = run(&["parse", "--elements", "empty.json", "--width", "100", "--height", "100"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("layout: EmptyPage"));

    synth(p);
    ok(&["parse", "--elements", "els.json", "-o", "tree.json"], p);
    let out = run(&["fuse", "--tree", "tree.json"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("codegen: MissingCode"));

    let out = run(&["generate", "--tree", "tree.json", "--endpoint", "http://127.0.0.1:9", "--model", "m"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("LAYOUTFUSE_API_KEY"));

    std::fs::write(p.join("bad.json"), "[{\"id\": 0, \"kind\": \"text\", \"bbox\": [5, 5, 1, 1]}]").unwrap();
    let out = run(&["parse", "--elements", "bad.json"], p);
    assert!(String::from_utf8_lossy(&out.stderr).contains("detection:"));
}

#[test]
fn config_file_and_flags() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    synth(p);
    std::fs::write(p.join("mock.toml"), "[client]\nkind = \"mock\"\n\n[generation]\nparallelism = 2\n").unwrap();
    ok(&["run", "--elements", "els.json", "--config", "mock.toml", "-o", "a.html"], p);
    ok(&["run", "--elements", "els.json", "--mock", "-o", "b.html"], p);
    assert_eq!(std::fs::read(p.join("a.html")).unwrap(), std::fs::read(p.join("b.html")).unwrap());

    std::fs::write(p.join("bad.toml"), "api_key = \"secret\"\n").unwrap();
    let out = run(&["run", "--elements", "els.json", "--config", "bad.toml", "--mock"], p);
    assert!(String::from_utf8_lossy(&out.stderr).contains("config:"));
    assert!(!run(&["run", "--elements", "els.json", "--mock", "--api-key", "x"], p).status.success());
}

#[test]
fn eval_commands_print_json() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    synth(p);
    ok(&["run", "--elements", "els.json", "--mock", "-o", "a.html"], p);
    let out = ok(&["eval", "bleu", "--ref", "a.html", "--gen", "a.html"], p);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["score"], 1.0);
    let out = ok(&["eval", "stats", "--html", "a.html", "--image", "page.png"], p);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["dom_depth"].as_u64().unwrap() >= 3);
    assert!((v["aspect_ratio"].as_f64().unwrap() - 1000.0 / 1512.0).abs() < 1e-12);
}

#[test]
fn version_and_help() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&["--version"], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("layoutfuse "));
    let out = ok(&["--help"], d.path());
    for cmd in ["detect", "parse", "generate", "fuse", "run", "synth", "eval"] {
        assert!(String::from_utf8_lossy(&out.stdout).contains(cmd));
    }
}
