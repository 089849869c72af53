use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shadow() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shadow"));
    c.env_remove("SHADOW_THREADS");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn shadow")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

/// Trains the smoke configuration into `dir` and returns the final checkpoint.
fn train_smoke(dir: &Path) -> PathBuf {
    let out = run(shadow().args(["train", "--config"]).arg(smoke_config()).arg("--out").arg(dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("final.ckpt")
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(shadow().args(["train", "--config"]).arg(dir.path().join("nope.json")));
    assert_eq!(code(&missing), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"seed\": ").unwrap();
    assert_eq!(code(&run(shadow().args(["train", "--config"]).arg(&bad))), 2);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{ "sead": 3 }"#).unwrap();
    assert_eq!(code(&run(shadow().args(["train", "--config"]).arg(&unknown))), 2);

    let mode = run(shadow().args(["train", "--mode", "triple", "--config"]).arg(smoke_config()));
    assert_eq!(code(&mode), 2);

    let threads = run(shadow().env("SHADOW_THREADS", "abc").arg("gradcheck"));
    assert_eq!(code(&threads), 2);
    let zero = run(shadow().env("SHADOW_THREADS", "0").arg("gradcheck"));
    assert_eq!(code(&zero), 2);

    let kind = run(shadow().args(["gen-motion", "--kind", "backflip", "--out"]).arg(dir.path().join("m.json")));
    assert_eq!(code(&kind), 2);
}

#[test]
fn train_writes_run_directory_and_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let ckpt = train_smoke(&run_dir);
    assert!(ckpt.exists());
    assert!(run_dir.join("config.json").exists());
    let csv = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("# schema="));
    assert_eq!(csv.lines().count(), 5, "schema line, header and three iterations");

    let eval_dir = dir.path().join("eval");
    let out = run(shadow().args(["eval", "--episodes", "3", "--checkpoint"]).arg(&ckpt).arg("--out").arg(&eval_dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["episodes"].as_array().unwrap().len(), 3);
    let rate = report["success_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    let traces = std::fs::read_to_string(eval_dir.join("traces.csv")).unwrap();
    assert!(traces.starts_with("episode,step,time,max_joint_acc,keyframe_reached"));

    let zero = run(shadow().args(["eval", "--episodes", "0", "--checkpoint"]).arg(&ckpt).arg("--out").arg(&eval_dir));
    assert_eq!(code(&zero), 2);

    let replay = dir.path().join("replay.jsonl");
    let out = run(shadow().args(["replay", "--checkpoint"]).arg(&ckpt).arg("--out").arg(&replay));
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> =
        std::fs::read_to_string(&replay).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());

    // a planar2 motion cannot drive a planar5 policy
    let small = dir.path().join("small.json");
    let out = run(shadow().args(["gen-motion", "--kind", "stand-reach", "--chain", "planar2", "--out"]).arg(&small));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(shadow().args(["eval", "--episodes", "1", "--checkpoint"]).arg(&ckpt).arg("--motion").arg(&small).arg("--out").arg(&eval_dir));
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let corrupt = dir.path().join("corrupt.ckpt");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes.truncate(n - 16);
    std::fs::write(&corrupt, bytes).unwrap();
    let out = run(shadow().args(["eval", "--checkpoint"]).arg(&corrupt).arg("--out").arg(&eval_dir));
    assert_ne!(code(&out), 0);
}

#[test]
fn gen_motion_frame_count_follows_duration_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let out = run(shadow().args(["gen-motion", "--kind", "getup-2d", "--duration", "2", "--fps", "25", "--out"]).arg(&path));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["frames"].as_array().unwrap().len(), 50);
    assert!(String::from_utf8_lossy(&out.stdout).contains("50 frames"));
}

#[test]
fn plots_are_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let ckpt = train_smoke(&run_dir);
    let other = dir.path().join("other");
    let out = run(shadow().args(["train", "--mode", "single", "--config"]).arg(smoke_config()).arg("--out").arg(&other));
    assert_eq!(code(&out), 0);
    let eval_dir = dir.path().join("eval");
    let out = run(shadow().args(["eval", "--episodes", "2", "--checkpoint"]).arg(&ckpt).arg("--out").arg(&eval_dir));
    assert_eq!(code(&out), 0);

    let plots = dir.path().join("plots");
    let out = run(shadow()
        .arg("plot")
        .arg("--metrics")
        .arg(run_dir.join("metrics.csv"))
        .arg("--metrics")
        .arg(other.join("metrics.csv"))
        .arg("--trace")
        .arg(eval_dir.join("traces.csv"))
        .arg("--out")
        .arg(&plots));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["success_rate.svg", "max_joint_acc.svg", "joint_acc_trace.svg"] {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        let expect = if name == "joint_acc_trace.svg" { 1 } else { 2 };
        assert_eq!(lines, expect, "{name}");
    }

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b\n1,2\n").unwrap();
    let out = run(shadow().arg("plot").arg("--metrics").arg(&junk).arg("--out").arg(&plots));
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_passes_and_flags_broken_backward() {
    let ok = run(shadow().arg("gradcheck"));
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("matmul"));
    let broken = run(shadow().args(["gradcheck", "--inject-broken-backward"]));
    assert_eq!(code(&broken), 3);
}
