use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereo-kit"))
        .current_dir(dir)
        .env_remove("STEREO_KIT_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn column_means(png: &Path) -> Vec<f64> {
    let img = image::open(png).unwrap().to_luma8();
    (0..img.width())
        .map(|x| (0..img.height()).map(|y| img.get_pixel(x, y)[0] as f64).sum::<f64>() / img.height() as f64)
        .collect()
}

#[test]
fn help_and_bad_flags() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["--help"])), 0);
    assert_eq!(code(&run(t.path(), &["--version"])), 0);
    let o = run(t.path(), &["bench", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&run(t.path(), &[])), 1);
}

#[test]
fn synth_writes_the_sample_layout() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["synth", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        files_in(&t.path().join("s")),
        ["gt_disparity.sten", "gt_homography.txt", "left.png", "right.png", "spec.json", "validity.sten"]
    );
    let spec = json(&t.path().join("s/spec.json"));
    assert_eq!(spec["texture"], "value-noise");
    let h = fs::read_to_string(t.path().join("s/gt_homography.txt")).unwrap();
    assert_eq!(h.split_whitespace().count(), 9);
    let gt = stereo_kit::tensor::sten::load(t.path().join("s/gt_disparity.sten")).unwrap();
    assert_eq!((gt.dims().h, gt.dims().w), (96, 96));
}

#[test]
fn synth_is_deterministic() {
    let t = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = run(t.path(), &["synth", "--texture", "checker", "--seed", "1", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in files_in(&t.path().join("a")) {
        assert_eq!(
            fs::read(t.path().join("a").join(&name)).unwrap(),
            fs::read(t.path().join("b").join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn synth_rejects_unknown_texture() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["synth", "--texture", "plaid", "--out", "s"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for name in ["checker", "value-noise", "random-dots"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!t.path().join("s").exists());
}

#[test]
fn synth_unwritable_output_fails() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("blocker"), b"x").unwrap();
    let o = run(t.path(), &["synth", "--out", "blocker/sample"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn synth_rejects_invalid_scene() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["synth", "--width", "4", "--out", "s"]);
    assert_eq!(code(&o), 1);
    assert!(!t.path().join("s").exists());
}

#[test]
fn simmap_self_similarity() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["synth", "--out", "s"])), 0);
    let o = run(t.path(), &["simmap", "--left", "s/left.png", "--right", "s/left.png", "--offset", "0", "--out", "m"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&t.path().join("m/simmap.json"));
    let cos = &j["maps"]["cosine"];
    assert!((cos["min"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    assert!((cos["max"].as_f64().unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn simmap_shows_the_roll_strip() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["synth", "--roll", "0", "--out", "s"])), 0);
    let o = run(t.path(), &["simmap", "--left", "s/left.png", "--right", "s/right.png", "--offset", "10", "--out", "m"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(files_in(&t.path().join("m")), ["cosine.png", "lnd.png", "multihead.png", "simmap.json"]);
    for name in ["cosine.png", "lnd.png", "multihead.png"] {
        let cols = column_means(&t.path().join("m").join(name));
        let strip = cols[..10].iter().sum::<f64>() / 10.0;
        let body = cols[10..].iter().sum::<f64>() / (cols.len() - 10) as f64;
        assert!(body > strip + 20.0, "{name}: strip {strip} body {body}");
    }
}

#[test]
fn simmap_input_errors_write_nothing() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["synth", "--out", "s"])), 0);
    assert_eq!(code(&run(t.path(), &["synth", "--width", "64", "--out", "small"])), 0);
    let missing = run(t.path(), &["simmap", "--left", "nope.png", "--right", "s/right.png", "--out", "m1"]);
    assert_eq!(code(&missing), 1);
    assert!(!t.path().join("m1").exists());
    let mismatch = run(t.path(), &["simmap", "--left", "s/left.png", "--right", "small/right.png", "--out", "m2"]);
    assert_eq!(code(&mismatch), 1);
    assert!(stderr(&mismatch).contains("sizes differ"));
    assert!(!t.path().join("m2").exists());
    let far = run(t.path(), &["simmap", "--left", "s/left.png", "--right", "s/right.png", "--offset", "96", "--out", "m3"]);
    assert_eq!(code(&far), 1);
    assert!(!t.path().join("m3").exists());
}

#[test]
fn bench_default_sweep() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["bench"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&t.path().join("bench.json"));
    assert_eq!(j.as_array().unwrap().len(), 12);
    let csv = fs::read_to_string(t.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("operator,n,c,h,w,d,heads,"));
}

#[test]
fn bench_filters_and_contracts() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["bench", "--kinds", "multihead", "--d", "16", "--reps", "3", "--json", "out/b.json", "--csv", "out/b.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&t.path().join("out/b.json"));
    let reports = j.as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["operator"], "multihead");
    assert_eq!(reports[0]["shape"]["d"], 16);

    let zero = run(t.path(), &["bench", "--reps", "0", "--json", "z.json", "--csv", "z.csv"]);
    assert_eq!(code(&zero), 1);
    assert!(!t.path().join("z.json").exists());
    assert_eq!(code(&run(t.path(), &["bench", "--kinds", "sobel"])), 1);
}

#[test]
fn bench_thread_cap() {
    let t = TempDir::new().unwrap();
    let args = ["bench", "--kinds", "cosine", "--d", "4", "--reps", "3", "--channels", "8", "--height", "16", "--width", "16"];
    let o = Command::new(env!("CARGO_BIN_EXE_stereo-kit"))
        .current_dir(t.path())
        .env("STEREO_KIT_THREADS", "1")
        .args(args)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&t.path().join("bench.json"))[0]["threads"], 1);

    let mut with_flag = args.to_vec();
    with_flag.extend(["--threads", "3"]);
    assert_eq!(code(&run(t.path(), &with_flag)), 0);
    assert_eq!(json(&t.path().join("bench.json"))[0]["threads"], 3);
    with_flag.extend(["--threads", "0"]);
    assert_eq!(code(&run(t.path(), &with_flag)), 1);
}

#[test]
fn demo_rpe_beats_no_rpe_on_the_rolled_scene() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["demo", "--rpe", "both", "--out", "d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        files_in(&t.path().join("d")),
        [
            "demo.json",
            "disparity_no_rpe.png",
            "disparity_rpe.png",
            "encoding_left.png",
            "encoding_right.png",
            "gt_disparity.png",
            "gt_disparity.sten",
            "gt_homography.txt"
        ]
    );
    let j = json(&t.path().join("d/demo.json"));
    let with = j["with_rpe"]["mean_abs_error"].as_f64().unwrap();
    let without = j["without_rpe"]["mean_abs_error"].as_f64().unwrap();
    assert!(with < without, "rpe {with} vs no rpe {without}");
}

#[test]
fn demo_is_deterministic() {
    let t = TempDir::new().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&run(t.path(), &["demo", "--seed", "7", "--out", out])), 0);
    }
    assert_eq!(
        fs::read(t.path().join("a/demo.json")).unwrap(),
        fs::read(t.path().join("b/demo.json")).unwrap()
    );
}

#[test]
fn demo_identity_rig_is_near_exact() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["demo", "--disparity", "0", "--roll", "0", "--out", "d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&t.path().join("d/demo.json"));
    assert_eq!(j["without_rpe"]["mean_abs_error"].as_f64().unwrap(), 0.0);
    assert!(j["with_rpe"]["mean_abs_error"].as_f64().unwrap() <= 0.01);
}

#[test]
fn demo_single_mode_and_precondition() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["demo", "--rpe", "on", "--out", "d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&t.path().join("d/demo.json"));
    assert!(j.get("without_rpe").is_none() && j.get("error_ratio").is_none());
    assert!(t.path().join("d/disparity_rpe.png").exists());
    assert!(!t.path().join("d/disparity_no_rpe.png").exists());

    let o = run(t.path(), &["demo", "--max-disparity", "8", "--out", "small"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("precondition"), "{}", stderr(&o));
    assert!(!t.path().join("small").exists());
}

#[test]
fn check_prints_a_table() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["check", "--json", "check.json"]);
    let out = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = out.lines().filter(|l| l.starts_with("criterion ")).collect();
    assert_eq!(lines.len(), 9, "{out}");
    let all_pass = lines.iter().all(|l| l.contains("[PASS]"));
    assert_eq!(code(&o), if all_pass { 0 } else { 1 });
    let j = json(&t.path().join("check.json"));
    assert_eq!(j["outcomes"].as_array().unwrap().len(), 9);
}
