use std::fs;
use std::path::Path;

use anystereo::cli::run;
use anystereo::files::{load_disparity, load_image};
use anystereo::manifest::{parse_dataset, RunManifest};
use anystereo_core::tuner::{dataset_loss, Sample};
use anystereo_core::MatcherConfig;

fn sh(args: &[&str]) -> anyhow::Result<String> {
    let mut argv = vec!["anystereo"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    run(&argv, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn scene(dir: &Path, d0: &str) -> String {
    let s = p(dir, "scene");
    sh(&["generate", "--d0", d0, "--width", "320", "--height", "192", "--seed", "3", "--out-dir", &s]).unwrap();
    s
}

#[test]
fn match_writes_one_file_per_stage() {
    let t = tempfile::tempdir().unwrap();
    let s = scene(t.path(), "24");
    let (l, r) = (format!("{s}/left.png"), format!("{s}/right.png"));
    let prefix = p(t.path(), "run");
    sh(&["match", &l, &r, "--dmax", "64", "--out-prefix", &prefix]).unwrap();
    for st in ["F1", "F2", "F3"] {
        assert!(Path::new(&format!("{prefix}-{st}.pfm")).exists());
    }
    let m = RunManifest::load(Path::new(&format!("{prefix}-manifest.json"))).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["F1", "F2", "F3"]);
    assert!(m.stages.windows(2).all(|w| w[1].elapsed_ms > w[0].elapsed_ms));

    let b = p(t.path(), "budget");
    sh(&["match", &l, &r, "--dmax", "64", "--budget-ms", "0", "--out-prefix", &b]).unwrap();
    assert!(Path::new(&format!("{b}-F1.pfm")).exists());
    assert!(!Path::new(&format!("{b}-F2.pfm")).exists());

    let h = p(t.path(), "half");
    sh(&["match", &l, &r, "--dmax", "64", "--mode", "H", "--out-prefix", &h]).unwrap();
    for st in ["H1", "H2", "H3"] {
        assert!(Path::new(&format!("{h}-{st}.pfm")).exists());
    }
}

#[test]
fn replay_reproduces_outputs() {
    let t = tempfile::tempdir().unwrap();
    let s = scene(t.path(), "16");
    let prefix = p(t.path(), "run");
    sh(&["--threads", "3", "match", &format!("{s}/left.png"), &format!("{s}/right.png"), "--dmax", "64", "--out-prefix", &prefix]).unwrap();
    let first = fs::read(format!("{prefix}-F3.pfm")).unwrap();
    fs::remove_file(format!("{prefix}-F3.pfm")).unwrap();
    sh(&["replay", &format!("{prefix}-manifest.json")]).unwrap();
    assert_eq!(fs::read(format!("{prefix}-F3.pfm")).unwrap(), first);
}

#[test]
fn eval_rows() {
    let t = tempfile::tempdir().unwrap();
    let s = scene(t.path(), "24");
    let gt = format!("{s}/gt.pfm");
    let csv = sh(&["eval", &gt, &gt]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "range,bad1,bad2,bad4,avgerr,rms,A90,A95,A99,n");
    assert_eq!(lines.len(), 2);
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[0], "All");
    assert!(row[1..9].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));

    let calib = p(t.path(), "calib.txt");
    fs::write(&calib, "ndisp=64\nbaseline=0.54\nfocal=3578\n").unwrap();
    let csv = sh(&["eval", &gt, &gt, "--calib", &calib, "--tau", "0.5,3"]).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["S", "M", "L", "All"]);
    assert!(csv.starts_with("range,bad0.5,bad3,avgerr"));
    assert!(sh(&["eval", &gt, &gt, "--ranges"]).is_err());
}

#[test]
fn augment_identity_and_seeds() {
    let t = tempfile::tempdir().unwrap();
    let s = scene(t.path(), "24");
    let (l, r) = (format!("{s}/left.png"), format!("{s}/right.png"));
    let (ol, or) = (p(t.path(), "al.png"), p(t.path(), "ar.png"));
    sh(&["augment", &l, &r, "--preset", "identity", "--out-left", &ol, "--out-right", &or]).unwrap();
    assert_eq!(load_image(Path::new(&ol)).unwrap(), load_image(Path::new(&l)).unwrap());
    assert_eq!(load_image(Path::new(&or)).unwrap(), load_image(Path::new(&r)).unwrap());

    let run_seed = |tag: &str| {
        let (a, b) = (p(t.path(), &format!("{tag}l.pfm")), p(t.path(), &format!("{tag}r.pfm")));
        sh(&["augment", &l, &r, "--seed", "11", "--out-left", &a, "--out-right", &b]).unwrap();
        (fs::read(&a).unwrap(), fs::read(&b).unwrap(), fs::read_to_string(format!("{a}.spec.json")).unwrap())
    };
    let first = run_seed("x");
    assert_eq!(first, run_seed("y"));
    let spec: serde_json::Value = serde_json::from_str(&first.2).unwrap();
    assert_eq!(spec["seed"], 11);
    assert!(spec["chromatic_left"]["brightness"].is_number());
}

#[test]
fn sweep_grid_and_baseline_row() {
    let t = tempfile::tempdir().unwrap();
    let s = scene(t.path(), "32");
    let (l, r, gt) = (format!("{s}/left.png"), format!("{s}/right.png"), format!("{s}/gt.pfm"));
    let csv = sh(&["sweep", &l, &r, &gt, "--kind", "rotation", "--dmax", "64"]).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let csv_y = sh(&["sweep", &l, &r, &gt, "--kind", "ytrans", "--dmax", "64", "--grid", "0,1"]).unwrap();
    let base_rot: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let base_y: Vec<&str> = csv_y.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(base_rot, base_y);

    let prefix = p(t.path(), "m");
    sh(&["match", &l, &r, "--dmax", "64", "--out-prefix", &prefix]).unwrap();
    let e = sh(&["eval", &format!("{prefix}-F3.pfm"), &gt]).unwrap();
    let avg = e.lines().nth(1).unwrap().split(',').nth(4).unwrap().to_string();
    assert_eq!(base_y[1], avg);

    let occ = sh(&["sweep", &l, &r, &gt, "--kind", "occlusion", "--dmax", "64", "--grid", "0,50"]).unwrap();
    assert_eq!(occ.lines().count(), 3);
}

#[test]
fn tune_budget_and_trace() {
    let t = tempfile::tempdir().unwrap();
    let dir = p(t.path(), "suite");
    sh(&["suite", "--n", "2", "--width", "256", "--height", "128", "--d-lo", "8", "--d-hi", "40", "--float", "--out-dir", &dir]).unwrap();
    let listing = format!("{dir}/dataset.txt");
    let cfg = p(t.path(), "base.cfg");
    fs::write(&cfg, "# base\nd_max=64\n").unwrap();

    let copy = p(t.path(), "copy.cfg");
    sh(&["tune", &listing, "--config", &cfg, "--budget", "0", "--out", &copy]).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), fs::read(&cfg).unwrap());

    let tuned = p(t.path(), "tuned.cfg");
    sh(&["tune", &listing, "--config", &cfg, "--budget", "12", "--params", "beta,vpp_mix", "--out", &tuned]).unwrap();
    let trace = fs::read_to_string(format!("{tuned}.trace.csv")).unwrap();
    let losses: Vec<f64> = trace.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!losses.is_empty());
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));

    let cfg = MatcherConfig::from_kv(&fs::read_to_string(&tuned).unwrap()).unwrap();
    let entries = parse_dataset(&fs::read_to_string(&listing).unwrap(), Path::new(&dir)).unwrap();
    let data: Vec<Sample> = entries
        .iter()
        .map(|e| Sample {
            left: load_image(&e.left).unwrap(),
            right: load_image(&e.right).unwrap(),
            gt: load_disparity(&e.gt).unwrap(),
        })
        .collect();
    let loss = dataset_loss(&cfg, &cfg.decoder, &data).unwrap();
    assert_eq!(loss, *losses.last().unwrap());

    assert!(sh(&["tune", &listing, "--params", "nope", "--out", &tuned]).is_err());
}

#[test]
fn errors_surface() {
    let t = tempfile::tempdir().unwrap();
    let missing = p(t.path(), "missing.png");
    let prefix = p(t.path(), "x");
    assert!(sh(&["match", &missing, &missing, "--out-prefix", &prefix]).is_err());
    let bad = p(t.path(), "bad.cfg");
    fs::write(&bad, "beta=3\n").unwrap();
    let s = scene(t.path(), "8");
    let (l, r) = (format!("{s}/left.png"), format!("{s}/right.png"));
    assert!(sh(&["match", &l, &r, "--config", &bad, "--out-prefix", &prefix]).is_err());
    assert!(sh(&["match", &l, &r, "--dmax", "400", "--out-prefix", &prefix]).is_err());
}
