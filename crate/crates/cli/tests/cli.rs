use nce_core::gridfield::Microstructure;
use nce_core::io::{encode_kernel, read_correlations, read_kernel, write_field};
use nce_core::kernels::MediumSpec;
use nce_core::nce::{nce_predict, TrainConfig};
use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

const NCE: &str = env!("CARGO_BIN_EXE_nce");

const SMALL: &str = r#"{"v":1,"out":"run",
 "generate":{"side":16,"seeds_per_setting":3,
   "settings":[{"corr_len_x":0.05,"corr_len_y":0.05},{"corr_len_x":0.02,"corr_len_y":0.2}]},
 "patches":{"patch_side":0},
 "train":{"max_epochs":10},
 "gamma":{"samples":200000,"n_max":4}}"#;

fn nce<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(dir: &Path, args: &[S]) -> (i32, String) {
    let out = Command::new(NCE).args(args).current_dir(dir).env_remove("NCE_THREADS").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn ok<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(dir: &Path, args: &[S]) {
    let (code, err) = nce(dir, args);
    assert_eq!(code, 0, "nce {args:?} failed: {err}");
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), config).unwrap();
    dir
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeSet<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut acc = BTreeSet::new();
    walk(root, root, &mut acc);
    acc
}

/// (file, kind) pairs from a manifest, asserting the header.
fn manifest(dir: &Path) -> Vec<(String, String)> {
    let text = read(&dir.join("manifest.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("setting,seed,phi,file,kind,source"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_string(), f[4].to_string())
        })
        .collect()
}

fn pipeline(dir: &Path, threads: &str) {
    let with = |extra: &[&'static str]| -> Vec<String> {
        ["--config", "cfg.json", "--threads", threads].iter().chain(extra).map(|s| s.to_string()).collect()
    };
    ok(dir, &with(&["generate"]));
    ok(dir, &with(&["stats", "--fields", "run"]));
    ok(dir, &with(&["solve", "--fields", "run"]));
    ok(dir, &with(&["sce", "--corrs", "run"]));
    ok(dir, &with(&["nce-train", "--corrs", "run", "--targets", "run/targets.csv"]));
    ok(dir, &with(&["nce-predict", "--kernel", "run/kernel.nck", "--corrs", "run"]));
    ok(dir, &with(&["sensitivity", "--corrs", "run/corrs/s00_r000.cor", "--kernel", "run/kernel.nck", "--compare", "analytic,learned"]));
    ok(dir, &with(&["gamma"]));
    ok(dir, &with(&["export-map", "--map", "run/map_learned.csv"]));
}

#[test]
fn full_pipeline_lists_every_file_once() {
    let dir = setup(SMALL);
    pipeline(dir.path(), "1");
    let run = dir.path().join("run");
    let rows = manifest(&run);
    let listed: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    let unique: BTreeSet<String> = listed.iter().map(|s| s.to_string()).collect();
    assert_eq!(unique.len(), listed.len(), "a file is listed twice");
    let mut on_disk = files_under(&run);
    on_disk.remove("manifest.csv");
    assert_eq!(unique, on_disk);
    let count = |kind: &str| rows.iter().filter(|r| r.1 == kind).count();
    assert_eq!(count("field"), 6);
    assert_eq!(count("corr"), 6);
    assert_eq!(count("map"), 2);
}

#[test]
fn generate_counts_and_reruns_byte_identically() {
    let cfg = r#"{"v":1,"out":"run","generate":{"side":16,"seeds_per_setting":5}}"#;
    let dir = setup(cfg);
    ok(dir.path(), &["--config", "cfg.json", "generate"]);
    let first = read(&dir.path().join("run/manifest.csv"));
    assert_eq!(first.lines().count(), 51);
    assert_eq!(files_under(&dir.path().join("run/fields")).len(), 50);
    ok(dir.path(), &["--config", "cfg.json", "generate"]);
    assert_eq!(read(&dir.path().join("run/manifest.csv")), first);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = setup(SMALL);
    let b = setup(SMALL);
    pipeline(a.path(), "1");
    pipeline(b.path(), "3");
    let (ra, rb) = (a.path().join("run"), b.path().join("run"));
    let files = files_under(&ra);
    assert_eq!(files, files_under(&rb));
    for f in files {
        assert_eq!(std::fs::read(ra.join(&f)).unwrap(), std::fs::read(rb.join(&f)).unwrap(), "{f} differs");
    }
}

#[test]
fn checkpoint_round_trips_through_predict() {
    let dir = setup(SMALL);
    pipeline(dir.path(), "1");
    let run = dir.path().join("run");
    let bytes = std::fs::read(run.join("kernel.nck")).unwrap();
    let km = read_kernel(&run.join("kernel.nck")).unwrap();
    let train = TrainConfig { max_epochs: 10, ..TrainConfig::default() };
    assert_eq!(encode_kernel(&km, Some(&train)), bytes);
    let table = read(&run.join("nce_predictions.csv"));
    let row = table.lines().nth(1).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    let cs = read_correlations(&dir.path().join(f[2])).unwrap();
    let want = nce_predict(&km, &cs, &train.series_config()).unwrap();
    let got: Vec<f64> = f[4..12].iter().map(|t| t.parse().unwrap()).collect();
    let e = want.m.entries();
    assert_eq!(got, [e[0].re, e[0].im, e[1].re, e[1].im, e[2].re, e[2].im, e[3].re, e[3].im]);
}

#[test]
fn compare_emits_aligned_maps_and_distance() {
    let dir = setup(SMALL);
    pipeline(dir.path(), "1");
    let run = dir.path().join("run");
    let coords = |name: &str| -> Vec<String> {
        read(&run.join(name)).lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let a = coords("map_analytic.csv");
    assert_eq!(a.len(), 16 * 16 + 1);
    assert_eq!(a, coords("map_learned.csv"));
    let cmp = read(&run.join("compare.csv"));
    let mut lines = cmp.lines();
    assert_eq!(lines.next(), Some("candidate,reference,sign_agreement,normalized_l2"));
    let f: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&f[..2], ["learned", "analytic"]);
    let l2: f64 = f[3].parse().unwrap();
    assert!(l2.is_finite() && l2 >= 0.0);
    let pgm = std::fs::read(run.join("map_learned.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n255\n".len() + 256);
}

/// Hand-written field manifest for control microstructures.
fn control_fields(dir: &Path, fields: &[(&str, Microstructure)]) {
    let root = dir.join("ctl");
    std::fs::create_dir_all(root.join("fields")).unwrap();
    let mut text = String::from("setting,seed,phi,file,kind,source\n");
    for (i, (name, m)) in fields.iter().enumerate() {
        write_field(m, &root.join(format!("fields/{name}.fld"))).unwrap();
        text.push_str(&format!("{i},0,,fields/{name}.fld,field,control\n"));
    }
    std::fs::write(root.join("manifest.csv"), text).unwrap();
}

fn tensor_rows(p: &Path) -> Vec<Vec<String>> {
    read(p).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn homogeneous_and_laminate_controls() {
    let dir = setup(r#"{"v":1,"out":"ctl","patches":{"patch_side":0}}"#);
    control_fields(
        dir.path(),
        &[("empty", Microstructure::filled(16, 0).unwrap()), ("laminate", Microstructure::laminate_x(16).unwrap())],
    );
    ok(dir.path(), &["--config", "cfg.json", "stats", "--fields", "ctl"]);
    ok(dir.path(), &["--config", "cfg.json", "sce", "--corrs", "ctl"]);
    ok(dir.path(), &["--config", "cfg.json", "solve", "--fields", "ctl"]);
    let spec = MediumSpec::conduction(5.0, 20.0);
    let sce = tensor_rows(&dir.path().join("ctl/sce_predictions.csv"));
    assert_eq!(sce[0][3], "ok");
    let num = |s: &str| s.parse::<f64>().unwrap();
    assert_eq!((num(&sce[0][4]), num(&sce[0][6]), num(&sce[0][10])), (spec.prop0, 0.0, spec.prop0));
    let solved = tensor_rows(&dir.path().join("ctl/targets.csv"));
    assert!((num(&solved[0][4]) - 5.0).abs() < 1e-10 && (num(&solved[0][10]) - 5.0).abs() < 1e-10);
    let (xx, yy) = (num(&solved[1][4]), num(&solved[1][10]));
    let (lo, hi) = (xx.min(yy), xx.max(yy));
    assert!((lo - 8.0).abs() < 1e-6 && (hi - 12.5).abs() < 1e-6, "laminate gave {xx}, {yy}");
    assert!((num(&solved[1][6]) - num(&solved[1][8])).abs() < 1e-6);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = setup(SMALL);
    let d = dir.path();
    let code = |args: &[&str]| nce(d, args).0;
    // Usage and parameter errors.
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["generate"]), 2, "no output directory");
    std::fs::write(d.join("bad.json"), "{not json").unwrap();
    assert_eq!(code(&["--config", "bad.json", "generate"]), 2);
    std::fs::write(d.join("v2.json"), r#"{"v":2,"out":"x"}"#).unwrap();
    assert_eq!(code(&["--config", "v2.json", "generate"]), 2);
    std::fs::write(d.join("typo.json"), r#"{"v":1,"out":"x","generate":{"sidee":8}}"#).unwrap();
    assert_eq!(code(&["--config", "typo.json", "generate"]), 2);
    assert_eq!(code(&["--config", "cfg.json", "generate", "--phi", "1.5"]), 2);
    assert_eq!(code(&["--config", "cfg.json", "--threads", "0", "generate"]), 2);
    assert_eq!(code(&["--config", "cfg.json", "stats", "--fields", "missing"]), 2);
    assert_eq!(code(&["--config", "cfg.json", "sce", "--corrs", "run", "--prop1", "-5"]), 2);
    ok(d, &["--config", "cfg.json", "generate"]);
    std::fs::write(d.join("run/fields/s00_r000.fld"), b"garbage").unwrap();
    assert_eq!(code(&["--config", "cfg.json", "stats", "--fields", "run"]), 2);
    // Numerical failure: an unreachable tolerance fails every solve, and the
    // table still records each row.
    ok(d, &["--config", "cfg.json", "generate"]);
    assert_eq!(code(&["--config", "cfg.json", "--tol", "1e-30", "solve", "--fields", "run"]), 3);
    let rows = tensor_rows(&d.join("run/targets.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[3] == "error" && !r[12].is_empty()));
}

#[test]
fn threads_default_comes_from_the_environment() {
    let dir = setup(SMALL);
    let out = Command::new(NCE)
        .args(["--config", "cfg.json", "generate"])
        .current_dir(dir.path())
        .env("NCE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
