use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn evrot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evrot")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("evrot_cli_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = evrot(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn arg(dir: &Path, file: &str) -> String {
    dir.join(file).to_string_lossy().into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn estimate_on_a_still_camera_reports_zero_velocity() {
    let dir = scratch("still");
    synth(&dir, &["--duration", "0.5", "--omega", "0,0,0", "--noise-px", "0.3"]);
    let out = evrot(&["estimate", "--events", &arg(&dir, "events.txt"), "--calib", &arg(&dir, "calib.txt"), "--out", &arg(&dir, "est.csv")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(dir.join("est.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        for c in ["wx", "wy", "wz"] {
            let w: f64 = r[col(c)].parse().unwrap();
            assert!(w.abs() < 1e-2, "{c} = {w}");
        }
    }
}

#[test]
fn bench_reports_every_size_and_method() {
    let dir = scratch("bench");
    synth(&dir, &["--duration", "0.32", "--omega", "0.05,0.1,-0.05", "--outliers", "0.1"]);
    let out = evrot(&[
        "bench",
        "--events", &arg(&dir, "events.txt"),
        "--calib", &arg(&dir, "calib.txt"),
        "--gt", &arg(&dir, "groundtruth.txt"),
        "--out", &arg(&dir, "bench.csv"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(dir.join("bench.csv")).unwrap();
    assert_eq!(&reader.headers().unwrap()[0], "sequence");
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| &r[0] == "events"));
}

#[test]
fn vo_output_is_deterministic() {
    let dir = scratch("vo");
    synth(&dir, &["--preset", "script", "--duration", "3", "--noise-px", "0.5", "--outliers", "0.1"]);
    let run = |name: &str| {
        let out = evrot(&[
            "vo",
            "--events", &arg(&dir, "events.txt"),
            "--calib", &arg(&dir, "calib.txt"),
            "--gt", &arg(&dir, "groundtruth.txt"),
            "--batch-size", "20000",
            "--out", &arg(&dir, name),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("mean absolute orientation error"));
        std::fs::read(dir.join(name)).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    assert!(String::from_utf8_lossy(&a).starts_with("t,qx,qy,qz,qw,error_deg"));
}

#[test]
fn failures_are_categorised() {
    let dir = scratch("errors");
    synth(&dir, &["--duration", "0.05"]);
    let calib = arg(&dir, "calib.txt");

    let missing = evrot(&["estimate", "--events", &arg(&dir, "nope.txt"), "--calib", &calib, "--out", &arg(&dir, "o.csv")]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).starts_with("error: category=io"), "{}", stderr(&missing));

    std::fs::write(dir.join("bad.txt"), "0.1 1 2 1\n0.2 1 2\n").unwrap();
    let bad = evrot(&["estimate", "--events", &arg(&dir, "bad.txt"), "--calib", &calib, "--out", &arg(&dir, "o.csv")]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).starts_with("error: category=parse"), "{}", stderr(&bad));

    std::fs::write(dir.join("unsorted.txt"), "0.2 1 2 1\n0.1 1 2 0\n").unwrap();
    let unsorted = evrot(&["estimate", "--events", &arg(&dir, "unsorted.txt"), "--calib", &calib, "--out", &arg(&dir, "o.csv")]);
    assert!(stderr(&unsorted).starts_with("error: category=ordering"), "{}", stderr(&unsorted));

    let short = evrot(&["vo", "--events", &arg(&dir, "events.txt"), "--calib", &calib, "--out", &arg(&dir, "o.csv")]);
    assert!(stderr(&short).starts_with("error: category=insufficient-data"), "{}", stderr(&short));

    let usage = evrot(&["estimate", "--method", "magic"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(stderr(&usage).starts_with("error: category=usage"), "{}", stderr(&usage));
}
