//! End-to-end runs of the `qlg` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qlg_core::snapshot::load_snapshot;

fn qlg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlg"))
        .args(args)
        .args(["--threads", "2"])
        .env("RUST_LOG", "warn")
        .output()
        .expect("qlg binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        "grid = 16\na = 0.16\nphase_scale = 0.02\nlayout = twelve\nhook_every = 5\n\
         steps_per_output = 10\ncheckpoint_every = 10\nn_steps = 20\noutput_dir = out\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn init_reports_energy_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("init.qlg");
    let text = ok(qlg(&["init", "--config", s(&cfg), "--out", s(&out)]));
    assert!(text.contains("E_comp/E_incomp"), "{text}");
    assert!(text.contains("recurrence_class"));
    let snap = load_snapshot(&out).unwrap();
    assert_eq!(snap.timestep, 0);
    assert_eq!(snap.field.grid().dims(), [16; 3]);
    assert!(dir.path().join("init.report.txt").exists());
}

#[test]
fn zero_step_run_writes_one_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    ok(qlg(&["run", "--config", s(&cfg), "--steps", "0"]));
    let out = dir.path().join("out");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2, "{trace}");
    assert!(lines[1].starts_with("0,"));
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 10);
    assert_eq!(fields[7].parse::<f64>().unwrap(), 1.0);
    let initial = load_snapshot(&out.join("initial.qlg")).unwrap();
    let last = load_snapshot(&out.join("final.qlg")).unwrap();
    assert!(initial.field.bit_eq(&last.field));
}

#[test]
fn resumed_run_is_bit_identical() {
    let straight = tempfile::tempdir().unwrap();
    let cfg = write_config(straight.path(), "");
    ok(qlg(&["run", "--config", s(&cfg)]));

    let broken = tempfile::tempdir().unwrap();
    let cfg2 = write_config(broken.path(), "");
    // stop after 15 steps; the last checkpoint is at step 10
    ok(qlg(&["run", "--config", s(&cfg2), "--steps", "15"]));
    let meta = std::fs::read_to_string(broken.path().join("out/checkpoint.meta")).unwrap();
    assert!(meta.contains("step = 10"), "{meta}");
    let text = ok(qlg(&["run", "--config", s(&cfg2), "--resume"]));
    assert!(text.contains("steps 10..20"), "{text}");

    let a = std::fs::read(straight.path().join("out/final.qlg")).unwrap();
    let b = std::fs::read(broken.path().join("out/final.qlg")).unwrap();
    assert!(a == b, "final snapshots differ");
    let ta = std::fs::read_to_string(straight.path().join("out/trace.csv")).unwrap();
    let tb = std::fs::read_to_string(broken.path().join("out/trace.csv")).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(ta.lines().count(), 1 + 5);
    for step in [10, 20] {
        assert!(straight.path().join(format!("out/snap_t{step}.qlg")).exists());
    }
}

#[test]
fn resume_refuses_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    ok(qlg(&["run", "--config", s(&cfg), "--steps", "10"]));
    let changed = write_config(dir.path(), "a = 0.2\n");
    let out = qlg(&["run", "--config", s(&changed), "--resume"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
}

#[test]
fn spectra_writes_csvs_and_fit_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    ok(qlg(&["run", "--config", s(&cfg)]));
    let out = dir.path().join("spec");
    let snaps: Vec<PathBuf> = [0, 10, 20].iter().map(|t| dir.path().join(format!("out/snap_t{t}.qlg"))).collect();
    let mut args = vec!["spectra", "--windows", "2:4,5:7", "--out", s(&out), "--in"];
    args.extend(snaps.iter().map(|p| s(p)));
    let text = ok(qlg(&args));
    assert!(text.contains("wrote 8 fit rows"), "{text}");
    let table = std::fs::read_to_string(out.join("fit_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("kind,k_lo,k_hi,alpha_mean,alpha_std,n_snapshots"));
    assert_eq!(lines.count(), 8);
    for t in [0, 10, 20] {
        let csv = std::fs::read_to_string(out.join(format!("spectra_t{t}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("k,E_incomp,E_comp,E_quantum,E_total_kin"));
    }
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qlg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qlg(&["catmap"]).status.code(), Some(1));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "grid = 16\ncolour = blue\n").unwrap();
    let out = qlg(&["init", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(qlg(&["spectra", "--in", "x.qlg", "--windows", "9:3"]).status.code(), Some(2));
    assert_eq!(qlg(&["catmap", "--n", "0"]).status.code(), Some(2));

    assert_eq!(qlg(&["spectra", "--in", s(&dir.path().join("missing.qlg"))]).status.code(), Some(3));
    let junk = dir.path().join("junk.qlg");
    std::fs::write(&junk, b"QLG1\x10\x00").unwrap();
    assert_eq!(qlg(&["spectra", "--in", s(&junk)]).status.code(), Some(3));

    let strict = write_config(dir.path(), "norm_tolerance = 1e-300\n");
    let out = qlg(&["run", "--config", s(&strict)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn recurrence_reports_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rec.cfg");
    std::fs::write(&cfg, "a = 0.04\nphase_scale = 0.005\namplitude_rescale = 1.4\nlayout = twelve\n").unwrap();
    let text = ok(qlg(&["recurrence", "--config", s(&cfg), "--grids", "24,32", "--reference", "48", "--budget-steps", "400"]));
    assert!(text.contains("T(32)/T(24)"), "{text}");
    let ratio: f64 = text.rsplit("ratio = ").next().unwrap().trim().parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.1, "{text}");

    let short = ok(qlg(&["recurrence", "--config", s(&cfg), "--grids", "24,32", "--reference", "48", "--budget-steps", "20"]));
    assert!(short.contains("inconclusive"), "{short}");
}

#[test]
fn catmap_prints_period_and_iterates_images() {
    assert_eq!(ok(qlg(&["catmap", "--n", "313"])).trim(), "period=314, half_inversion=true");
    assert_eq!(ok(qlg(&["catmap", "--n", "315"])).trim(), "period=120, half_inversion=false");
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.pgm");
    let zero = dir.path().join("zero.pgm");
    ok(qlg(&["catmap", "--n", "12", "--steps", "0", "--out", s(&zero)]));
    let text = ok(qlg(&["catmap", "--n", "12", "--steps", "24", "--out", s(&full)]));
    assert_eq!(text.trim(), "period=12, half_inversion=false");
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&zero).unwrap());
    let moved = dir.path().join("moved.pgm");
    ok(qlg(&["catmap", "--n", "12", "--image", s(&zero), "--steps", "5", "--out", s(&moved)]));
    assert_ne!(std::fs::read(&moved).unwrap(), std::fs::read(&zero).unwrap());
}
