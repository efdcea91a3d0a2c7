//! Drives the `oddm` binary.

use std::path::Path;
use std::process::{Command, Output};

fn oddm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oddm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run oddm")
}

#[test]
fn verify_passes_and_detects_a_flipped_cp_phase() {
    let dir = tempfile::tempdir().unwrap();
    let ok = oddm(&["verify"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = oddm(&["verify", "--flip-cp-phase"], dir.path());
    assert_ne!(bad.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn io_check_writes_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = oddm(&["io-check", "--trials", "5"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("io_check.csv")).unwrap();
    assert!(csv.starts_with("trial,oddm_residual,otfs_residual"));
    assert_eq!(csv.lines().count(), 6);
    let flipped = oddm(&["io-check", "--trials", "2", "--flip-cp-phase"], dir.path());
    assert_eq!(flipped.status.code(), Some(1));
}

#[test]
fn invalid_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.kv");
    std::fs::write(&cfg, "M = 16\nQ = 8\n").unwrap();
    let out = oddm(&["--config", cfg.to_str().unwrap(), "verify-pulse"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2Q"));

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = oddm(&["--config", cfg.to_str().unwrap(), "ber"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn modulate_then_demodulate_round_trips_a_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.kv");
    std::fs::write(&cfg, "M = 16\nN = 4\nQ = 2\nL = 3\nK = 1\nO = 4\n").unwrap();
    let mut frame = String::from("m,n,re,im\n");
    for m in 0..16 {
        for n in 0..4 {
            let s = |b: bool| if b { 0.7071067811865476 } else { -0.7071067811865476 };
            frame.push_str(&format!("{m},{n},{},{}\n", s((m + n) % 2 == 0), s(m % 3 == 0)));
        }
    }
    let input = dir.path().join("x.csv");
    std::fs::write(&input, &frame).unwrap();
    for scheme in ["oddm", "otfs"] {
        let wave = dir.path().join(format!("{scheme}_w.csv"));
        let back = dir.path().join(format!("{scheme}_x.csv"));
        let c = cfg.to_str().unwrap();
        let m = oddm(
            &["--config", c, "modulate", "--scheme", scheme, "--input", input.to_str().unwrap(), "--output", wave.to_str().unwrap()],
            dir.path(),
        );
        assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
        let d = oddm(
            &["--config", c, "demodulate", "--scheme", scheme, "--input", wave.to_str().unwrap(), "--output", back.to_str().unwrap()],
            dir.path(),
        );
        assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
        let x = oddm::frame::frame_from_csv(&frame, 16, 4).unwrap();
        let y = oddm::frame::frame_from_csv(&std::fs::read_to_string(&back).unwrap(), 16, 4).unwrap();
        let err = x.as_stacked().iter().zip(y.as_stacked()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{scheme}: {err}");
    }
}

#[test]
fn psd_and_verify_pulse_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("psd.kv");
    std::fs::write(&cfg, "psd_frames = 4\n").unwrap();
    let out = oddm(&["--config", cfg.to_str().unwrap(), "psd"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("psd.csv")).unwrap();
    assert!(csv.starts_with("freq_hz,oddm_psd_db,otfs_psd_db"));
    let out = oddm(&["verify-pulse"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("ambiguity.csv").exists());
}
