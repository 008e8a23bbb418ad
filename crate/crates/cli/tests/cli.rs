use std::path::Path;
use std::process::{Command, Output};

fn mhmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhmt")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--sectors", "3", "--sector-len", "256", "--snr", "6:8:1"];

#[test]
fn ber_is_byte_identical_across_runs_and_job_counts() {
    let mut a = vec!["ber", "--detectors", "ml,wssjd-adaptive,shst-conv", "--jobs", "1"];
    a.extend(SMALL);
    let mut b = a.clone();
    b[4] = "2";
    let (x, y) = (mhmt(&a), mhmt(&b));
    assert!(x.status.success(), "{}", String::from_utf8_lossy(&x.stderr));
    assert_eq!(x.stdout, y.stdout);
    let text = stdout(&x);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "detector,snr_db,eps_mode,delta_eps,bits,bit_errors,frames,frame_errors,ber,fer,seed,wall_time");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(lines[1].starts_with("ml,6.000000000e0,static,"));
}

#[test]
fn writes_to_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sens.csv");
    let mut a = vec!["sensitivity", "--detectors", "ml", "--delta=-0.02,0.02", "--out", path.to_str().unwrap()];
    a.extend(SMALL);
    let o = mhmt(&a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(Path::new(&path)).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"detectors": ["ssjd"], "target": "dicode", "profile": {"eps0": 0.3, "kind": "static"},
            "snr_db": [7.0, 9.0], "sector_len": 200, "sectors": 2, "seed": 9}"#,
    )
    .unwrap();
    let o = mhmt(&["ber", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.starts_with("ssjd,") && l.contains(",800,") && l.contains(",11,")));

    std::fs::write(
        &cfg,
        r#"{"profile": {"eps0": 0.2, "kind": "sinusoidal", "amplitude": 0.05, "cycles": 1.0},
            "detectors": ["ml"], "sector_len": 100, "sectors": 1}"#,
    )
    .unwrap();
    let o = mhmt(&["ber", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(",sinusoidal,"));

    std::fs::write(&cfg, r#"{"sectors": 1, "bogus": true}"#).unwrap();
    assert!(!mhmt(&["ber", "--config", cfg.to_str().unwrap()]).status.success());
}

#[test]
fn gaintrace_and_sinusoidal_profile() {
    let o = mhmt(&["gaintrace", "--profile", "sin", "--eps0", "0.2", "--sector-len", "300", "--snr", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("k,channel,g,eps_hat"));
    assert_eq!(text.lines().count(), 1 + 2 * 300);
}

#[test]
fn dmin_and_eigen_tables() {
    let o = mhmt(&["dmin", "--eps", "0,0.3", "--modes", "ml,ml-closed,mismatch", "--delta=-0.01,0.02"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("n,eps,delta_eps,mode,d_min_sq,event_class"));
    assert!(text.contains("2,0.000000000e0,0.000000000e0,ml,8.000000000e0,single-track"));
    // eps 0 with offset -0.01 is skipped
    assert_eq!(text.lines().count(), 1 + 2 * 2 + 3);

    let o = mhmt(&["eigen", "--n", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("j,lambda_hat,lambda,v0,v1,v2"));
    assert!(text.lines().nth(2).unwrap().starts_with("1,0.000000000e0,1.000000000e0,"));
}

#[test]
fn bad_input_exits_nonzero() {
    for args in [
        vec!["ber", "--detectors", "nope"],
        vec!["ber", "--eps0", "0.7"],
        vec!["ber", "--sectors", "0"],
        vec!["ber", "--snr", "9:1:1"],
        vec!["ber", "--config", "/nonexistent.json"],
        vec!["sensitivity", "--eps0", "0.48", "--delta", "0.05"],
        vec!["dmin", "--modes", "bogus"],
        vec!["frobnicate"],
    ] {
        let o = mhmt(&args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}
