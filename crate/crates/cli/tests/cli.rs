use std::process::{Command, Output};

fn swipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt-pep")).args(args).output().unwrap()
}

#[test]
fn pep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = swipt(&["pep", "--env", "NG", "--scheme", "blind-aeh", "--snr", "0:45:5", "--trials", "1e4", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().nth(1).unwrap().starts_with("0,blind,aeh,NG,model1,"));
}

#[test]
fn missing_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = swipt(&["pep", "--config", dir.path().join("absent.cfg").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.cfg"));
    assert!(!out.exists());
}

#[test]
fn bad_input_is_rejected() {
    assert!(!swipt(&["pep", "--unknown-flag"]).status.success());
    assert!(!swipt(&["pep", "--env", "XX"]).status.success());
    assert!(!swipt(&["pep", "--snr", "0", "--out", "/nonexistent-dir/x.csv"]).status.success());
    assert!(!swipt(&["sweep"]).status.success());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("r.csv");
    std::fs::write(&cfg, format!("env = HI\nscheme = csi\neh = ieh\nsnr_db = 5,15\nout = {}\n", out.display())).unwrap();
    let o = swipt(&["pep", "--config", cfg.to_str().unwrap(), "--env", "MI"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",csi,ieh,MI,")));
}

#[test]
fn diversity_prints_estimate() {
    let o = swipt(&["diversity", "--env", "HI", "--scheme", "csi-aeh"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row = text.lines().find(|l| l.starts_with("csi,aeh,HI")).unwrap();
    let d: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(d > 1.0 && d < 4.0);
}
