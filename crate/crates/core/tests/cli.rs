mod common;

use std::path::Path;
use std::process::{Command, Output};

fn lineloss(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lineloss"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn solve_and_restore_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for m in ["dc", "lloa"] {
        let o = lineloss(&["solve", "--case", "case14", "--method", m, "--warm-start", "-o", &format!("{m}.json")], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = lineloss(&["restore", "--case", "case14", "--solutions", "dc.json", "lloa.json", "--format", "csv"], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().nth(1).unwrap().starts_with("dc,true"));
}

#[test]
fn solve_writes_lp_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = lineloss(&["solve", "--case", "case14", "--method", "llqcp", "--tangents", "9", "--write-lp", "m.lp"], dir.path());
    assert_eq!(code(&o), 0);
    let lp = std::fs::read_to_string(dir.path().join("m.lp")).unwrap();
    assert!(lp.contains("Minimize") && lp.contains("Subject To") && lp.contains("End"));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["method"], "llqcp");
}

#[test]
fn infeasible_case_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = lineloss::cases::bundled("case14").unwrap();
    for b in &mut net.buses {
        b.pd *= 10.0;
    }
    std::fs::write(dir.path().join("heavy.json"), net.to_json()).unwrap();
    let o = lineloss(&["solve", "--case", "heavy.json", "--method", "lloa"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn input_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lineloss(&["solve", "--case", "missing.m", "--method", "dc"], dir.path())), 4);
    assert_eq!(code(&lineloss(&["solve", "--case", "case14", "--method", "acopf"], dir.path())), 4);
    assert_eq!(code(&lineloss(&["frobnicate"], dir.path())), 4);
    std::fs::write(dir.path().join("bad.toml"), "reserves = 3\n").unwrap();
    assert_eq!(code(&lineloss(&["sced", "--case", "case14", "--method", "dc", "--config", "bad.toml"], dir.path())), 4);
    assert_eq!(code(&lineloss(&["solve", "--case", "case14", "--method", "lloa", "--epsilon=-1"], dir.path())), 4);
    assert_eq!(code(&lineloss(&["--help"], dir.path())), 0);
}

#[test]
fn sced_reads_toml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("r.toml"), "reserve_requirement = 0.3\n").unwrap();
    std::fs::write(dir.path().join("r.json"), r#"{"reserve_requirement": 0.3}"#).unwrap();
    let a = lineloss(&["sced", "--case", "case30", "--method", "llqcp", "--config", "r.toml"], dir.path());
    let b = lineloss(&["sced", "--case", "case30", "--method", "llqcp", "--config", "r.json"], dir.path());
    assert_eq!(code(&a), 0);
    let va: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let vb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(va["pg"], vb["pg"]);
    assert!(va["reserves"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).sum::<f64>() >= 0.3 - 1e-7);
}

#[test]
fn sweep_writes_outputs_and_report_formats() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "alphas = [1.0]\nseeds = [0]\n").unwrap();
    let o = lineloss(&["sweep", "--config", "s.toml", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rows.csv", "timing.csv", "series.csv", "exclusions.csv", "report.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    for fmt in ["csv", "json", "table"] {
        let o = lineloss(&["report", "--case", "case14", "--format", fmt], dir.path());
        assert_eq!(code(&o), 0);
        assert!(String::from_utf8(o.stdout).unwrap().contains("lloa"));
    }
}
