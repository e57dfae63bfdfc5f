use std::path::Path;
use std::process::{Command, Output};

fn czsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_czsim"))
        .args(args)
        .env_remove("CZSIM_WORKERS")
        .output()
        .expect("run czsim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header comments stripped; first line is the column row.
fn records(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let idx = rows[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[idx].clone()).collect()
}

fn value(rows: &[Vec<String>], name: &str) -> f64 {
    column(rows, name)[0].parse().unwrap()
}

#[test]
fn zz_reports_signed_and_absolute() {
    let o = czsim(&["zz", "--device", "paper-tableI"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# czsim "));
    assert!(text.contains("# freq_ghz = 6.5"));
    let rows = records(&text);
    assert!((value(&rows, "abs_zeta_exact_khz") - 12.57).abs() < 0.6);
    assert!((value(&rows, "zeta_pert4_khz") + 12.57).abs() < 0.01);
    assert!(value(&rows, "zeta_exact_khz") < 0.0);
    let summary = String::from_utf8(o.stderr).unwrap();
    assert!(summary.contains("|zeta|/2pi = 12.57"), "{summary}");
}

#[test]
fn zz_is_zero_without_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uncoupled.toml");
    std::fs::write(
        &path,
        "g1c_ghz = 0.0\ng2c_ghz = 0.0\n\
         q1 = { freq_ghz = 6.5, anh_ghz = -0.3 }\n\
         coupler = { freq_ghz = 5.5, anh_ghz = -0.3 }\n\
         q2 = { freq_ghz = 4.5, anh_ghz = -0.3 }\n",
    )
    .unwrap();
    let o = czsim(&["zz", "--device", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&stdout(&o));
    assert_eq!(value(&rows, "zeta_exact_khz"), 0.0);
    assert_eq!(value(&rows, "zeta_pert4_khz"), 0.0);
}

#[test]
fn gate_report_record() {
    let o = czsim(&["gate-report", "--device", "paper-tableI", "--pulse", "tableII-a", "--dt", "0.01"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert!((value(&rows, "fidelity") - 0.9996).abs() < 5e-4);
    assert!(value(&rows, "leakage") < 1.5e-3);
    let text = String::from_utf8(o.stderr).unwrap();
    assert!(text.contains("fidelity"));
    assert!(text.contains("cond. phase"));
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_czsim"))
            .args([
                "sweep2d",
                "--pulse",
                "tableII-a",
                "--dt",
                "0.05",
                "--tg",
                "40:60:2",
                "--detuning",
                "-0.02:-0.01:3",
                "--out",
                out.to_str().unwrap(),
            ])
            .env("CZSIM_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# tg_ns = \"40:60:2\""));
    let rows = records(&text);
    assert_eq!(rows.len(), 1 + 6);
    assert!(column(&rows, "status").iter().all(|s| s == "ok"));
    assert!(!text.contains("NaN"));
}

#[test]
fn failed_cells_are_flagged_not_fatal() {
    let o = czsim(&["sweep1d", "--pulse", "tableII-a", "--dt", "0.05", "--tg", "0.2", "--detuning", "-0.015"]);
    assert!(o.status.success());
    let rows = records(&stdout(&o));
    assert_eq!(column(&rows, "status"), vec!["failed:invalid-argument".to_string()]);
    assert_eq!(column(&rows, "leakage"), vec![String::new()]);
}

#[test]
fn config_file_drives_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "device = \"paper-tableI\"\nmode = \"fixed\"\n\n[pulse]\namp0_ghz = 0.0\nlambda1 = 0.3\nlambda2 = 0.1\nt_f_ns = 50.0\n\n\
         [evolution]\ndt_ns = 0.05\n\n[grid]\ndetuning_ghz = \"-0.02:0.0:3\"\n",
    )
    .unwrap();
    let o = czsim(&["sweep1d", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&stdout(&o));
    let leak: Vec<f64> = column(&rows, "leakage").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(leak.len(), 3);
    assert!(leak.iter().all(|&l| l <= 1e-8));
}

#[test]
fn unknown_config_key_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "device = \"paper-tableI\"\n\n[evolution]\ndt_ns = 0.01\nstep = 2\n").unwrap();
    let o = czsim(&["zz", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("step"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn errors_exit_nonzero() {
    for args in [
        vec!["zz", "--device", "no-such-device"],
        vec!["gate-report"],
        vec!["sweep1d", "--pulse", "tableII-a", "--detuning", "1:2"],
        vec!["zz-sweep"],
        vec!["dynamics", "--pulse", "tableII-a", "--initial", "9x9"],
    ] {
        let o = czsim(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_czsim"))
        .arg("zz")
        .env("CZSIM_WORKERS", "none")
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn device_given_twice_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "device = \"paper-tableIII\"\n").unwrap();
    let o = czsim(&["zz", "--device", "paper-tableI", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn zz_sweep_finds_zero_crossing() {
    let o = czsim(&["zz-sweep", "--omega1", "6.45", "--omega2", "4.2:4.8:13"]);
    assert!(o.status.success());
    let rows = records(&stdout(&o));
    let z: Vec<f64> = column(&rows, "zeta_exact_khz").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(z.len(), 13);
    assert!(z.windows(2).any(|w| w[0] * w[1] < 0.0));
}

#[test]
fn chi_sweep_grows_with_coupling() {
    let o = czsim(&["chi-sweep", "--g", "0.02:0.08:4"]);
    assert!(o.status.success());
    let rows = records(&stdout(&o));
    let chi: Vec<f64> = column(&rows, "chi11_mhz").iter().map(|s| s.parse().unwrap()).collect();
    assert!(chi.windows(2).all(|w| w[1].abs() > w[0].abs()));
}

#[test]
fn dynamics_and_optimize_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = czsim(&[
        "dynamics",
        "--pulse",
        "tableII-a",
        "--dt",
        "0.05",
        "--initial",
        "|101>",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = records(&text);
    assert!(rows[0].contains(&"p101".to_string()));
    assert!(rows[0].contains(&"p111".to_string()));
    assert_eq!(column(&rows, "t_ns").last().unwrap(), "250");

    let o = czsim(&[
        "optimize",
        "--dt",
        "0.05",
        "--tg",
        "60",
        "--detuning",
        "-0.015",
        "--max-evals",
        "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = records(&stdout(&o));
    assert_eq!(column(&rows, "evaluations"), vec!["10".to_string()]);
    assert_eq!(column(&rows, "converged"), vec!["false".to_string()]);
    assert!(Path::new(env!("CARGO_BIN_EXE_czsim")).exists());
}
