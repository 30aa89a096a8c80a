use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5

[world]
background = [20.0, 0.0, -45.0]
dipoles = [
  { position = [1.0, 0.5, -1.5], moment = [800.0, 2000.0, -1500.0] },
  { position = [3.5, -0.8, -1.4], moment = [-1800.0, 900.0, 2200.0] },
  { position = [5.5, 1.0, -1.7], moment = [1200.0, -2400.0, -800.0] },
]

[trajectory]
waypoints = [[6.0, 0.0], [6.0, 1.0], [0.0, 1.0]]
speeds = [0.8]

[sensors]
array_baseline = 0.2

[estimator]
array_baseline = 0.2

[loop_closure]
enabled = false
"#;

fn magnav(args: &[&str], config_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magnav"))
        .args(args)
        .env("MAGNAV_CONFIG_DIR", config_dir)
        .output()
        .expect("binary runs")
}

fn setup(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, format!("{SMALL}{extra}")).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, name: &str, extra_args: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["simulate", "-c", "small.toml", "-o", s(&out)];
    args.extend_from_slice(extra_args);
    let o = magnav(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn simulate_is_deterministic() {
    let (dir, _) = setup("");
    let a = simulate(&dir, "a", &[]);
    let b = simulate(&dir, "b", &[]);
    for f in ["gyro.csv", "mag.csv", "truth.csv", "wheel.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = simulate(&dir, "c", &["--seed", "6"]);
    assert_ne!(fs::read(a.join("gyro.csv")).unwrap(), fs::read(c.join("gyro.csv")).unwrap());
}

#[test]
fn estimate_then_metrics() {
    let (dir, _) = setup("");
    let data = simulate(&dir, "data", &["--noise-free"]);
    let est = dir.path().join("est");
    let o = magnav(&["estimate", "-c", "small.toml", "-d", s(&data), "-o", s(&est)], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["estimate.csv", "report.toml", "loops.csv"] {
        assert!(est.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(est.join("estimate.csv")).unwrap();
    assert!(header.starts_with("t,x,y,theta,p_tt,p_tx,p_ty,p_xx,p_xy,p_yy\n"));

    let nees = dir.path().join("nees.csv");
    let o = magnav(
        &[
            "metrics",
            "-e",
            s(&est.join("estimate.csv")),
            "-t",
            s(&data.join("truth.csv")),
            "--nees",
            s(&nees),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: toml::Table = toml::from_str(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert!(report["position_rmse"].as_float().unwrap() < 0.5);
    assert!(fs::read_to_string(nees).unwrap().starts_with("t,nees,lower,upper\n"));
}

#[test]
fn truth_scored_against_itself_is_exact() {
    let (dir, _) = setup("");
    let data = simulate(&dir, "data", &[]);
    let truth = data.join("truth.csv");
    let as_estimate = dir.path().join("truth_est.csv");
    fs::copy(&truth, &as_estimate).unwrap();
    let o = magnav(&["metrics", "-e", s(&as_estimate), "-t", s(&truth)], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: toml::Table = toml::from_str(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(report["position_rmse"].as_float(), Some(0.0));
    assert_eq!(report["attitude_rmse"].as_float(), Some(0.0));
}

#[test]
fn ablate_writes_four_rows() {
    let (dir, _) = setup("");
    let data = simulate(&dir, "data", &[]);
    let table = dir.path().join("ablation.csv");
    let o = magnav(&["ablate", "-c", "small.toml", "-d", s(&data), "-o", s(&table)], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "variant,position_rmse,attitude_rmse,position_change_pct,attitude_change_pct");
    let variants: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["baseline", "drop_fd", "drop_slip", "drop_cd"]);
}

#[test]
fn detect_loops_writes_matrices() {
    let (dir, _) = setup("");
    let data = simulate(&dir, "data", &[]);
    let out = dir.path().join("loops");
    let o = magnav(&["detect-loops", "-c", "small.toml", "-d", s(&data), "-o", s(&out)], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "distance_i1.csv",
        "distance_i2.csv",
        "distance_i3.csv",
        "distance_combined.csv",
        "distance_combined_log.csv",
        "loops.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_3_with_line() {
    let (dir, _) = setup("");
    fs::write(dir.path().join("bad.toml"), "seed = 1\n[sensors]\ngyro_rate = \"fast\"\n").unwrap();
    let o = magnav(&["simulate", "-c", "bad.toml", "-o", s(&dir.path().join("x"))], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = magnav(&["simulate", "-c", "missing.toml", "-o", s(&dir.path().join("x"))], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn data_errors_exit_4() {
    let (dir, _) = setup("");
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = magnav(
        &["estimate", "-c", "small.toml", "-d", s(&empty), "-o", s(&dir.path().join("e"))],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn solver_errors_exit_5() {
    // Without any magnetic or slip term nothing pins the positions.
    let (dir, _) = setup("");
    let data = simulate(&dir, "data", &[]);
    let o = magnav(
        &[
            "estimate",
            "-c",
            "small.toml",
            "-d",
            s(&data),
            "-o",
            s(&dir.path().join("e")),
            "--drop-fd",
            "--drop-cd",
            "--drop-slip",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn loop_flags_conflict() {
    let (dir, _) = setup("");
    let o = magnav(
        &["estimate", "-d", "x", "-o", "y", "--no-loops", "--with-loops"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}
