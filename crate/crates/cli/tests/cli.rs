use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn tlebm(dir: &Path, sub: &str, config: Option<&str>, extra: &[&str]) -> Run {
    let out = dir.join(format!("out-{sub}-{}", fs::read_dir(dir).unwrap().count()));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tlebm"));
    cmd.arg(sub).arg("--out").arg(&out).args(extra);
    if let Some(text) = config {
        let path = dir.join(format!("cfg-{}.toml", fs::read_dir(dir).unwrap().count()));
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    Run { out, output: cmd.output().unwrap() }
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn simulate_default_converges() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "simulate", Some("[initial]\nt_a = 250.0\nt_s = 290.0\n"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.json("verdict.json")["termination"]["verdict"], "converged");
    let (header, rows) = csv_rows(&r.text("trajectory.csv"));
    assert_eq!(header, ["t_seconds", "T_a", "T_s"]);
    assert!(rows.len() > 10);
    let m = r.json("manifest.json");
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["files"], serde_json::json!(["trajectory.csv", "verdict.json"]));
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_supercritical_blows_up_with_certificate() {
    let d = TempDir::new().unwrap();
    let cfg = "[model]\nepsilon_a = 3.0\n[initial]\nt_a = 100.0\nt_s = 100.0\n";
    let r = tlebm(d.path(), "simulate", Some(cfg), &[]);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    let v = r.json("verdict.json");
    assert_eq!(v["termination"]["verdict"], "blow_up");
    let c = &v["certificate"];
    assert!(c["observed_escape_time"].as_f64().unwrap() <= c["bound"].as_f64().unwrap());
    assert_eq!(r.json("manifest.json")["exit_code"], 3);
}

#[test]
fn malformed_config_names_key() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "equilibria", Some("[model]\nepsilon = 0.5\n"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("epsilon"), "{}", r.stderr());
    assert!(!r.out.exists(), "no output on config error");

    let r = tlebm(d.path(), "equilibria", Some("[integrator]\nrel_tol = -1.0\n"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("integrator.rel_tol"), "{}", r.stderr());

    let r = tlebm(d.path(), "equilibria", Some("[model\n"), &[]);
    assert_eq!(r.code(), 2);

    let r = tlebm(d.path(), "blowup", None, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("initial"), "{}", r.stderr());
}

#[test]
fn missing_config_file_is_io_error() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_tlebm"))
        .args(["equilibria", "--config"])
        .arg(d.path().join("nope.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn equilibria_three_states_in_order() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "equilibria", None, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let v = r.json("equilibria.json");
    let eqs = v["equilibria"].as_array().unwrap();
    assert_eq!(eqs.len(), 3);
    let verdicts: Vec<_> = eqs.iter().map(|e| e["stability"]["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["asymptotically_stable", "unstable", "asymptotically_stable"]);
    let ts: Vec<f64> = eqs.iter().map(|e| e["state"]["t_s"].as_f64().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn convexity_bracket() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "convexity", Some("[convexity]\ntol = 1e-4\n"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let b = &r.json("convexity.json")["epsilon_a0_bracket"];
    let (lo, hi) = (b[0].as_f64().unwrap(), b[1].as_f64().unwrap());
    assert!(lo > 1.99 && hi < 1.991 && hi - lo <= 1e-4);
    let (header, rows) = csv_rows(&r.text("convexity.csv"));
    assert_eq!(header, ["rho", "N", "N_star"]);
    assert_eq!(rows.len(), 1001);
}

#[test]
fn sweep_warm_branch_increasing() {
    let d = TempDir::new().unwrap();
    let cfg = "[sweep]\nparam = \"epsilon_a\"\nlo = 0.3\nhi = 1.9\nsteps = 100\n";
    let r = tlebm(d.path(), "sweep", Some(cfg), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (header, rows) = csv_rows(&r.text("sweep.csv"));
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let (c_branch, c_class, c_ts) = (col("branch"), col("class"), col("T_s"));
    let warm_id = rows.iter().find(|r| r[c_class] == "warm").unwrap()[c_branch].clone();
    let ts: Vec<f64> = rows.iter().filter(|r| r[c_branch] == warm_id).map(|r| r[c_ts].parse().unwrap()).collect();
    assert!(ts.len() > 50);
    assert!(ts.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn regime_error_exit_code() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "basins", Some("[model]\nq = 600.0\n[basins]\nnx = 8\nny = 8\n"), &[]);
    assert_eq!(r.code(), 5, "{}", r.stderr());
    let m = r.json("manifest.json");
    assert_eq!(m["exit_code"], 5);
    assert_eq!(m["files"], serde_json::json!([]));
    let r = tlebm(d.path(), "blowup", Some("[initial]\nt_a = 1.0\nt_s = 1.0\n"), &[]);
    assert_eq!(r.code(), 5);
}

#[test]
fn basins_small_grid() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "basins", Some("[basins]\nnx = 24\nny = 24\n"), &["--threads", "2"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let v = r.json("basins.json");
    assert_eq!(v["attractors"], serde_json::json!([0, 2]));
    let (_, rows) = csv_rows(&r.text("basins.csv"));
    assert_eq!(rows.len(), 24 * 24);
    assert_eq!(r.json("manifest.json")["threads"], 2);
}

#[test]
fn jump_and_hysteresis() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "jump", None, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let j = r.json("jump.json");
    assert!(j["new"]["state"]["t_s"].as_f64().unwrap() > j["old"]["state"]["t_s"].as_f64().unwrap());

    let r = tlebm(d.path(), "hysteresis", Some("[hysteresis]\nlo = 0.2\nhi = 1.2\nsteps = 30\n"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let h = r.json("hysteresis.json");
    assert_eq!(h["jumps"].as_array().unwrap().len(), 2);
}

#[test]
fn outputs_are_deterministic() {
    let d = TempDir::new().unwrap();
    let cfg = "[sweep]\nparam = \"lambda\"\nlo = 0.0\nhi = 50.0\nsteps = 20\n";
    let a = tlebm(d.path(), "sweep", Some(cfg), &[]);
    let b = tlebm(d.path(), "sweep", Some(cfg), &[]);
    for f in ["sweep.csv", "sweep_events.json"] {
        assert_eq!(fs::read(a.out.join(f)).unwrap(), fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (a.json("manifest.json"), b.json("manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["files"], mb["files"]);
    let leftovers =
        fs::read_dir(&a.out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"));
    assert_eq!(leftovers.count(), 0);
}

#[test]
fn csv_numbers_round_trip() {
    let d = TempDir::new().unwrap();
    let r = tlebm(d.path(), "equilibria", None, &[]);
    let (_, rows) = csv_rows(&r.text("equilibria.csv"));
    let json_ts = r.json("equilibria.json")["equilibria"][0]["state"]["t_s"].as_f64().unwrap();
    let csv_ts: f64 = rows[0][4].parse().unwrap();
    assert_eq!(csv_ts, json_ts);
}
