//! End-to-end runs of the `mfgid` binary on small configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn mfgid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgid")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, file: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(file);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn twin(name: &str, mode: &str) -> Value {
    json!({
        "name": name,
        "mode": mode,
        "problem": {
            "nu": 0.2,
            "t_final": 1.0,
            "domain": [-1.0, 1.0],
            "interaction": { "kind": "local", "cost": "identity" },
            "density": { "name": "gaussian", "mean": 0.0, "sigma": 0.2 },
            "potential": { "name": "cubic_mix" }
        },
        "grid": { "n_x": 48, "n_t": 24 }
    })
}

fn read_meta(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mfgid(&args)
}

#[test]
fn stationary_measurement_equals_horizon_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "name": "stationary",
        "mode": "eci",
        "problem": {
            "nu": 0.3,
            "t_final": 1.5,
            "interaction": { "kind": "local", "cost": "identity" },
            "density": { "name": "uniform" },
            "potential": { "name": "zero" }
        },
        "grid": { "n_x": 16, "n_t": 12 }
    });
    let path = write_config(tmp.path(), "stationary.json", &cfg);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = mfgid(&["generate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let phi0 = column(&a.join("phi0.csv"), "phi0");
    assert_eq!(phi0.len(), 16);
    assert!(phi0.iter().all(|v| (v - 1.5).abs() <= 1e-12), "{phi0:?}");

    let bytes = fs::read(a.join("phi0.csv")).unwrap();
    assert_eq!(bytes, fs::read(b.join("phi0.csv")).unwrap());
    assert!(!bytes.contains(&b'\r'));
    let meta = read_meta(&a);
    // Everything except wall-clock columns is bit-identical.
    let other = read_meta(&b);
    for f in ["phi0.csv", "rho_truth.csv", "phi_truth.csv"] {
        assert_eq!(meta["files_sha256"][f], other["files_sha256"][f], "{f}");
    }
    assert_eq!(meta["mode"], "generate-measurement");
    assert_eq!(meta["resolved"]["nu_num"], json!(1.0 / 16.0));
    assert!(meta["resolved"]["details"]["generation"]["residual"].as_f64().unwrap() <= 1e-8);
    for f in ["rho_truth.csv", "phi_truth.csv", "generation_residual.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn eci_twin_converges_with_exit_zero() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "eci.json", &twin("eci", "eci"));
    let out = tmp.path().join("out");
    let o = run(&path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let meas = column(&out.join("history.csv"), "meas_rel_err");
    assert!(*meas.last().unwrap() <= 1e-9);
    let meta = read_meta(&out);
    assert_eq!(meta["status"], "converged");
    assert!(meta["final"]["q_rel_err"].as_f64().unwrap() <= 1e-5);
    for f in ["q.csv", "fit.csv", "diagnostics.csv", "phi0.csv"] {
        assert!(meta["files_sha256"][f].is_string(), "{f}");
    }
}

#[test]
fn unstable_nonmonotone_run_exits_two() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = twin("unstable", "eci");
    cfg["problem"]["nu"] = json!(0.1);
    cfg["problem"]["interaction"]["cost"] = json!("negated");
    cfg["generation"] = json!({ "max_iter": 100 });
    cfg["solver"] = json!({ "forward": { "max_iter": 40 }, "outer_max": 10 });
    let path = write_config(tmp.path(), "unstable.json", &cfg);
    let out = tmp.path().join("out");
    let o = run(&path, &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = read_meta(&out);
    assert_eq!(meta["converged"], false);
    assert!(meta["final"]["meas_rel_err"].as_f64().unwrap() > 1e-1);

    cfg["solver"]["divergence_threshold"] = json!(1e-3);
    let path = write_config(tmp.path(), "diverging.json", &cfg);
    let out = tmp.path().join("diverged");
    assert_eq!(run(&path, &out, &[]).status.code(), Some(2));
    assert_eq!(read_meta(&out)["status"], "diverged");
}

#[test]
fn diagnostics_mode_writes_finite_indicators() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "diag.json", &twin("diag", "diagnostics"));
    let out = tmp.path().join("out");
    let o = run(&path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = out.join("diagnostics.csv");
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "x,q_minus_qhat,correction,error,pec");
    for col in ["q_minus_qhat", "correction", "error", "pec"] {
        let v = column(&csv, col);
        assert_eq!(v.len(), 48);
        assert!(v.iter().all(|x| x.is_finite()));
    }
    let (diff, corr, err) = (column(&csv, "q_minus_qhat"), column(&csv, "correction"), column(&csv, "error"));
    for i in 0..48 {
        assert!((corr[i] - diff[i] - err[i]).abs() <= 1e-12);
    }
}

#[test]
fn validation_lists_every_problem() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = twin("bad", "linpara");
    cfg["problem"]["nu"] = json!(-1.0);
    cfg["problem"]["hamiltonian"] = json!("cubic");
    cfg["grid"]["n_x"] = json!(2);
    cfg["solver"] = json!({ "outer_tol": 0.0 });
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = run(&path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["problem.nu", "hamiltonian", "grid.n_x", "linpara", "outer_tol"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }

    let mut cfg = twin("hier", "heci");
    cfg["grid"] = json!({ "n_x": 50, "n_t": 24 });
    cfg["solver"] = json!({ "heci_levels": 3 });
    let path = write_config(tmp.path(), "hier.json", &cfg);
    let o = run(&path, &tmp.path().join("hier"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divisible by 4"));

    let path = tmp.path().join("typo.json");
    fs::write(&path, r#"{"name": "t", "mode": "eci", "grid": {"n_x": 8, "n_t": 4}, "problm": {}}"#).unwrap();
    assert_eq!(run(&path, &tmp.path().join("typo"), &[]).status.code(), Some(1));
}

#[test]
fn mode_override_and_measurement_file() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "base.json", &twin("base", "eci"));
    let gen = tmp.path().join("gen");
    let o = run(&path, &gen, &["--mode", "generate-measurement"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(gen.join("phi_truth.csv").exists());

    let fwd = tmp.path().join("fwd");
    assert_eq!(run(&path, &fwd, &["--mode", "forward"]).status.code(), Some(0));
    assert!(fwd.join("rho.csv").exists() && fwd.join("forward_residual.csv").exists());
    let header = fs::read_to_string(fwd.join("forward_residual.csv")).unwrap();
    assert!(header.starts_with("iter,residual,hjb_fp_solves,elapsed_seconds\n"));

    // A relative measurement path is resolved against the config file.
    let mut cfg = twin("from_file", "bri");
    cfg["measurement"] = json!("gen/phi0.csv");
    let path = write_config(tmp.path(), "from_file.json", &cfg);
    let out = tmp.path().join("inv");
    let o = run(&path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read_meta(&out)["final"]["q_rel_err"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn random_initial_potential_follows_the_seed() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = twin("random", "eci");
    cfg["initial_potential"] = json!({ "kind": "random" });
    cfg["solver"] = json!({ "outer_max": 1 });
    let mut q0 = |seed: u64, dir: &str| {
        cfg["seed"] = json!(seed);
        let path = write_config(tmp.path(), &format!("{dir}.json"), &cfg);
        let out = tmp.path().join(dir);
        assert_eq!(run(&path, &out, &[]).status.code(), Some(2));
        (column(&out.join("q.csv"), "q0"), column(&out.join("q.csv"), "q_true"), read_meta(&out))
    };
    let (a, truth, meta) = q0(7, "a");
    let (b, _, _) = q0(7, "b");
    let (c, _, _) = q0(8, "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(a.iter().all(|&v| lo <= v && v <= hi));
    assert_eq!(meta["resolved"]["details"]["initial_potential_bounds"], json!([lo, hi]));
}

#[test]
fn batch_summarizes_and_isolates_failures() {
    let tmp = TempDir::new().unwrap();
    let configs = tmp.path().join("configs");
    fs::create_dir(&configs).unwrap();
    write_config(&configs, "a_good.json", &twin("good", "eci"));
    let mut capped = twin("capped", "eci");
    capped["solver"] = json!({ "outer_max": 2 });
    write_config(&configs, "b_capped.json", &capped);
    fs::write(configs.join("c_broken.json"), "{ not json").unwrap();
    let pattern = configs.join("*.json");

    let summaries: Vec<String> = ["one", "two"]
        .iter()
        .map(|tag| {
            let out = tmp.path().join(tag);
            let o = mfgid(&["batch", "--configs", pattern.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(1));
            assert!(out.join("good").join("meta.json").exists());
            fs::read_to_string(out.join("summary.csv")).unwrap()
        })
        .collect();
    let strip = |s: &str| -> Vec<String> {
        s.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
    };
    assert_eq!(strip(&summaries[0]), strip(&summaries[1]));
    let lines: Vec<&str> = summaries[0].lines().collect();
    assert_eq!(lines[0], "name,mode,converged,outer_iters,hjb_fp_solves,meas_rel_err,q_rel_err,seconds");
    assert!(lines[1].starts_with("good,eci,true,"));
    assert!(lines[2].starts_with("capped,eci,false,2,"));
    assert!(lines[3].starts_with("c_broken,error,false,"));

    let empty = tmp.path().join("empty");
    let o = mfgid(&[
        "batch",
        "--configs",
        tmp.path().join("nothing/*.json").to_str().unwrap(),
        "--out",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(empty.join("summary.csv")).unwrap(),
        "name,mode,converged,outer_iters,hjb_fp_solves,meas_rel_err,q_rel_err,seconds\n"
    );
}

#[test]
fn preset_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/**/*.json");
    let paths = mfgid_cli::expand(root.to_str().unwrap()).unwrap();
    assert_eq!(paths.len(), 20);
    for p in paths {
        let cfg = mfgid_cli::ExperimentConfig::from_file(&p).unwrap();
        assert!(cfg.violations().is_empty(), "{}: {:?}", p.display(), cfg.violations());
    }
}
