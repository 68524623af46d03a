//! End-to-end checks of the installed binary: the simulate/run/compare/ess
//! pipeline, the documented exit codes, and the artifact formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_detfree")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary spawns")
}

fn assert_success(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn random_precision_pipeline_runs_both_samplers_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        r#"{
          "model": { "family": "random_precision", "n": 60, "seed": 11,
                     "tau": 1.0, "data_file": "y.csv",
                     "true_params": { "ln_gamma": -1.0 } },
          "mcmc": { "iterations": 500, "init": "truth", "seed": 5 },
          "output": { "directory": "out" }
        }"#,
    );
    let config = config.to_str().unwrap();

    let out = run_cli(&["simulate", "--config", config]);
    let stdout = assert_success(&out);
    assert!(stdout.contains("sha256="), "simulate prints digests: {stdout}");

    for sampler in ["detfree", "cholesky"] {
        let out = run_cli(&["run", "--config", config, "--sampler", sampler]);
        let stdout = assert_success(&out);
        assert!(stdout.contains("parameter"), "summary table shown: {stdout}");
        assert!(stdout.contains("ln_gamma"));
        for artifact in [
            format!("trace_{sampler}.csv"),
            format!("trace_{sampler}.meta.json"),
            format!("summary_{sampler}.csv"),
        ] {
            assert!(
                dir.path().join("out").join(&artifact).exists(),
                "{artifact} missing"
            );
        }
    }

    let trace_a = dir.path().join("out/trace_detfree.csv");
    let trace_b = dir.path().join("out/trace_cholesky.csv");
    let table = dir.path().join("out/compare.csv");
    let out = run_cli(&[
        "compare",
        trace_a.to_str().unwrap(),
        trace_b.to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "parameter,mean_a,sd_a,ess_a,ess_per_s_a,mean_b,sd_b,ess_b,ess_per_s_b,z_mean"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("ln_gamma,"));
    let z: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(z.is_finite() && z >= 0.0, "z_mean = {z}");

    let out = run_cli(&["ess", trace_a.to_str().unwrap()]);
    let stdout = assert_success(&out);
    assert!(stdout.contains("ln_gamma"));
}

#[test]
fn spatial_families_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let gmrf = write_config(
        dir.path(),
        "gmrf.json",
        r#"{
          "model": { "family": "gmrf_whitening", "nx": 8, "ny": 6, "n_obs": 50,
                     "seed": 3, "data_file": "gmrf_obs.csv",
                     "true_params": { "ln_tau": -2.0, "ln_gamma": -1.0 } },
          "mcmc": { "iterations": 200, "init": "truth", "seed": 1 },
          "output": { "directory": "gmrf_out" }
        }"#,
    );
    let wendland = write_config(
        dir.path(),
        "wendland.json",
        r#"{
          "model": { "family": "wendland_gp", "n": 80, "seed": 4,
                     "data_file": "gp_obs.csv", "fit_mean": true,
                     "true_params": { "ln_tau": 0.7, "ln_s2": -1.9, "ln_l": -1.2 } },
          "mcmc": { "iterations": 150, "init": "truth", "seed": 2 },
          "output": { "directory": "gp_out" }
        }"#,
    );

    for (config, out_dir, params) in [
        (&gmrf, "gmrf_out", vec!["ln_tau", "ln_gamma"]),
        (&wendland, "gp_out", vec!["ln_tau", "ln_s2", "ln_l"]),
    ] {
        let config = config.to_str().unwrap();
        assert_success(&run_cli(&["simulate", "--config", config]));
        assert_success(&run_cli(&["run", "--config", config, "--sampler", "detfree"]));
        let summary = std::fs::read_to_string(
            dir.path().join(out_dir).join("summary_detfree.csv"),
        )
        .unwrap();
        for p in params {
            assert!(summary.contains(p), "{p} missing from summary:\n{summary}");
        }
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        r#"{
          "model": { "family": "random_precision", "n": 10, "seed": 1,
                     "tau": 1.0, "data_file": "y.csv", "thinning": 4 },
          "mcmc": { "iterations": 10 },
          "output": { "directory": "out" }
        }"#,
    );
    let out = run_cli(&["run", "--config", config.to_str().unwrap(), "--sampler", "detfree"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("thinning"), "stderr: {stderr}");

    // clap usage errors share the config exit code
    let out = run_cli(&["run", "--config", config.to_str().unwrap(), "--sampler", "exact"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        r#"{
          "model": { "family": "random_precision", "n": 10, "seed": 1,
                     "tau": 1.0, "data_file": "never_written.csv" },
          "mcmc": { "iterations": 10 },
          "output": { "directory": "out" }
        }"#,
    );
    let out = run_cli(&["run", "--config", config.to_str().unwrap(), "--sampler", "detfree"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn numerical_failures_exit_3_and_leave_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        r#"{
          "model": { "family": "random_precision", "n": 20001, "seed": 1,
                     "tau": 1.0, "data_file": "y.csv",
                     "true_params": { "ln_gamma": -1.0 } },
          "mcmc": { "iterations": 3, "init": "truth" },
          "output": { "directory": "out" }
        }"#,
    );
    // hand-written flat observations: simulate would also densify here
    let mut y = String::from("index,value\n");
    for i in 0..20001 {
        y.push_str(&format!("{i},0.0\n"));
    }
    std::fs::write(dir.path().join("y.csv"), y).unwrap();

    let out = run_cli(&["run", "--config", config.to_str().unwrap(), "--sampler", "cholesky"]);
    assert_eq!(out.status.code(), Some(3));
    let meta = std::fs::read_to_string(dir.path().join("out/trace_cholesky.meta.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(doc["complete"], false);
}

#[test]
fn seed_flag_controls_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        r#"{
          "model": { "family": "random_precision", "n": 30, "seed": 6,
                     "tau": 1.0, "data_file": "y.csv",
                     "true_params": { "ln_gamma": -0.5 } },
          "mcmc": { "iterations": 120, "init": "truth" },
          "output": { "directory": "out" }
        }"#,
    );
    let config = config.to_str().unwrap();
    assert_success(&run_cli(&["simulate", "--config", config]));

    let strip_seconds = |path: &Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out_dir, seed) in [(&out_a, "17"), (&out_b, "17"), (&out_c, "18")] {
        assert_success(&run_cli(&[
            "run", "--config", config, "--sampler", "detfree",
            "--seed", seed, "--out", out_dir.to_str().unwrap(),
        ]));
    }
    let a = strip_seconds(&out_a.join("trace_detfree.csv"));
    let b = strip_seconds(&out_b.join("trace_detfree.csv"));
    let c = strip_seconds(&out_c.join("trace_detfree.csv"));
    assert_eq!(a, b, "same seed, same statistical columns");
    assert_ne!(a, c, "different seed, different chain");
}
