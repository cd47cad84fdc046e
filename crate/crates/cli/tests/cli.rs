use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use koopman_lmi::edmd::{compute_gram, solve_pinv};
use koopman_lmi::lifting::build_snapshots;
use koopman_lmi::{io, Episode, KoopmanModel, LiftingSpec, SnapshotDataset, Vector};
use nalgebra::{dmatrix, DMatrix};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman-lmi")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, system: &str, seed: u64, noise: f64) -> PathBuf {
    let path = dir.join(name);
    let out = run(&[
        "generate",
        "--system",
        system,
        "--steps",
        "60",
        "--episodes",
        "4",
        "--seed",
        &seed.to_string(),
        "--noise-std",
        &noise.to_string(),
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn fit(config: &Path) -> serde_json::Value {
    let out = run(&["fit", "--config", path_str(config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn euler_linear2d() -> DMatrix<f64> {
    dmatrix![1.0, 0.1, 0.0; -0.2, 0.95, 0.1]
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn non_increasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol * w[0].abs().max(1.0))
}

#[test]
fn generate_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    for system in ["linear2d", "duffing", "vanderpol"] {
        let a = generate(dir.path(), "a.csv", system, 9, 0.01);
        let b = generate(dir.path(), "b.csv", system, 9, 0.01);
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{system}");
        let c = generate(dir.path(), "c.csv", system, 10, 0.01);
        assert_ne!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(c).unwrap());
    }
}

#[test]
fn generate_rejects_bad_arguments() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d.csv");
    let steps1 = run(&["generate", "--system", "linear2d", "--steps", "1", "--out", path_str(&out)]);
    assert_eq!(code(&steps1), 2);
    let unknown = run(&["generate", "--system", "lorenz", "--out", path_str(&out)]);
    assert_eq!(code(&unknown), 2);
    assert!(!out.exists());
}

#[test]
fn noise_free_linear_data_recovers_ground_truth() {
    let dir = TempDir::new().unwrap();
    let data_path = generate(dir.path(), "d.csv", "linear2d", 4, 0.0);
    let data: SnapshotDataset = io::load_dataset(&data_path).unwrap();
    let em = compute_gram(&build_snapshots(&data, &LiftingSpec::linear(2, 1)).unwrap()).unwrap();
    let (closed, _) = solve_pinv(&em).unwrap();
    assert!((closed.u() - euler_linear2d()).norm() < 1e-8);

    let cfg = write_config(dir.path(), "fit.json", serde_json::json!({"data_path": "d.csv", "output_path": "m.json"}));
    let report = fit(&cfg);
    assert_eq!(report["status"], "optimal");
    let model: KoopmanModel = io::load_model(&dir.path().join("m.json")).unwrap();
    assert!((model.u() - euler_linear2d()).norm() < 1e-8);
    assert!(dir.path().join("m.report.json").exists());
    assert!(!dir.path().join("m.trace.csv").exists());
}

#[test]
fn report_objective_matches_closed_form_residual() {
    let dir = TempDir::new().unwrap();
    let data_path = generate(dir.path(), "d.csv", "duffing", 2, 0.05);
    let cfg = write_config(
        dir.path(),
        "fit.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "m.json", "lifting": {"degree": 2}}),
    );
    let report = fit(&cfg);
    let data: SnapshotDataset = io::load_dataset(&data_path).unwrap();
    let spec = LiftingSpec::new(2, 1, 2, Default::default()).unwrap();
    let em = compute_gram(&build_snapshots(&data, &spec).unwrap()).unwrap();
    let (closed, _) = solve_pinv(&em).unwrap();
    let residual = em.cost(closed.u(), 0.0);
    let objective = report["objective"].as_f64().unwrap();
    assert!((objective - residual).abs() <= 1e-6 * residual, "{objective} vs {residual}");
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), "d.csv", "linear2d", 1, 0.0);
    let bad = [
        "{ not json",
        r#"{"data_path": "d.csv", "output_path": "m.json", "surprise": true}"#,
        r#"{"data_path": "d.csv", "output_path": "m.json", "regularizer": {"tikhonov_alpha": -1}}"#,
        r#"{"data_path": "d.csv", "output_path": "m.json", "regularizer": {"extra": {"kind": "hinf", "beta": 1}, "rho_bar": 0.9}}"#,
        r#"{"data_path": "missing.csv", "output_path": "m.json"}"#,
    ];
    for body in bad {
        let cfg = dir.path().join("bad.json");
        fs::write(&cfg, body).unwrap();
        let out = run(&["fit", "--config", path_str(&cfg)]);
        assert_eq!(code(&out), 2, "{body}");
        let mut names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, ["bad.json", "d.csv"], "{body}");
    }
}

fn unstable_dataset() -> SnapshotDataset {
    let a = dmatrix![1.04, 0.1; 0.0, 0.9];
    let b = dmatrix![0.0; 1.0];
    let episodes = (0..3)
        .map(|e| {
            let mut x = Vector::from_vec(vec![0.3 * (e as f64 + 1.0), -0.2]);
            let mut states = vec![x.clone()];
            let mut inputs = Vec::new();
            for k in 0..30 {
                let u = Vector::from_element(1, ((k * 7 + e * 3) as f64 * 0.61).sin());
                x = &a * &x + &b * &u;
                states.push(x.clone());
                inputs.push(u);
            }
            Episode::new(states, inputs)
        })
        .collect();
    SnapshotDataset::new(2, 1, episodes).unwrap()
}

#[test]
fn stability_bound_is_enforced() {
    let dir = TempDir::new().unwrap();
    io::save_dataset(&unstable_dataset(), &dir.path().join("d.csv")).unwrap();
    let plain =
        fit(&write_config(dir.path(), "p.json", serde_json::json!({"data_path": "d.csv", "output_path": "p.json.m"})));
    assert!(plain["spectral_radius"].as_f64().unwrap() > 1.0);
    assert!(plain["hinf_norm"].is_null());
    let cfg = write_config(
        dir.path(),
        "s.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "s.model.json", "regularizer": {"rho_bar": 0.95}}),
    );
    let report = fit(&cfg);
    assert!(report["spectral_radius"].as_f64().unwrap() <= 0.951, "{report}");
    assert!(report["hinf_norm"].as_f64().is_some());
    let trace = dir.path().join("s.model.trace.csv");
    assert_eq!(report["trace_path"].as_str().unwrap(), path_str(&trace));
    let lines = fs::read_to_string(trace).unwrap();
    assert!(lines.starts_with("iteration,objective,gamma,spectral_radius,status"));
    assert_eq!(lines.lines().count() - 1, report["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn hinf_fit_reports_certified_gamma() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), "d.csv", "linear2d", 6, 0.01);
    let cfg = write_config(
        dir.path(),
        "h.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "h.model.json",
                           "regularizer": {"extra": {"kind": "h_infinity", "beta": 1.0}}}),
    );
    let report = fit(&cfg);
    let gamma = report["gamma"].as_f64().unwrap();
    let sweep = report["hinf_norm"].as_f64().unwrap();
    assert!(report["spectral_radius"].as_f64().unwrap() < 1.0);
    assert!(gamma >= sweep * (1.0 - 1e-2), "{gamma} < {sweep}");
}

#[test]
fn identity_model_predicts_constant_trajectory() {
    let dir = TempDir::new().unwrap();
    let model = KoopmanModel::new(dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0], LiftingSpec::linear(2, 1)).unwrap();
    io::save_model(&model, &dir.path().join("id.json")).unwrap();
    let data = generate(dir.path(), "d.csv", "vanderpol", 3, 0.0);
    let pred = dir.path().join("p.csv");
    let out = run(&[
        "predict",
        "--model",
        path_str(&dir.path().join("id.json")),
        "--data",
        path_str(&data),
        "--horizon",
        "20",
        "--out",
        path_str(&pred),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Vector> = io::read_prediction(fs::File::open(&pred).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r == &rows[0]));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["compared_steps"], 20);
}

#[test]
fn predict_rejects_bad_requests() {
    let dir = TempDir::new().unwrap();
    let model = KoopmanModel::new(dmatrix![0.5, 1.0], LiftingSpec::linear(1, 1)).unwrap();
    io::save_model(&model, &dir.path().join("m.json")).unwrap();
    let data = generate(dir.path(), "d.csv", "linear2d", 3, 0.0);
    let out = dir.path().join("p.csv");
    let args = |horizon: &str| {
        run(&[
            "predict",
            "--model",
            path_str(&dir.path().join("m.json")),
            "--data",
            path_str(&data),
            "--horizon",
            horizon,
            "--out",
            path_str(&out),
        ])
    };
    assert_eq!(code(&args("0")), 2);
    // one-state model against two-state data
    assert_eq!(code(&args("5")), 2);
    assert!(!out.exists());
}

#[test]
fn prediction_modes_differ_only_for_nonlinear_lifting() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), "d.csv", "duffing", 8, 0.0);
    let mut outputs = Vec::new();
    for degree in [1, 2] {
        let model = format!("m{degree}.json");
        fit(&write_config(
            dir.path(),
            &format!("f{degree}.json"),
            serde_json::json!({"data_path": "d.csv", "output_path": model, "lifting": {"degree": degree}}),
        ));
        let mut files = Vec::new();
        for mode in ["relift", "lifted_rollout"] {
            let out = dir.path().join(format!("p{degree}_{mode}.csv"));
            let res = dir.path().join(format!("r{degree}_{mode}.csv"));
            let o = run(&[
                "predict",
                "--model",
                path_str(&dir.path().join(&model)),
                "--data",
                path_str(&data),
                "--horizon",
                "30",
                "--mode",
                mode,
                "--out",
                path_str(&out),
                "--residuals",
                path_str(&res),
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            assert_eq!(read_table(&res).len(), 4 * 59);
            files.push(fs::read(out).unwrap());
        }
        outputs.push(files);
    }
    assert_eq!(outputs[0][0], outputs[0][1]);
    assert_ne!(outputs[1][0], outputs[1][1]);
}

#[test]
fn alpha_sweep_shrinks_u() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), "d.csv", "vanderpol", 5, 0.02);
    let cfg = write_config(
        dir.path(),
        "f.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "m.json", "lifting": {"degree": 2}}),
    );
    let table = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--parameter",
        "alpha",
        "--grid",
        "0,1,10,100,1000",
        "--out",
        path_str(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let header = fs::read_to_string(&table).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "value,status,objective,fro_norm,max_singular_value,nuclear_norm,spectral_radius,gamma,error");
    let rows = read_table(&table);
    assert_eq!(column(&rows, 0), [0.0, 1.0, 10.0, 100.0, 1000.0]);
    assert!(rows.iter().all(|r| r[1] == "optimal"));
    assert!(non_increasing(&column(&rows, 3), 1e-6));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn beta_sweep_shrinks_spectral_norm() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), "d.csv", "duffing", 5, 0.02);
    let cfg = write_config(
        dir.path(),
        "f.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "m.json",
                           "regularizer": {"extra": {"kind": "two_norm", "beta": 1.0}}}),
    );
    let table = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--parameter",
        "beta",
        "--grid",
        "1,10,100,1000",
        "--out",
        path_str(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_table(&table);
    assert!(non_increasing(&column(&rows, 4), 1e-4));
    let gamma = column(&rows, 7);
    for (g, s) in gamma.iter().zip(column(&rows, 4)) {
        assert!((g - s).abs() <= 1e-12 * s.max(1.0));
    }
}

#[test]
fn sweep_rejects_bad_grids() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), "d.csv", "linear2d", 5, 0.0);
    let cfg = write_config(dir.path(), "f.json", serde_json::json!({"data_path": "d.csv", "output_path": "m.json"}));
    let table = dir.path().join("sweep.csv");
    for (param, grid) in [("alpha", ""), ("alpha", "1,1"), ("alpha", "2,1"), ("alpha", "-1,1"), ("beta", "1,2")] {
        let out = run(&[
            "sweep",
            "--config",
            path_str(&cfg),
            "--parameter",
            param,
            "--grid",
            grid,
            "--out",
            path_str(&table),
        ]);
        assert_eq!(code(&out), 2, "{param} {grid}");
        assert!(!table.exists());
    }
}

#[test]
fn sweep_records_failures_in_rows() {
    let dir = TempDir::new().unwrap();
    io::save_dataset(&unstable_dataset(), &dir.path().join("d.csv")).unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        serde_json::json!({"data_path": "d.csv", "output_path": "m.json",
                           "regularizer": {"extra": {"kind": "two_norm", "beta": 1.0}, "rho_bar": 0.95},
                           "solver": {"max_iterations": 3}}),
    );
    let table = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--parameter",
        "beta",
        "--grid",
        "0.5,5",
        "--out",
        path_str(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_table(&table);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] == "error" && !r[8].is_empty()));
}
