//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line; any failure makes the process exit non-zero.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use koopman_lmi::analysis;
use koopman_lmi::bilinear::{self, AlternationConfig};
use koopman_lmi::edmd::{compute_gram, factor_l, FactorRoute};
use koopman_lmi::sdp::{self, SdpStatus};
use koopman_lmi::{
    io, linalg, EdmdMatrices, KoopmanModel, LiftedMatrices, LiftingSpec, RegularizedGram, SnapshotDataset,
};
use koopman_lmi::{SolverSettings, Vector};
use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// `U_true Ψ + noise` with Gaussian `Ψ`, which is full row rank almost surely.
fn instance(pt: usize, pu: usize, q: usize, noise: f64, rng: &mut ChaCha8Rng) -> LiftedMatrices {
    let psi = randn(pt + pu, q, rng);
    let u = randn(pt, pt + pu, rng) * 0.4;
    let theta = &u * &psi + randn(pt, q, rng) * noise;
    LiftedMatrices { psi, theta_plus: theta, lifting: LiftingSpec::linear(pt, pu) }
}

/// `G (ΨΨᵀ + αI)†`, computed straight from the snapshots.
fn closed_form(lm: &LiftedMatrices, alpha: f64) -> DMatrix<f64> {
    let q = lm.q() as f64;
    let p = lm.p();
    let g = &lm.theta_plus * lm.psi.transpose() / q;
    let h = (&lm.psi * lm.psi.transpose() + DMatrix::identity(p, p) * alpha) / q;
    g * h.pseudo_inverse(1e-14).unwrap()
}

fn eig(em: &EdmdMatrices, alpha: f64) -> RegularizedGram {
    factor_l(em, alpha, FactorRoute::Eigendecomposition, None).unwrap()
}

fn solve(prob: &koopman_lmi::SdpProblem) -> Result<koopman_lmi::SdpSolution, String> {
    let sol = sdp::solve(prob, &SolverSettings::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SdpStatus::Optimal, || format!("solver status {}", sol.status))?;
    Ok(sol)
}

fn scalar_gram(psi: f64, theta: f64) -> EdmdMatrices {
    let lm = LiftedMatrices {
        psi: DMatrix::from_element(1, 1, psi),
        theta_plus: DMatrix::from_element(1, 1, theta),
        lifting: LiftingSpec::linear(1, 0),
    };
    compute_gram(&lm).unwrap()
}

fn non_increasing(v: &[f64], rel_tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + rel_tol * w[0].abs().max(1.0))
}

fn edmd_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let pt = rng.random_range(1..=5);
        let pu = rng.random_range(0..=3);
        let q = rng.random_range(60..=400);
        let lm = instance(pt, pu, q, 0.1, &mut rng);
        let em = compute_gram(&lm).unwrap();
        let sol = solve(&sdp::formulate_base(&eig(&em, 0.0), &em).unwrap())?;
        let err = rel(&sol.matrix("U").unwrap(), &closed_form(&lm, 0.0));
        ensure(err < 1e-4, || format!("instance {i}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("20 instances, worst relative error {worst:.1e}"))
}

fn tikhonov_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let lm = instance(4, 2, 150, 0.1, &mut rng);
    let em = compute_gram(&lm).unwrap();
    let mut worst = 0.0f64;
    for alpha in [1e-3, 1e-1, 1.0, 10.0] {
        let sol = solve(&sdp::formulate_base(&eig(&em, alpha), &em).unwrap())?;
        let err = rel(&sol.matrix("U").unwrap(), &closed_form(&lm, alpha));
        ensure(err < 1e-4, || format!("alpha {alpha}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("4 values of alpha, worst relative error {worst:.1e}"))
}

fn formulation_cross_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for (i, alpha) in [0.0, 0.01, 0.5, 5.0].into_iter().enumerate() {
        let lm = instance(3, 2, 120 + 40 * i, 0.2, &mut rng);
        let em = compute_gram(&lm).unwrap();
        let rg = eig(&em, alpha);
        ensure(linalg::min_eigenvalue(&rg.h_alpha) > 0.0, || "H_alpha not positive definite".into())?;
        let free = solve(&sdp::formulate_base(&rg, &em).unwrap())?.matrix("U").unwrap();
        let inv = solve(&sdp::formulate_base_inverted(&rg, &em).unwrap())?.matrix("U").unwrap();
        let err = rel(&inv, &free);
        ensure(err < 1e-4, || format!("alpha {alpha}: relative difference {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("4 instances, worst relative difference {worst:.1e}"))
}

fn factorization_cross_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for alpha in [0.0, 1e-3, 0.1, 1.0, 10.0] {
        let lm = instance(5, 3, 300, 0.1, &mut rng);
        let em = compute_gram(&lm).unwrap();
        let a = factor_l(&em, alpha, FactorRoute::Eigendecomposition, None).unwrap();
        let b = factor_l(&em, alpha, FactorRoute::SvdOfPsi, Some(&lm)).unwrap();
        let diff = (&a.l_alpha * a.l_alpha.transpose() - &b.l_alpha * b.l_alpha.transpose()).norm();
        ensure(diff < 1e-8, || format!("alpha {alpha}: difference {diff:e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("5 instances, worst difference {worst:.1e}"))
}

fn soft_threshold(beta: f64) -> f64 {
    (1.0 - beta / 2.0).max(0.0)
}

fn two_norm() -> Check {
    let em = scalar_gram(1.0, 1.0);
    let rg = eig(&em, 0.0);
    for beta in [0.5, 1.0, 1.5, 3.0] {
        let sol = solve(&sdp::add_two_norm(sdp::formulate_base(&rg, &em).unwrap(), beta, 1).unwrap())?;
        let u = sol.matrix("U").unwrap()[(0, 0)];
        ensure((u - soft_threshold(beta)).abs() < 1e-4, || format!("scalar beta {beta}: u = {u}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let lm = instance(3, 2, 200, 0.1, &mut rng);
    let em = compute_gram(&lm).unwrap();
    let rg = eig(&em, 0.0);
    let mut sigmas = Vec::new();
    for beta in [1.0, 10.0, 50.0, 200.0] {
        let sol = solve(&sdp::add_two_norm(sdp::formulate_base(&rg, &em).unwrap(), beta, em.q).unwrap())?;
        let sigma = linalg::max_singular_value(&sol.matrix("U").unwrap());
        let gamma = sol.scalar("gamma").unwrap();
        ensure((gamma - sigma).abs() < 1e-4, || format!("beta {beta}: gamma {gamma} vs sigma {sigma}"))?;
        sigmas.push(sigma);
    }
    ensure(non_increasing(&sigmas, 1e-6), || format!("max singular values {sigmas:?}"))?;
    Ok(format!("scalar oracle at 4 betas; sigma_max over beta grid {sigmas:.4?}"))
}

fn nuclear() -> Check {
    let em = scalar_gram(1.0, 1.0);
    let rg = eig(&em, 0.0);
    for beta in [0.5, 1.0, 1.5, 3.0] {
        let sol = solve(&sdp::add_nuclear(sdp::formulate_base(&rg, &em).unwrap(), beta, 1).unwrap())?;
        let u = sol.matrix("U").unwrap()[(0, 0)];
        ensure((u - soft_threshold(beta)).abs() < 1e-4, || format!("scalar beta {beta}: u = {u}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let q = 200;
    let psi = randn(3, q, &mut rng);
    let u_true = randn(3, 1, &mut rng) * randn(1, 3, &mut rng) * 0.4;
    let theta = &u_true * &psi + randn(3, q, &mut rng) * 0.1;
    let em = compute_gram(&LiftedMatrices { psi, theta_plus: theta, lifting: LiftingSpec::linear(3, 0) }).unwrap();
    let rg = eig(&em, 0.0);
    let mut norms = Vec::new();
    for beta in [1.0, 10.0, 50.0, 200.0] {
        let sol = solve(&sdp::add_nuclear(sdp::formulate_base(&rg, &em).unwrap(), beta, q).unwrap())?;
        let nn = linalg::nuclear_norm(&sol.matrix("U").unwrap());
        let gamma = sol.scalar("gamma").unwrap();
        ensure((gamma - nn).abs() < 1e-4, || format!("beta {beta}: gamma {gamma} vs nuclear norm {nn}"))?;
        norms.push(nn);
    }
    ensure(non_increasing(&norms, 1e-6), || format!("nuclear norms {norms:?}"))?;
    Ok(format!("scalar oracle at 4 betas; nuclear norm over beta grid {norms:.4?}"))
}

fn geometric(ratio: f64, q: usize) -> EdmdMatrices {
    let xs: Vec<f64> = (0..=q).map(|k| 0.8 * ratio.powi(k as i32)).collect();
    compute_gram(&LiftedMatrices {
        psi: DMatrix::from_row_slice(1, q, &xs[..q]),
        theta_plus: DMatrix::from_row_slice(1, q, &xs[1..]),
        lifting: LiftingSpec::linear(1, 0),
    })
    .unwrap()
}

fn stable_with_input(seed: u64, noise: f64) -> LiftedMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (dmatrix![0.6, 0.2; -0.1, 0.5], dmatrix![1.0; 0.5]);
    let q = 200;
    let x = randn(2, q, &mut rng);
    let u = randn(1, q, &mut rng);
    let theta = &a * &x + &b * &u + randn(2, q, &mut rng) * noise;
    let mut psi = DMatrix::zeros(3, q);
    psi.rows_mut(0, 2).copy_from(&x);
    psi.rows_mut(2, 1).copy_from(&u);
    LiftedMatrices { psi, theta_plus: theta, lifting: LiftingSpec::linear(2, 1) }
}

fn check_trace(
    trace: &bilinear::AlternationTrace<f64>,
    cfg: &AlternationConfig<f64>,
    what: &str,
) -> Result<(), String> {
    let band = 10.0 * cfg.solver.tolerance;
    let obj = trace.objectives();
    ensure(obj.windows(2).all(|w| w[1] <= w[0] + band), || format!("{what}: objectives not monotone {obj:?}"))?;
    ensure(trace.len() <= 40, || format!("{what}: {} iterations", trace.len()))?;
    ensure(trace.termination == bilinear::Termination::Converged, || {
        format!("{what}: terminated with {}", trace.termination.as_str())
    })
}

fn stability() -> Check {
    let cfg = AlternationConfig::default();
    let em = geometric(1.2, 10);
    let (model, trace) = bilinear::solve_stability(&em, &eig(&em, 0.0), 0.99, &cfg).map_err(|e| e.to_string())?;
    let rho = linalg::spectral_radius(&model.a());
    ensure((0.98..=0.991).contains(&rho), || format!("unstable data: rho(A) = {rho}"))?;
    check_trace(&trace, &cfg, "unstable data")?;
    let iters_unstable = trace.len();

    let mut worst = 0.0f64;
    for seed in [1, 2, 3] {
        let lm = stable_with_input(seed, 0.05);
        let em = compute_gram(&lm).unwrap();
        let (model, trace) = bilinear::solve_stability(&em, &eig(&em, 0.0), 0.95, &cfg).map_err(|e| e.to_string())?;
        let err = rel(model.u(), &closed_form(&lm, 0.0));
        ensure(err < 1e-3, || format!("stable data seed {seed}: relative difference {err:e}"))?;
        check_trace(&trace, &cfg, "stable data")?;
        worst = worst.max(err);
    }
    Ok(format!("rho(A) = {rho:.6} in {iters_unstable} iterations; stable data within {worst:.1e}"))
}

fn hinf() -> Check {
    let cfg = AlternationConfig::default();
    let lm = stable_with_input(7, 0.05);
    let em = compute_gram(&lm).unwrap();
    let rg = eig(&em, 0.0);
    let q = em.q as f64;
    let mut gammas = Vec::new();
    for beta in [1e-8, 0.01 * q, 0.1 * q, q, 10.0 * q] {
        let (model, _, gamma) = bilinear::solve_hinf(&em, &rg, beta, &cfg).map_err(|e| e.to_string())?;
        let rho = linalg::spectral_radius(&model.a());
        ensure(rho < 1.0, || format!("beta {beta}: rho(A) = {rho}"))?;
        let sweep = analysis::model_hinf_norm(&model, analysis::DEFAULT_GRID_SIZE).map_err(|e| e.to_string())?;
        ensure(gamma >= sweep * (1.0 - 1e-2), || format!("beta {beta}: gamma {gamma} < sweep {sweep}"))?;
        if beta == 1e-8 {
            let err = rel(model.u(), &closed_form(&lm, 0.0));
            ensure(err < 1e-2, || format!("beta 1e-8: relative difference {err:e}"))?;
        } else {
            gammas.push(gamma);
        }
    }
    ensure(non_increasing(&gammas, 1e-6), || format!("gamma over beta grid {gammas:?}"))?;
    Ok(format!("gamma over beta grid {gammas:.4?}"))
}

fn hinf_oracle() -> Check {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let norm = analysis::hinf_norm(&one(0.5), &one(1.0), &one(1.0), &one(0.0), analysis::DEFAULT_GRID_SIZE)
        .map_err(|e| e.to_string())?;
    let expected = 1.0 / (1.0 - 0.5);
    ensure((norm - expected).abs() < 1e-3, || format!("norm {norm} vs {expected}"))?;
    Ok(format!("norm {norm}"))
}

fn algebra_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (pt, p, q) = (rng.random_range(1..=5), rng.random_range(1..=8), rng.random_range(1..=60));
        let u = randn(pt, p, &mut rng);
        let psi = randn(p, q, &mut rng);
        let theta = randn(pt, q, &mut rng);
        let em = compute_gram(&LiftedMatrices {
            psi: psi.clone(),
            theta_plus: theta.clone(),
            lifting: LiftingSpec::linear(pt, p.saturating_sub(pt)),
        })
        .unwrap();
        let via_gram = em.c - 2.0 * (&u * em.g.transpose()).trace() + (&u * &em.h * u.transpose()).trace();
        let direct = (&theta - &u * &psi).norm_squared() / q as f64;
        let err = (via_gram - direct).abs() / direct;
        ensure(err < 1e-8, || format!("triple {i}: relative difference {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 triples, worst relative difference {worst:.1e}"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_koopman-lmi")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
    })?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    run_cli(&[
        "generate",
        "--system",
        "linear2d",
        "--steps",
        "80",
        "--episodes",
        "4",
        "--seed",
        "11",
        "--noise-std",
        "0",
        "--out",
        &p("data.csv"),
    ])?;
    let config = serde_json::json!({
        "data_path": "data.csv",
        "output_path": "model.json",
        "lifting": {"degree": 1},
    });
    fs::write(p("fit.json"), config.to_string()).map_err(|e| e.to_string())?;
    run_cli(&["fit", "--config", &p("fit.json")])?;

    let model: KoopmanModel = io::load_model(Path::new(&p("model.json"))).map_err(|e| e.to_string())?;
    let dt = 0.1;
    let a_true = DMatrix::identity(2, 2) + dmatrix![0.0, 1.0; -2.0, -0.5] * dt;
    let b_true = dmatrix![0.0; 1.0] * dt;
    let err_a = (model.a() - &a_true).norm();
    let err_b = (model.b() - &b_true).norm();
    ensure(err_a < 1e-6 && err_b < 1e-6, || format!("A error {err_a:e}, B error {err_b:e}"))?;

    run_cli(&[
        "predict",
        "--model",
        &p("model.json"),
        "--data",
        &p("data.csv"),
        "--horizon",
        "50",
        "--out",
        &p("pred.csv"),
    ])?;
    let data: SnapshotDataset = io::load_dataset(Path::new(&p("data.csv"))).map_err(|e| e.to_string())?;
    let pred: Vec<Vector> =
        io::read_prediction(fs::File::open(p("pred.csv")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(pred.len() == 51, || format!("prediction has {} rows", pred.len()))?;
    let truth = &data.episodes[0].states;
    let mut worst = 0.0f64;
    for k in 0..=50 {
        let err = (&pred[k] - &truth[k]).norm();
        ensure(err < 1e-6, || format!("step {k}: error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("A error {err_a:.1e}, B error {err_b:.1e}, worst step error {worst:.1e}"))
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("EDMD equivalence", edmd_equivalence),
        ("Tikhonov equivalence", tikhonov_equivalence),
        ("formulation cross-check", formulation_cross_check),
        ("factorization cross-check", factorization_cross_check),
        ("two-norm", two_norm),
        ("nuclear norm", nuclear),
        ("stability", stability),
        ("H-infinity", hinf),
        ("H-infinity oracle", hinf_oracle),
        ("algebra identity", algebra_identity),
        ("end-to-end", end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
