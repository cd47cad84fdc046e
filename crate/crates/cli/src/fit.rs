//! Fitting pipeline shared by `fit` and `sweep`.

use std::path::PathBuf;

use koopman_lmi::analysis;
use koopman_lmi::bilinear::{self, AlternationTrace};
use koopman_lmi::edmd::{compute_gram, factor_l, FactorRoute};
use koopman_lmi::lifting::build_snapshots;
use koopman_lmi::sdp::{self, Extra};
use koopman_lmi::{linalg, KoopmanModel, SnapshotDataset};
use serde::Serialize;

use crate::config::FitConfig;
use crate::error::{Classify, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub status: String,
    /// Alternation termination; absent for single-SDP fits.
    pub termination: Option<String>,
    /// `c − 2 tr(U Gᵀ) + tr(U H_α Uᵀ) + (β/q) γ` at the returned `U`.
    pub objective: f64,
    /// Objective value reported by the last SDP solve.
    pub solver_objective: f64,
    /// Tight value of the slack, `tr(U H_α Uᵀ)`.
    pub nu: f64,
    pub gamma: Option<f64>,
    pub spectral_radius: f64,
    pub hinf_norm: Option<f64>,
    pub iterations: usize,
    pub training_score: f64,
    pub tikhonov_alpha: f64,
    pub extra: String,
    pub beta: Option<f64>,
    pub rho_bar: Option<f64>,
    pub p_theta: usize,
    pub p_upsilon: usize,
    pub q: usize,
    pub model_path: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
}

pub struct FitOutcome {
    pub model: KoopmanModel,
    pub report: FitReport,
    pub trace: Option<AlternationTrace<f64>>,
}

/// Fits `data` as configured. Setup failures (dimensions, lifting) are usage
/// errors; solver failures are numerical errors.
pub fn run_fit(cfg: &FitConfig, data: &SnapshotDataset) -> Result<FitOutcome, CliError> {
    let lifting = cfg.lifting_spec(data.state_dim, data.input_dim).usage("invalid lifting")?;
    let spec = cfg.regularizer_spec();
    spec.validate().usage("invalid regularizer")?;
    let lifted = build_snapshots(data, &lifting).usage("cannot lift data")?;
    let em = compute_gram(&lifted).usage("cannot form Gram matrices")?;
    let route = cfg.solver.factor_route;
    let rg = factor_l(&em, spec.tikhonov_alpha, route, (route == FactorRoute::SvdOfPsi).then_some(&lifted))
        .numerical("cannot factor the regularized Gram matrix")?;
    let settings = cfg.solver_settings();

    let (model, status, termination, solver_objective, gamma, iterations, trace) = if spec.is_bilinear() {
        let out =
            bilinear::solve_bilinear(&em, &rg, &spec, &cfg.alternation_config()).numerical("alternation failed")?;
        let last = out.trace.records.last().expect("a model implies one iteration");
        let gamma = match spec.extra {
            Extra::HInfinity(_) => out.gamma,
            other => tight_gamma(other, out.model.u()),
        };
        (
            out.model,
            last.status.to_string(),
            Some(out.trace.termination.as_str().to_string()),
            last.objective,
            gamma,
            out.trace.len(),
            Some(out.trace),
        )
    } else {
        let margin = settings.margin_factor * rg.scale();
        let (sol, refined) = if spec.extra == Extra::None {
            sdp::solve_base_refined(&rg, &em, margin, &settings).numerical("solver error")?
        } else {
            let mut prob = sdp::formulate(&rg, &em, &spec, None).usage("cannot formulate the problem")?;
            prob.set_margin(margin);
            (sdp::solve(&prob, &settings).numerical("solver error")?, None)
        };
        if !sol.is_optimal() {
            return Err(CliError::numerical_msg(format!(
                "solver finished with status `{}` after {} iterations",
                sol.status, sol.iterations
            )));
        }
        let u = refined.or_else(|| sol.matrix("U")).expect("regression problems carry U");
        let model = KoopmanModel::new(u, lifting.clone()).numerical("solver returned a malformed U")?;
        let gamma = tight_gamma(spec.extra, model.u());
        (model, sol.status.to_string(), None, sol.objective, gamma, sol.iterations, None)
    };

    let u = model.u();
    let beta = spec.extra.beta();
    let objective = bilinear::evaluate_objective(&em, &rg, u, beta.unwrap_or(0.0), gamma.unwrap_or(0.0));
    let nu = (u * &rg.h_alpha).dot(u);
    let rho = linalg::spectral_radius(&model.a());
    let hinf = if rho < 1.0 { analysis::model_hinf_norm(&model, analysis::DEFAULT_GRID_SIZE).ok() } else { None };
    let training_score = analysis::score(&model, data).numerical("cannot score the model")?;
    let report = FitReport {
        status,
        termination,
        objective,
        solver_objective,
        nu,
        gamma,
        spectral_radius: rho,
        hinf_norm: hinf,
        iterations,
        training_score,
        tikhonov_alpha: spec.tikhonov_alpha,
        extra: cfg.regularizer.extra.name().to_string(),
        beta,
        rho_bar: spec.stability,
        p_theta: lifting.p_theta(),
        p_upsilon: lifting.p_upsilon(),
        q: em.q,
        model_path: None,
        trace_path: None,
    };
    Ok(FitOutcome { model, report, trace })
}

fn tight_gamma(extra: Extra<f64>, u: &koopman_lmi::Matrix) -> Option<f64> {
    match extra {
        Extra::TwoNorm(_) => Some(linalg::max_singular_value(u)),
        Extra::Nuclear(_) => Some(linalg::nuclear_norm(u)),
        _ => None,
    }
}
