//! Alternating solution of the bilinear problems: with the Lyapunov matrix
//! `P` frozen the regression is an SDP in `U`; with `U` frozen the
//! constraint is an SDP in `P`. The two steps alternate until the cost
//! settles. This is a local scheme with no global-optimality guarantee.

use std::io::Write;

use nalgebra::DMatrix;

use crate::backend::{self, SolverSettings};
use crate::edmd::{self, EdmdMatrices, RegularizedGram};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::KoopmanModel;
use crate::scalar::Scalar;
use crate::sdp::{self, Extra, RegularizerSpec, SdpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialP {
    Identity,
    /// Lyapunov solution (stability) or γ-minimizing `P` (H∞) for the
    /// unregularized least-squares model.
    #[default]
    LyapunovFromUnregularized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternationConfig<T: Scalar> {
    pub max_iterations: usize,
    pub relative_cost_tolerance: T,
    pub initial_p: InitialP,
    pub solver: SolverSettings<T>,
}

impl<T: Scalar> Default for AlternationConfig<T> {
    fn default() -> Self {
        AlternationConfig {
            max_iterations: 40,
            relative_cost_tolerance: T::lit(1e-4),
            initial_p: InitialP::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl<T: Scalar> AlternationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.relative_cost_tolerance > T::zero()) {
            return Err(Error::InvalidParameter("relative cost tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    InfeasibleStep,
    /// A U-step ended without an optimal solution for a reason other than
    /// infeasibility.
    SolverFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::InfeasibleStep => "infeasible_step",
            Termination::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    /// Objective reported by the U-step.
    pub objective: T,
    /// Certified H∞ bound from the following P-step.
    pub gamma: Option<T>,
    pub spectral_radius: T,
    pub status: SdpStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternationTrace<T: Scalar> {
    pub records: Vec<IterationRecord<T>>,
    pub termination: Termination,
}

impl<T: Scalar> AlternationTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<T> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// CSV with header `iteration,objective,gamma,spectral_radius,status`;
    /// iterations count from 1 and an absent γ is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "objective", "gamma", "spectral_radius", "status"])?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.objective.to_string(),
                r.gamma.map(|g| g.to_string()).unwrap_or_default(),
                r.spectral_radius.to_string(),
                r.status.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `c − 2 tr(U Gᵀ) + tr(U H_α Uᵀ) + (β/q) γ`, the U-step objective with
/// its slacks at their tight values.
pub fn evaluate_objective<T: Scalar>(
    em: &EdmdMatrices<T>,
    rg: &RegularizedGram<T>,
    u: &DMatrix<T>,
    beta: T,
    gamma: T,
) -> T {
    let q = T::from_usize(em.q.max(1)).unwrap();
    em.c - T::lit(2.0) * u.dot(&em.g) + (u * &rg.h_alpha).dot(u) + beta / q * gamma
}

/// Result of an alternation run.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearOutcome<T: Scalar> {
    pub model: KoopmanModel<T>,
    pub trace: AlternationTrace<T>,
    /// H∞ bound certified by the last P-step (H∞ problems only).
    pub gamma: Option<T>,
}

/// Least squares under `ρ(A) < ρ̄`. Every returned `A` satisfies the
/// frozen-`P` LMI of its U-step, so `ρ(A) < ρ̄` holds at every iteration.
pub fn solve_stability<T: Scalar>(
    em: &EdmdMatrices<T>,
    rg: &RegularizedGram<T>,
    rho_bar: T,
    cfg: &AlternationConfig<T>,
) -> Result<(KoopmanModel<T>, AlternationTrace<T>)> {
    let spec = RegularizerSpec::tikhonov(rg.alpha).with_stability(rho_bar);
    let out = solve_bilinear(em, rg, &spec, cfg)?;
    Ok((out.model, out.trace))
}

/// Least squares plus `(β/q) ‖𝒢‖_∞` with `C = I`, `D = 0`. Returns the model,
/// its trace, and the H∞ bound certified by the last P-step.
pub fn solve_hinf<T: Scalar>(
    em: &EdmdMatrices<T>,
    rg: &RegularizedGram<T>,
    beta: T,
    cfg: &AlternationConfig<T>,
) -> Result<(KoopmanModel<T>, AlternationTrace<T>, T)> {
    let spec = RegularizerSpec::tikhonov(rg.alpha).with_extra(Extra::HInfinity(beta));
    let out = solve_bilinear(em, rg, &spec, cfg)?;
    let gamma = out.gamma.ok_or_else(|| Error::Formulation("no P-step certified an H-infinity bound".into()))?;
    Ok((out.model, out.trace, gamma))
}

/// Alternates U-steps and P-steps for a spec with a stability bound or an
/// H∞ regularizer. A two-norm or nuclear regularizer alongside the stability
/// bound is carried into every U-step.
pub fn solve_bilinear<T: Scalar>(
    em: &EdmdMatrices<T>,
    rg: &RegularizedGram<T>,
    spec: &RegularizerSpec<T>,
    cfg: &AlternationConfig<T>,
) -> Result<BilinearOutcome<T>> {
    spec.validate()?;
    cfg.validate()?;
    let (pt, pu) = (em.p_theta(), em.p() - em.p_theta());
    let hinf = match (spec.extra, spec.stability) {
        (Extra::HInfinity(_), _) => {
            if pu == 0 {
                return Err(Error::Formulation("the H-infinity regularizer needs at least one lifted input".into()));
            }
            true
        }
        (_, Some(_)) => false,
        _ => return Err(Error::InvalidParameter("spec has neither a stability bound nor an H-infinity term".into())),
    };
    let (c, d) = (DMatrix::identity(pt, pt), DMatrix::zeros(pt, pu));
    let margin = cfg.solver.margin_factor * rg.scale();
    let mut p = initial_p(em, spec, &c, &d, margin, cfg)?;
    let mut records: Vec<IterationRecord<T>> = Vec::new();
    let mut best: Option<(KoopmanModel<T>, Option<T>)> = None;
    let mut termination = Termination::MaxIterations;

    for _ in 0..cfg.max_iterations {
        let mut prob = sdp::formulate(rg, em, spec, Some(&p))?;
        prob.set_margin(margin);
        let sol = backend::solve(&prob, &cfg.solver)?;
        if !sol.is_optimal() {
            termination = if sol.status == SdpStatus::Infeasible {
                Termination::InfeasibleStep
            } else {
                Termination::SolverFailure
            };
            break;
        }
        let u = sol.matrix("U").expect("regression problems carry U");
        let model = KoopmanModel::new(u, em.lifting.clone())?;
        let a = model.a();
        let rho = linalg::spectral_radius(&a);

        let step = match spec.stability {
            Some(rho_bar) if !hinf => sdp::solve_stability_step_p(&a, rho_bar, margin, &cfg.solver)?,
            _ => sdp::solve_hinf_step_p(&a, &model.b(), &c, &d, margin, &cfg.solver)?,
        };
        records.push(IterationRecord {
            objective: sol.objective,
            gamma: step.gamma,
            spectral_radius: rho,
            status: sol.status,
        });
        best = Some((model, step.gamma));

        let n = records.len();
        if n >= 2 {
            let (prev, cur) = (records[n - 2].objective, records[n - 1].objective);
            if (cur - prev).abs() / cur.abs().max(T::one()) < cfg.relative_cost_tolerance {
                termination = Termination::Converged;
                break;
            }
        }
        match step.p {
            Some(next) if step.is_feasible() => p = next,
            _ => {
                termination = Termination::InfeasibleStep;
                break;
            }
        }
    }

    let trace = AlternationTrace { records, termination };
    let (model, gamma) = best.ok_or_else(|| {
        Error::Formulation(format!("the first U-step did not produce a model ({})", termination.as_str()))
    })?;
    Ok(BilinearOutcome { model, trace, gamma })
}

fn initial_p<T: Scalar>(
    em: &EdmdMatrices<T>,
    spec: &RegularizerSpec<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    margin: T,
    cfg: &AlternationConfig<T>,
) -> Result<DMatrix<T>> {
    let pt = em.p_theta();
    let identity = DMatrix::identity(pt, pt);
    if cfg.initial_p == InitialP::Identity {
        return Ok(identity);
    }
    let (ls, _) = edmd::solve_pinv(em)?;
    let a_ls = ls.a();
    let rho = linalg::spectral_radius(&a_ls);
    match spec.stability {
        Some(rho_bar) => {
            let a0 = if rho < rho_bar { a_ls } else { &a_ls * (T::lit(0.99) * rho_bar / rho) };
            match linalg::discrete_lyapunov(&a0, rho_bar, &identity) {
                Ok(p) => Ok(condition_p(p, margin).unwrap_or(identity)),
                Err(_) => Ok(identity),
            }
        }
        None => {
            let a0 = if rho < T::one() { a_ls } else { &a_ls * (T::lit(0.99) / rho) };
            let step = sdp::solve_hinf_step_p(&a0, &ls.b(), c, d, margin, &cfg.solver)?;
            Ok(step.p.and_then(|p| condition_p(p, margin)).unwrap_or(identity))
        }
    }
}

/// Normalizes `tr P = p_ϑ` and lifts the spectrum above `100 ε` so the
/// first U-step is strictly feasible at `U = 0`.
fn condition_p<T: Scalar>(p: DMatrix<T>, margin: T) -> Option<DMatrix<T>> {
    let n = p.nrows();
    let p = linalg::symmetrize(&p);
    let tr = p.trace();
    if !(tr > T::zero()) || !linalg::all_finite(p.as_slice()) {
        return None;
    }
    let mut p = p * (T::from_usize(n).unwrap() / tr);
    let floor = T::lit(100.0) * margin;
    let lam = linalg::min_eigenvalue(&p);
    if lam < floor {
        p += DMatrix::identity(n, n) * (floor - lam);
        let tr = p.trace();
        p *= T::from_usize(n).unwrap() / tr;
    }
    Some(p)
}
