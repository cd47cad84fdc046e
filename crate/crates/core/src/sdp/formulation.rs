//! Koopman regression posed as an SDP, plus the LMI blocks that regularize
//! or constrain it and the Lyapunov-variable steps of the bilinear problems.

use nalgebra::DMatrix;

use super::expr::{AffineExpr, LinearForm, VarShape, Variable};
use super::problem::{ExtraKind, RegressionLayout, SdpProblem, SdpSolution, SdpStatus};
use crate::backend::{self, SolverSettings};
use crate::edmd::{EdmdMatrices, RegularizedGram};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Strict LMIs `F ≻ 0` are imposed as `F ⪰ ε I` with
/// `ε = MARGIN_FACTOR · max(1, ‖H_α‖₂)`.
pub const MARGIN_FACTOR: f64 = 1e-7;

pub fn strictness_margin<T: Scalar>(rg: &RegularizedGram<T>) -> T {
    T::lit(MARGIN_FACTOR) * rg.scale()
}

/// Regularizer beyond Tikhonov; at most one per problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Extra<T> {
    #[default]
    None,
    TwoNorm(T),
    Nuclear(T),
    HInfinity(T),
}

impl<T: Scalar> Extra<T> {
    pub fn beta(&self) -> Option<T> {
        match *self {
            Extra::None => None,
            Extra::TwoNorm(b) | Extra::Nuclear(b) | Extra::HInfinity(b) => Some(b),
        }
    }

    pub fn kind(&self) -> ExtraKind {
        match self {
            Extra::None => ExtraKind::None,
            Extra::TwoNorm(_) => ExtraKind::TwoNorm,
            Extra::Nuclear(_) => ExtraKind::Nuclear,
            Extra::HInfinity(_) => ExtraKind::HInfinity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec<T> {
    pub tikhonov_alpha: T,
    pub extra: Extra<T>,
    /// Spectral bound `ρ̄ ∈ (0, 1)` on `A`.
    pub stability: Option<T>,
}

impl<T: Scalar> Default for RegularizerSpec<T> {
    fn default() -> Self {
        RegularizerSpec { tikhonov_alpha: T::zero(), extra: Extra::None, stability: None }
    }
}

impl<T: Scalar> RegularizerSpec<T> {
    pub fn tikhonov(alpha: T) -> Self {
        RegularizerSpec { tikhonov_alpha: alpha, ..Default::default() }
    }

    pub fn with_extra(mut self, extra: Extra<T>) -> Self {
        self.extra = extra;
        self
    }

    pub fn with_stability(mut self, rho_bar: T) -> Self {
        self.stability = Some(rho_bar);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let alpha = self.tikhonov_alpha;
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("Tikhonov coefficient must be >= 0, got {alpha}")));
        }
        if let Some(beta) = self.extra.beta() {
            check_beta(beta)?;
        }
        if let Some(rho) = self.stability {
            check_rho(rho)?;
            if self.extra.kind() == ExtraKind::HInfinity {
                return Err(Error::InvalidParameter(
                    "the stability constraint and the H-infinity regularizer cannot be combined".into(),
                ));
            }
        }
        Ok(())
    }

    /// Whether solving needs the bilinear alternation.
    pub fn is_bilinear(&self) -> bool {
        self.stability.is_some() || self.extra.kind() == ExtraKind::HInfinity
    }
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("regularization weight must be > 0, got {beta}")));
    }
    Ok(())
}

fn check_rho<T: Scalar>(rho: T) -> Result<()> {
    if !(rho > T::zero() && rho < T::one()) {
        return Err(Error::InvalidParameter(format!("spectral bound must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

fn check_positive_definite<T: Scalar>(p: &DMatrix<T>, n: usize, what: &str) -> Result<()> {
    if p.shape() != (n, n) {
        return Err(Error::InvalidParameter(format!("{what} must be {n}x{n}, got {}x{}", p.nrows(), p.ncols())));
    }
    let scale = p.amax().max(T::one());
    if (p - p.transpose()).amax() > T::lit(1e-10) * scale {
        return Err(Error::InvalidParameter(format!("{what} must be symmetric")));
    }
    let lam = linalg::min_eigenvalue(p);
    if !(lam > T::zero()) {
        return Err(Error::InvalidParameter(format!("{what} must be positive definite (min eigenvalue {lam})")));
    }
    Ok(())
}

fn layout_of<T: Scalar>(problem: &SdpProblem<T>) -> Result<RegressionLayout> {
    problem.layout().copied().ok_or_else(|| Error::Formulation("a base regression problem is required".into()))
}

fn scalar_form<T: Scalar>(e: &AffineExpr<T>) -> LinearForm<T> {
    e.to_linear_form()
}

/// `minimize c − 2 tr(U Gᵀ) + ν` subject to `ν − tr W ≻ 0`, `W ≻ 0` and
/// `[W, U L_α; L_αᵀ Uᵀ, I] ≻ 0`.
pub fn formulate_base<T: Scalar>(rg: &RegularizedGram<T>, em: &EdmdMatrices<T>) -> Result<SdpProblem<T>> {
    check_dims(rg, em)?;
    if rg.l_alpha.shape() != (em.p(), em.p()) {
        return Err(Error::Formulation(format!(
            "L_alpha is {}x{}, expected {}x{}",
            rg.l_alpha.nrows(),
            rg.l_alpha.ncols(),
            em.p(),
            em.p()
        )));
    }
    let (mut prob, ue, we, layout) = base_skeleton(rg, em)?;
    let schur = AffineExpr::symmetric_blocks(&[
        vec![Some(we), Some(ue.mul_right(&rg.l_alpha))],
        vec![None, Some(AffineExpr::identity(em.p()))],
    ]);
    prob.add_constraint("schur", schur, true)?;
    prob.layout = Some(layout);
    Ok(prob)
}

/// Same optimum as [`formulate_base`] through `[W, U; Uᵀ, H_α⁻¹] ≻ 0`;
/// requires `H_α ≻ 0`.
pub fn formulate_base_inverted<T: Scalar>(rg: &RegularizedGram<T>, em: &EdmdMatrices<T>) -> Result<SdpProblem<T>> {
    check_dims(rg, em)?;
    let (values, _) = linalg::sorted_symmetric_eigen(&rg.h_alpha);
    let lam_max = values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let lam_min = values.iter().copied().fold(lam_max, |a, b| a.min(b));
    if values.is_empty() || !(lam_min > T::lit(1e-12) * lam_max.max(T::one())) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lam_min.as_f64() });
    }
    let h_inv = rg
        .h_alpha
        .clone()
        .cholesky()
        .map(|c| linalg::symmetrize(&c.inverse()))
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: lam_min.as_f64() })?;
    let (mut prob, ue, we, layout) = base_skeleton(rg, em)?;
    let schur =
        AffineExpr::symmetric_blocks(&[vec![Some(we), Some(ue)], vec![None, Some(AffineExpr::constant(h_inv))]]);
    prob.add_constraint("schur_inverted", schur, true)?;
    prob.layout = Some(layout);
    Ok(prob)
}

fn check_dims<T: Scalar>(rg: &RegularizedGram<T>, em: &EdmdMatrices<T>) -> Result<()> {
    if rg.h_alpha.shape() != (em.p(), em.p()) || em.g.nrows() != em.p_theta() {
        return Err(Error::Formulation(format!(
            "regularized Gram is {}x{} but the EDMD matrices have p = {}",
            rg.h_alpha.nrows(),
            rg.h_alpha.ncols(),
            em.p()
        )));
    }
    Ok(())
}

type Skeleton<T> = (SdpProblem<T>, AffineExpr<T>, AffineExpr<T>, RegressionLayout);

fn base_skeleton<T: Scalar>(rg: &RegularizedGram<T>, em: &EdmdMatrices<T>) -> Result<Skeleton<T>> {
    let (pt, p) = (em.p_theta(), em.p());
    let mut prob = SdpProblem::new(strictness_margin(rg));
    let u = prob.add_variable("U", VarShape::Matrix { rows: pt, cols: p })?;
    let w = prob.add_variable("W", VarShape::Symmetric(pt))?;
    let nu = prob.add_variable("nu", VarShape::Scalar)?;
    let (ue, we, nue) = (prob.expr(u), prob.expr(w), prob.expr(nu));

    let mut obj = LinearForm::constant(em.c);
    obj.add(&ue.inner(&em.g).scaled(T::lit(-2.0)));
    obj.add(&scalar_form(&nue));
    prob.add_objective(&obj)?;
    prob.add_constraint("slack", nue.sub(&we.trace()), true)?;
    prob.add_constraint("w_pos", we.clone(), true)?;

    let layout = RegressionLayout {
        u,
        w: Some(w),
        nu: Some(nu),
        gamma: None,
        p_theta: pt,
        p,
        q: em.q,
        extra: ExtraKind::None,
        stability: false,
    };
    Ok((prob, ue, we, layout))
}

fn penalize_gamma<T: Scalar>(prob: &mut SdpProblem<T>, beta: T, q: usize) -> Result<Variable> {
    let gamma = prob.add_variable("gamma", VarShape::Scalar)?;
    let weight = beta / T::from_usize(q.max(1)).unwrap();
    prob.add_objective(&scalar_form(&prob.expr(gamma)).scaled(weight))?;
    if let Some(layout) = prob.layout.as_mut() {
        layout.gamma = Some(gamma);
    }
    Ok(prob.variable(gamma).clone())
}

fn require_no_extra(layout: &RegressionLayout) -> Result<()> {
    if layout.extra != ExtraKind::None {
        return Err(Error::Formulation(format!("problem already carries a {:?} regularizer", layout.extra)));
    }
    Ok(())
}

/// Adds `(β/q) γ` and `[γ I, U; Uᵀ, γ I] ≻ 0`, so that `γ ≥ σ̄(U)`.
pub fn add_two_norm<T: Scalar>(mut problem: SdpProblem<T>, beta: T, q: usize) -> Result<SdpProblem<T>> {
    check_beta(beta)?;
    let layout = layout_of(&problem)?;
    require_no_extra(&layout)?;
    let ue = problem.expr(layout.u);
    let gamma = penalize_gamma(&mut problem, beta, q)?;
    let block = AffineExpr::symmetric_blocks(&[
        vec![Some(AffineExpr::scaled_identity(&gamma, layout.p_theta)), Some(ue)],
        vec![None, Some(AffineExpr::scaled_identity(&gamma, layout.p))],
    ]);
    problem.add_constraint("two_norm", block, true)?;
    problem.layout.as_mut().unwrap().extra = ExtraKind::TwoNorm;
    Ok(problem)
}

/// Adds `(β/q) γ`, `tr V₁ + tr V₂ ≤ 2γ` and `[V₁, U; Uᵀ, V₂] ⪰ 0`, so that
/// `γ ≥ ‖U‖_*`.
pub fn add_nuclear<T: Scalar>(mut problem: SdpProblem<T>, beta: T, q: usize) -> Result<SdpProblem<T>> {
    check_beta(beta)?;
    let layout = layout_of(&problem)?;
    require_no_extra(&layout)?;
    let ue = problem.expr(layout.u);
    let ge = AffineExpr::var(&penalize_gamma(&mut problem, beta, q)?);
    let v1 = problem.add_variable("V1", VarShape::Symmetric(layout.p_theta))?;
    let v2 = problem.add_variable("V2", VarShape::Symmetric(layout.p))?;
    let (v1e, v2e) = (problem.expr(v1), problem.expr(v2));
    let budget = ge.scale(T::lit(2.0)).sub(&v1e.trace()).sub(&v2e.trace());
    problem.add_constraint("nuclear_trace", budget, false)?;
    let block = AffineExpr::symmetric_blocks(&[vec![Some(v1e), Some(ue)], vec![None, Some(v2e)]]);
    problem.add_constraint("nuclear_block", block, false)?;
    problem.layout.as_mut().unwrap().extra = ExtraKind::Nuclear;
    Ok(problem)
}

/// Adds `[ρ̄P, AᵀP; PA, ρ̄P] ≻ 0` with `P` frozen; `A` is the state block of `U`.
pub fn add_stability_step_u<T: Scalar>(
    mut problem: SdpProblem<T>,
    rho_bar: T,
    p_fixed: &DMatrix<T>,
) -> Result<SdpProblem<T>> {
    check_rho(rho_bar)?;
    let layout = layout_of(&problem)?;
    check_positive_definite(p_fixed, layout.p_theta, "P")?;
    if layout.extra == ExtraKind::HInfinity {
        return Err(Error::InvalidParameter(
            "the stability constraint and the H-infinity regularizer cannot be combined".into(),
        ));
    }
    if layout.stability {
        return Err(Error::Formulation("stability constraint already present".into()));
    }
    let p_sym = linalg::symmetrize(p_fixed);
    let a = problem.expr(layout.u).columns(0, layout.p_theta);
    let pa = a.mul_left(&p_sym);
    let diag = AffineExpr::constant(&p_sym * rho_bar);
    let block = AffineExpr::symmetric_blocks(&[vec![Some(diag.clone()), Some(pa.transpose())], vec![None, Some(diag)]]);
    problem.add_constraint("stability", block, true)?;
    problem.layout.as_mut().unwrap().stability = true;
    Ok(problem)
}

/// Adds `(β/q) γ` and the bounded-real LMI
/// `[P, AP, B, 0; PAᵀ, P, 0, PCᵀ; Bᵀ, 0, γI, Dᵀ; 0, CP, D, γI] ≻ 0` with `P`
/// frozen, certifying `‖C(zI − A)⁻¹B + D‖_∞ < γ`.
pub fn add_hinf_step_u<T: Scalar>(
    mut problem: SdpProblem<T>,
    beta: T,
    q: usize,
    p_fixed: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
) -> Result<SdpProblem<T>> {
    check_beta(beta)?;
    let layout = layout_of(&problem)?;
    require_no_extra(&layout)?;
    if layout.stability {
        return Err(Error::InvalidParameter(
            "the stability constraint and the H-infinity regularizer cannot be combined".into(),
        ));
    }
    let (pt, pu) = (layout.p_theta, layout.p - layout.p_theta);
    if pu == 0 {
        return Err(Error::Formulation("the H-infinity regularizer needs at least one lifted input".into()));
    }
    check_positive_definite(p_fixed, pt, "P")?;
    check_output(c, d, pt, pu)?;
    let ny = c.nrows();
    let p_sym = linalg::symmetrize(p_fixed);
    let ue = problem.expr(layout.u);
    let (a, b) = (ue.columns(0, pt), ue.columns(pt, pu));
    let gamma = penalize_gamma(&mut problem, beta, q)?;
    let pc = AffineExpr::constant(&p_sym * c.transpose());
    let block = AffineExpr::symmetric_blocks(&[
        vec![Some(AffineExpr::constant(p_sym.clone())), Some(a.mul_right(&p_sym)), Some(b), None],
        vec![None, Some(AffineExpr::constant(p_sym.clone())), None, Some(pc)],
        vec![None, None, Some(AffineExpr::scaled_identity(&gamma, pu)), Some(AffineExpr::constant(d.transpose()))],
        vec![None, None, None, Some(AffineExpr::scaled_identity(&gamma, ny))],
    ]);
    problem.add_constraint("bounded_real", block, true)?;
    problem.layout.as_mut().unwrap().extra = ExtraKind::HInfinity;
    Ok(problem)
}

fn check_output<T: Scalar>(c: &DMatrix<T>, d: &DMatrix<T>, pt: usize, pu: usize) -> Result<()> {
    if c.ncols() != pt || d.ncols() != pu || d.nrows() != c.nrows() || c.nrows() == 0 {
        return Err(Error::Formulation(format!(
            "output matrices must be ny x {pt} and ny x {pu} with ny > 0, got {}x{} and {}x{}",
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    Ok(())
}

/// Builds the full problem for one U-step: base, optional extra regularizer,
/// and (for bilinear specs) the frozen-`P` constraint. The H∞ block uses
/// `C = I`, `D = 0`.
pub fn formulate<T: Scalar>(
    rg: &RegularizedGram<T>,
    em: &EdmdMatrices<T>,
    spec: &RegularizerSpec<T>,
    p_fixed: Option<&DMatrix<T>>,
) -> Result<SdpProblem<T>> {
    spec.validate()?;
    let mut prob = formulate_base(rg, em)?;
    let q = em.q;
    prob = match spec.extra {
        Extra::None => prob,
        Extra::TwoNorm(beta) => add_two_norm(prob, beta, q)?,
        Extra::Nuclear(beta) => add_nuclear(prob, beta, q)?,
        Extra::HInfinity(beta) => {
            let p = p_fixed.ok_or_else(|| Error::Formulation("the H-infinity step needs a fixed P".into()))?;
            let pt = em.p_theta();
            let c = DMatrix::identity(pt, pt);
            let d = DMatrix::zeros(pt, em.p() - pt);
            add_hinf_step_u(prob, beta, q, p, &c, &d)?
        }
    };
    if let Some(rho) = spec.stability {
        let p = p_fixed.ok_or_else(|| Error::Formulation("the stability step needs a fixed P".into()))?;
        prob = add_stability_step_u(prob, rho, p)?;
    }
    Ok(prob)
}

/// Base problem solved once for `U₀` and once more for the scaled correction
/// `V = (U − U₀)/s`, which is again a base problem with `G ← (G − U₀H_α)/s`.
/// The objective is flat at its minimizer, so a single solve pins `U` down
/// only to about the square root of the attained gap; the correction solve
/// recovers those digits. Returns the first solution and the refined `U`
/// (`U₀` when the correction solve fails).
pub fn solve_base_refined<T: Scalar>(
    rg: &RegularizedGram<T>,
    em: &EdmdMatrices<T>,
    margin: T,
    settings: &SolverSettings<T>,
) -> Result<(SdpSolution<T>, Option<DMatrix<T>>)> {
    let mut prob = formulate_base(rg, em)?;
    prob.set_margin(margin);
    let first = backend::solve(&prob, settings)?;
    let Some(u0) = first.matrix("U").filter(|_| first.is_optimal()) else {
        return Ok((first, None));
    };
    let r = &em.g - &u0 * &rg.h_alpha;
    let s = r.norm() / rg.scale();
    if !(s > T::zero()) || !s.is_finite() {
        return Ok((first, Some(u0)));
    }
    let shifted = EdmdMatrices { g: r / s, c: T::zero(), ..em.clone() };
    let mut corr = formulate_base(rg, &shifted)?;
    corr.set_margin(margin);
    let sol = backend::solve(&corr, settings)?;
    let u = match sol.matrix("U").filter(|_| sol.is_optimal()) {
        Some(v) => u0 + v * s,
        None => u0,
    };
    Ok((first, Some(u)))
}

/// Lyapunov step with `A` frozen: maximize `t` over symmetric `P` subject to
/// `P − tI ⪰ 0`, `[ρ̄P, AᵀP; PA, ρ̄P] − tI ⪰ 0` and `tr P = p_ϑ`.
pub fn stability_step_p<T: Scalar>(a: &DMatrix<T>, rho_bar: T, margin: T) -> Result<SdpProblem<T>> {
    check_rho(rho_bar)?;
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Formulation(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    let mut prob = SdpProblem::new(margin);
    let p = prob.add_variable("P", VarShape::Symmetric(n))?;
    let t = prob.add_variable("t", VarShape::Scalar)?;
    let pe = prob.expr(p);
    let tv = prob.variable(t).clone();
    prob.add_objective(&scalar_form(&prob.expr(t)).scaled(-T::one()))?;
    prob.add_constraint("p_lower", pe.sub(&AffineExpr::scaled_identity(&tv, n)), false)?;
    let diag = pe.scale(rho_bar);
    let block = AffineExpr::symmetric_blocks(&[
        vec![Some(diag.clone()), Some(pe.mul_left(&a.transpose()))],
        vec![None, Some(diag)],
    ]);
    prob.add_constraint("stability", block.sub(&AffineExpr::scaled_identity(&tv, 2 * n)), false)?;
    let mut norm = scalar_form(&pe.trace());
    norm.constant -= T::from_usize(n).unwrap();
    prob.add_equality("trace_p", norm)?;
    Ok(prob)
}

/// H∞ step with `A`, `B` frozen: minimize `γ` over `P ≻ 0` and `γ` subject
/// to the bounded-real LMI.
pub fn hinf_step_p<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    margin: T,
) -> Result<SdpProblem<T>> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 || b.nrows() != n {
        return Err(Error::Formulation("A must be square and B must have as many rows as A".into()));
    }
    let pu = b.ncols();
    if pu == 0 {
        return Err(Error::Formulation("the H-infinity step needs at least one input".into()));
    }
    check_output(c, d, n, pu)?;
    let ny = c.nrows();
    let mut prob = SdpProblem::new(margin);
    let p = prob.add_variable("P", VarShape::Symmetric(n))?;
    let g = prob.add_variable("gamma", VarShape::Scalar)?;
    let pe = prob.expr(p);
    let gv = prob.variable(g).clone();
    prob.add_objective(&scalar_form(&prob.expr(g)))?;
    prob.add_constraint("p_pos", pe.clone(), true)?;
    let block = AffineExpr::symmetric_blocks(&[
        vec![Some(pe.clone()), Some(pe.mul_left(a)), Some(AffineExpr::constant(b.clone())), None],
        vec![None, Some(pe.clone()), None, Some(pe.mul_right(&c.transpose()))],
        vec![None, None, Some(AffineExpr::scaled_identity(&gv, pu)), Some(AffineExpr::constant(d.transpose()))],
        vec![None, None, None, Some(AffineExpr::scaled_identity(&gv, ny))],
    ]);
    prob.add_constraint("bounded_real", block, true)?;
    Ok(prob)
}

/// Outcome of a Lyapunov-variable step.
#[derive(Debug, Clone, PartialEq)]
pub struct PStep<T: Scalar> {
    pub status: SdpStatus,
    pub p: Option<DMatrix<T>>,
    /// Certified H∞ bound (H∞ step only).
    pub gamma: Option<T>,
    /// Achieved slack `t*` (stability step only).
    pub slack: Option<T>,
    pub iterations: usize,
}

impl<T: Scalar> PStep<T> {
    fn infeasible() -> Self {
        PStep { status: SdpStatus::Infeasible, p: None, gamma: None, slack: None, iterations: 0 }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Solves [`stability_step_p`]; infeasible when `ρ(A) ≥ ρ̄` or the achieved
/// slack falls below the strictness margin.
pub fn solve_stability_step_p<T: Scalar>(
    a: &DMatrix<T>,
    rho_bar: T,
    margin: T,
    settings: &SolverSettings<T>,
) -> Result<PStep<T>> {
    let prob = stability_step_p(a, rho_bar, margin)?;
    if linalg::spectral_radius(a) >= rho_bar {
        return Ok(PStep::infeasible());
    }
    let sol = backend::solve(&prob, settings)?;
    let mut out =
        PStep { status: sol.status, p: None, gamma: None, slack: sol.scalar("t"), iterations: sol.iterations };
    if sol.is_optimal() {
        if out.slack.is_some_and(|t| t >= margin) {
            out.p = sol.matrix("P").map(|p| linalg::symmetrize(&p));
        } else {
            out.status = SdpStatus::Infeasible;
        }
    }
    Ok(out)
}

/// Solves [`hinf_step_p`]; infeasible when `ρ(A) ≥ 1`.
pub fn solve_hinf_step_p<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    margin: T,
    settings: &SolverSettings<T>,
) -> Result<PStep<T>> {
    let prob = hinf_step_p(a, b, c, d, margin)?;
    if linalg::spectral_radius(a) >= T::one() {
        return Ok(PStep::infeasible());
    }
    let sol = backend::solve(&prob, settings)?;
    let mut out = PStep { status: sol.status, p: None, gamma: None, slack: None, iterations: sol.iterations };
    if sol.is_optimal() {
        out.p = sol.matrix("P").map(|p| linalg::symmetrize(&p));
        out.gamma = sol.scalar("gamma");
    }
    Ok(out)
}
