//! The conic-solve boundary: lowering of [`SdpProblem`]s to a standard
//! LMI form and an embedded primal-dual interior-point solver.
//!
//! Standard form:
//!
//! ```text
//! minimize    cᵀx + c₀
//! subject to  F_b(x) = F_b0 + Σ_i x_i F_bi ⪰ 0   for every block b
//!             A x = b
//! ```
//!
//! Strict constraints arrive already shifted by their margin.

mod ipm;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::sdp::{Entries, SdpProblem, SdpSolution, SdpStatus};

pub use ipm::SolverSettings;

/// One PSD cone membership `constant + Σ x_i F_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock<T: Scalar> {
    pub name: String,
    pub size: usize,
    pub constant: DMatrix<T>,
    /// `(scalar index, symmetric coefficient entries)`, sorted by index.
    pub coeffs: Vec<(usize, Entries<T>)>,
}

impl<T: Scalar> PsdBlock<T> {
    pub fn evaluate(&self, x: &[T]) -> DMatrix<T> {
        let mut m = self.constant.clone();
        for (k, es) in &self.coeffs {
            for &(r, c, v) in es {
                m[(r, c)] += v * x[*k];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormSdp<T: Scalar> {
    pub num_vars: usize,
    pub objective: DVector<T>,
    pub objective_constant: T,
    pub blocks: Vec<PsdBlock<T>>,
    /// Rows of `A` in `A x = b`.
    pub eq_matrix: DMatrix<T>,
    pub eq_rhs: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardSolution<T: Scalar> {
    pub status: SdpStatus,
    pub x: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    pub duality_gap: T,
    pub primal_residual: T,
    pub dual_residual: T,
}

/// Lowers an [`SdpProblem`] to standard form. The lowering is exact: the
/// flattened variable vector is shared, every constraint becomes one PSD
/// block, and the objective and equalities become dense linear data.
pub fn lower<T: Scalar>(problem: &SdpProblem<T>) -> Result<StandardFormSdp<T>> {
    if problem.constraints().is_empty() {
        return Err(Error::Formulation("no constraints: an unconstrained linear objective is unbounded".into()));
    }
    let n = problem.num_scalars();
    let mut used = vec![false; n];
    let mut blocks = Vec::with_capacity(problem.constraints().len());
    for con in problem.constraints() {
        let size = con.expr.rows();
        let shift = problem.shift_of(con);
        let constant = &con.expr.constant - DMatrix::identity(size, size) * shift;
        let coeffs: Vec<(usize, Entries<T>)> =
            con.expr.terms.iter().filter(|(_, es)| !es.is_empty()).map(|(&k, es)| (k, es.clone())).collect();
        for (k, _) in &coeffs {
            used[*k] = true;
        }
        blocks.push(PsdBlock { name: con.name.clone(), size, constant, coeffs });
    }
    let mut objective = DVector::zeros(n);
    for (&k, &v) in &problem.objective().coeffs {
        objective[k] = v;
    }
    let neq = problem.equalities().len();
    let mut eq_matrix = DMatrix::zeros(neq, n);
    let mut eq_rhs = DVector::zeros(neq);
    for (row, (_, form)) in problem.equalities().iter().enumerate() {
        for (&k, &v) in &form.coeffs {
            eq_matrix[(row, k)] = v;
            used[k] = true;
        }
        eq_rhs[row] = -form.constant;
    }
    if let Some(k) = used.iter().position(|u| !u) {
        return Err(Error::Formulation(format!("scalar `{}` appears in no constraint", problem.scalar_label(k))));
    }
    Ok(StandardFormSdp {
        num_vars: n,
        objective,
        objective_constant: problem.objective().constant,
        blocks,
        eq_matrix,
        eq_rhs,
    })
}

/// Solves a standard-form SDP. Linear equalities are eliminated by Gaussian
/// elimination before the interior-point iteration.
pub fn solve_standard<T: Scalar>(sdp: &StandardFormSdp<T>, settings: &SolverSettings<T>) -> StandardSolution<T> {
    let (x0, basis) = match eliminate_equalities(sdp) {
        Some(v) => v,
        None => return trivial(sdp, SdpStatus::Infeasible, DVector::zeros(sdp.num_vars)),
    };
    let reduced = substitute(sdp, &x0, &basis);
    if reduced.num_vars == 0 {
        let feasible = reduced.blocks.iter().all(|b| linalg::min_eigenvalue(&b.constant) >= -settings.tolerance);
        let status = if feasible { SdpStatus::Optimal } else { SdpStatus::Infeasible };
        return trivial(sdp, status, x0);
    }
    let res = ipm::interior_point(&reduced, settings);
    let x = &x0 + &basis * &res.x;
    let objective = sdp.objective.dot(&x) + sdp.objective_constant;
    StandardSolution {
        status: res.status,
        x,
        objective,
        iterations: res.iterations,
        duality_gap: res.gap,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
    }
}

fn trivial<T: Scalar>(sdp: &StandardFormSdp<T>, status: SdpStatus, x: DVector<T>) -> StandardSolution<T> {
    StandardSolution {
        status,
        objective: sdp.objective.dot(&x) + sdp.objective_constant,
        x,
        iterations: 0,
        duality_gap: T::zero(),
        primal_residual: T::zero(),
        dual_residual: T::zero(),
    }
}

/// Parameterizes `{x : A x = b}` as `x0 + N z`. Returns `None` when the
/// equalities are inconsistent.
fn eliminate_equalities<T: Scalar>(sdp: &StandardFormSdp<T>) -> Option<(DVector<T>, DMatrix<T>)> {
    let n = sdp.num_vars;
    if sdp.eq_matrix.nrows() == 0 {
        return Some((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    // reduced row echelon form of [A | b] with partial pivoting
    let mut aug = DMatrix::zeros(sdp.eq_matrix.nrows(), n + 1);
    aug.columns_mut(0, n).copy_from(&sdp.eq_matrix);
    aug.set_column(n, &sdp.eq_rhs);
    let scale = sdp.eq_matrix.amax().max(T::one());
    let tol = T::lit(1e-12) * scale;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == aug.nrows() {
            break;
        }
        let (best, val) = (row..aug.nrows()).map(|r| (r, aug[(r, col)].abs())).fold((row, T::zero()), |acc, cur| {
            if cur.1 > acc.1 {
                cur
            } else {
                acc
            }
        });
        if val <= tol {
            continue;
        }
        aug.swap_rows(row, best);
        let p = aug[(row, col)];
        for j in 0..=n {
            aug[(row, j)] /= p;
        }
        for r in 0..aug.nrows() {
            if r != row {
                let f = aug[(r, col)];
                if f != T::zero() {
                    for j in 0..=n {
                        let v = aug[(row, j)];
                        aug[(r, j)] -= f * v;
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let rhs_scale = sdp.eq_rhs.amax().max(T::one());
    if (row..aug.nrows()).any(|r| aug[(r, n)].abs() > T::lit(1e-9) * rhs_scale) {
        return None;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut x0 = DVector::zeros(n);
    let mut basis = DMatrix::zeros(n, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = T::one();
    }
    for (r, &pc) in pivots.iter().enumerate() {
        x0[pc] = aug[(r, n)];
        for (k, &f) in free.iter().enumerate() {
            basis[(pc, k)] = -aug[(r, f)];
        }
    }
    Some((x0, basis))
}

/// Substitutes `x = x0 + N z` into the blocks and objective.
fn substitute<T: Scalar>(sdp: &StandardFormSdp<T>, x0: &DVector<T>, basis: &DMatrix<T>) -> StandardFormSdp<T> {
    if sdp.eq_matrix.nrows() == 0 {
        return StandardFormSdp {
            eq_matrix: DMatrix::zeros(0, sdp.num_vars),
            eq_rhs: DVector::zeros(0),
            ..sdp.clone()
        };
    }
    let nz = basis.ncols();
    let blocks = sdp
        .blocks
        .iter()
        .map(|b| {
            let constant = b.evaluate(x0.as_slice());
            let mut coeffs = Vec::new();
            for k in 0..nz {
                let mut dense = DMatrix::zeros(b.size, b.size);
                let mut any = false;
                for (i, es) in &b.coeffs {
                    let w = basis[(*i, k)];
                    if w != T::zero() {
                        any = true;
                        for &(r, c, v) in es {
                            dense[(r, c)] += w * v;
                        }
                    }
                }
                if any {
                    let entries: Entries<T> = (0..b.size)
                        .flat_map(|r| (0..b.size).map(move |c| (r, c)))
                        .filter(|&(r, c)| dense[(r, c)] != T::zero())
                        .map(|(r, c)| (r, c, dense[(r, c)]))
                        .collect();
                    if !entries.is_empty() {
                        coeffs.push((k, entries));
                    }
                }
            }
            PsdBlock { name: b.name.clone(), size: b.size, constant, coeffs }
        })
        .collect();
    StandardFormSdp {
        num_vars: nz,
        objective: basis.transpose() * &sdp.objective,
        objective_constant: sdp.objective_constant + sdp.objective.dot(x0),
        blocks,
        eq_matrix: DMatrix::zeros(0, nz),
        eq_rhs: DVector::zeros(0),
    }
}

/// Lowers, solves, and maps the result back onto the problem's variables.
pub fn solve<T: Scalar>(problem: &SdpProblem<T>, settings: &SolverSettings<T>) -> Result<SdpSolution<T>> {
    let sdp = lower(problem)?;
    let res = solve_standard(&sdp, settings);
    let mut sol = SdpSolution::from_vector(problem, res.status, res.x.iter().copied().collect());
    sol.iterations = res.iterations;
    sol.duality_gap = res.duality_gap;
    sol.primal_residual = res.primal_residual;
    sol.dual_residual = res.dual_residual;
    Ok(sol)
}
