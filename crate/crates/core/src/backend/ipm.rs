//! Infeasible-start primal-dual path-following method with the HKM search
//! direction and Mehrotra predictor-corrector steps, for small dense
//! block-diagonal SDPs in LMI form.
//!
//! With slack `S = F(x)` and multiplier `Z`, the optimality conditions are
//! `F(x) − S = 0`, `⟨F_i, Z⟩ = c_i`, `S Z = 0` with `S, Z ⪰ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{PsdBlock, StandardFormSdp};
use crate::linalg;
use crate::scalar::Scalar;
use crate::sdp::SdpStatus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T: Scalar> {
    /// Relative tolerance on the duality gap and on both residuals.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: T,
    /// Strict LMIs are imposed with margin `margin_factor · max(1, ‖H_α‖₂)`
    /// by the regression drivers.
    pub margin_factor: T,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            tolerance: T::lit(1e-8),
            max_iterations: 100,
            step_fraction: T::lit(0.95),
            margin_factor: T::lit(crate::sdp::MARGIN_FACTOR),
        }
    }
}

impl<T: Scalar> SolverSettings<T> {
    pub fn with_tolerance(mut self, tol: T) -> Self {
        self.tolerance = tol;
        self
    }
}

pub(crate) struct IpmResult<T: Scalar> {
    pub status: SdpStatus,
    pub x: DVector<T>,
    pub iterations: usize,
    pub gap: T,
    pub primal_residual: T,
    pub dual_residual: T,
}

/// Frobenius inner product of symmetric coefficient entries with `k`.
#[inline]
fn inner<T: Scalar>(entries: &[(usize, usize, T)], k: &DMatrix<T>) -> T {
    entries.iter().fold(T::zero(), |acc, &(r, c, v)| acc + v * k[(r, c)])
}

fn sym<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    linalg::symmetrize(&m)
}

/// Largest `α` with `X + α ΔX ⪰ 0` (`+∞` if unbounded), given `chol(X)`.
fn max_step<T: Scalar>(chol: &Cholesky<T, Dyn>, dx: &DMatrix<T>) -> T {
    let l = chol.l();
    let Some(y) = l.solve_lower_triangular(dx) else { return T::zero() };
    let Some(w) = l.solve_lower_triangular(&y.transpose()) else { return T::zero() };
    let lam = linalg::min_eigenvalue(&w);
    if lam >= T::zero() {
        T::max_value().unwrap_or_else(|| T::lit(1e300))
    } else {
        -T::one() / lam
    }
}

struct BlockState<T: Scalar> {
    s: DMatrix<T>,
    z: DMatrix<T>,
}

pub(crate) fn interior_point<T: Scalar>(sdp: &StandardFormSdp<T>, settings: &SolverSettings<T>) -> IpmResult<T> {
    let m = sdp.num_vars;
    let c = &sdp.objective;
    let tol = settings.tolerance;
    let one = T::one();

    let mut present = vec![false; m];
    for b in &sdp.blocks {
        for (k, _) in &b.coeffs {
            present[*k] = true;
        }
    }
    let mut x = DVector::zeros(m);
    if (0..m).any(|i| !present[i] && c[i] != T::zero()) {
        return IpmResult {
            status: SdpStatus::Unbounded,
            x,
            iterations: 0,
            gap: T::zero(),
            primal_residual: T::zero(),
            dual_residual: T::zero(),
        };
    }

    let coeff_norm = |es: &[(usize, usize, T)]| es.iter().fold(T::zero(), |a, e| a + e.2 * e.2).sqrt();
    let n_total: usize = sdp.blocks.iter().map(|b| b.size).sum();
    let n_total_s = T::from_usize(n_total.max(1)).unwrap();
    let norm_f0 = sdp.blocks.iter().fold(T::zero(), |a, b| a + b.constant.norm_squared()).sqrt();
    let norm_c = c.norm();

    let mut state: Vec<BlockState<T>> = sdp
        .blocks
        .iter()
        .map(|b| {
            let n = T::from_usize(b.size).unwrap();
            let sqrt_n = n.sqrt();
            let mut xi = T::lit(10.0).max(sqrt_n);
            let mut eta = T::lit(10.0).max(sqrt_n).max(b.constant.norm());
            for (k, es) in &b.coeffs {
                let nf = coeff_norm(es);
                xi = xi.max(sqrt_n * (one + c[*k].abs()) / (one + nf));
                eta = eta.max(nf);
            }
            BlockState { s: DMatrix::identity(b.size, b.size) * eta, z: DMatrix::identity(b.size, b.size) * xi }
        })
        .collect();

    let mut status = SdpStatus::MaxIterations;
    let (mut gap, mut pinf, mut dinf) = (T::zero(), T::zero(), T::zero());
    let mut stalls = 0;
    let mut iterations = 0;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        // residuals
        let rp: Vec<DMatrix<T>> =
            sdp.blocks.iter().zip(&state).map(|(b, st)| b.evaluate(x.as_slice()) - &st.s).collect();
        let mut az = DVector::zeros(m);
        for (b, st) in sdp.blocks.iter().zip(&state) {
            for (k, es) in &b.coeffs {
                az[*k] += inner(es, &st.z);
            }
        }
        let rd = c - &az;
        let pobj = c.dot(&x);
        let dual_lin = -sdp.blocks.iter().zip(&state).fold(T::zero(), |a, (b, st)| a + b.constant.dot(&st.z));
        let compl = state.iter().fold(T::zero(), |a, st| a + st.s.dot(&st.z));
        let mu = compl / n_total_s;
        let rp_norm = rp.iter().fold(T::zero(), |a, r| a + r.norm_squared()).sqrt();
        pinf = rp_norm / (one + norm_f0);
        dinf = rd.norm() / (one + norm_c);
        let scale = one + pobj.abs() + dual_lin.abs();
        gap = compl.max((pobj - dual_lin).abs()) / scale;

        if pinf <= tol && dinf <= tol && gap <= tol {
            status = SdpStatus::Optimal;
            break;
        }
        // Farkas certificate for an empty feasible set: Z ⪰ 0, ⟨F_i, Z⟩ ≈ 0, ⟨F_0, Z⟩ < 0.
        if dual_lin > T::zero() && az.norm() <= tol * dual_lin && dual_lin > one / tol {
            status = SdpStatus::Infeasible;
            break;
        }
        // improving ray: F_lin(x) ⪰ 0 along x with cᵀx → −∞
        if pobj < T::zero() && -pobj > one / tol && pinf <= tol.sqrt() {
            let dir = &x / (-pobj);
            let ray_ok = sdp.blocks.iter().all(|b| {
                let mut lin = b.evaluate(dir.as_slice());
                lin -= &b.constant / (-pobj);
                linalg::min_eigenvalue(&lin) >= -tol.sqrt()
            });
            if ray_ok {
                status = SdpStatus::Unbounded;
                break;
            }
        }
        if iter == settings.max_iterations {
            break;
        }

        let mut s_chol = Vec::with_capacity(state.len());
        let mut z_chol = Vec::with_capacity(state.len());
        for st in &state {
            match (Cholesky::new(st.s.clone()), Cholesky::new(st.z.clone())) {
                (Some(a), Some(b)) => {
                    s_chol.push(a);
                    z_chol.push(b);
                }
                _ => {
                    status = SdpStatus::NumericalFailure;
                    break;
                }
            }
        }
        if status == SdpStatus::NumericalFailure {
            break;
        }
        let s_inv: Vec<DMatrix<T>> = s_chol.iter().map(|ch| sym(ch.inverse())).collect();

        let schur = schur_complement(sdp, &state, &s_inv, &present);
        let Some(schur_chol) = factor_schur(schur) else {
            status = SdpStatus::NumericalFailure;
            break;
        };

        // predictor (affine-scaling) direction
        let mut base = -c.clone();
        for ((b, st), (r, si)) in sdp.blocks.iter().zip(&state).zip(rp.iter().zip(&s_inv)) {
            let g = &st.z * r * si;
            for (k, es) in &b.coeffs {
                base[*k] -= inner(es, &g);
            }
        }
        for i in 0..m {
            if !present[i] {
                base[i] = T::zero();
            }
        }
        let dx_a = schur_chol.solve(&base);
        let ds_a = directions_s(&sdp.blocks, &rp, &dx_a);
        let dz_a: Vec<DMatrix<T>> =
            state.iter().zip(&ds_a).zip(&s_inv).map(|((st, ds), si)| -&st.z - sym(&st.z * ds * si)).collect();
        let ap = step_length(&s_chol, &ds_a);
        let ad = step_length(&z_chol, &dz_a);
        let mu_aff = state
            .iter()
            .zip(ds_a.iter().zip(&dz_a))
            .fold(T::zero(), |acc, (st, (ds, dz))| acc + (&st.s + ds * ap).dot(&(&st.z + dz * ad)))
            / n_total_s;
        let ratio = (mu_aff / mu).max(T::zero()).min(one);
        let sigma = ratio * ratio * ratio;

        // corrector
        let second: Vec<DMatrix<T>> = dz_a.iter().zip(&ds_a).zip(&s_inv).map(|((dz, ds), si)| dz * ds * si).collect();
        let mut rhs = base.clone();
        for (b, (si, r2)) in sdp.blocks.iter().zip(s_inv.iter().zip(&second)) {
            for (k, es) in &b.coeffs {
                rhs[*k] += sigma * mu * inner(es, si) - inner(es, r2);
            }
        }
        for i in 0..m {
            if !present[i] {
                rhs[i] = T::zero();
            }
        }
        let dx = schur_chol.solve(&rhs);
        let ds = directions_s(&sdp.blocks, &rp, &dx);
        let dz: Vec<DMatrix<T>> = state
            .iter()
            .zip(&ds)
            .zip(s_inv.iter().zip(&second))
            .map(|((st, d), (si, r2))| si * (sigma * mu) - &st.z - sym(&st.z * d * si) - sym(r2.clone()))
            .collect();
        let tau = settings.step_fraction;
        let ap = (tau * step_length(&s_chol, &ds)).min(one);
        let ad = (tau * step_length(&z_chol, &dz)).min(one);

        x += &dx * ap;
        for (st, (d_s, d_z)) in state.iter_mut().zip(ds.iter().zip(&dz)) {
            st.s = sym(&st.s + d_s * ap);
            st.z = sym(&st.z + d_z * ad);
        }
        if ap < T::lit(1e-10) && ad < T::lit(1e-10) {
            stalls += 1;
            if stalls >= 3 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            stalls = 0;
        }
    }

    IpmResult { status, x, iterations, gap, primal_residual: pinf, dual_residual: dinf }
}

/// `ΔS_b = rp_b + Σ Δx_i F_bi`.
fn directions_s<T: Scalar>(blocks: &[PsdBlock<T>], rp: &[DMatrix<T>], dx: &DVector<T>) -> Vec<DMatrix<T>> {
    blocks
        .iter()
        .zip(rp)
        .map(|(b, r)| {
            let mut d = r.clone();
            for (k, es) in &b.coeffs {
                for &(rr, cc, v) in es {
                    d[(rr, cc)] += v * dx[*k];
                }
            }
            d
        })
        .collect()
}

fn step_length<T: Scalar>(chols: &[Cholesky<T, Dyn>], dirs: &[DMatrix<T>]) -> T {
    chols
        .iter()
        .zip(dirs)
        .map(|(ch, d)| max_step(ch, d))
        .fold(T::max_value().unwrap_or_else(|| T::lit(1e300)), |a, b| a.min(b))
}

/// `M_ij = Σ_b tr(F_bi Z_b F_bj S_b⁻¹)`; variables absent from every block
/// get a unit diagonal so they stay at zero.
fn schur_complement<T: Scalar>(
    sdp: &StandardFormSdp<T>,
    state: &[BlockState<T>],
    s_inv: &[DMatrix<T>],
    present: &[bool],
) -> DMatrix<T> {
    let m = sdp.num_vars;
    let mut schur = DMatrix::zeros(m, m);
    for ((b, st), si) in sdp.blocks.iter().zip(state).zip(s_inv) {
        let n = b.size;
        for (j, ej) in &b.coeffs {
            // K = Z F_j S⁻¹
            let k = if ej.len() <= n {
                let mut k = DMatrix::zeros(n, n);
                for &(s, t, v) in ej {
                    k.ger(v, &st.z.column(s), &si.row(t).transpose(), T::one());
                }
                k
            } else {
                let mut f = DMatrix::zeros(n, n);
                for &(r, c, v) in ej {
                    f[(r, c)] += v;
                }
                &st.z * f * si
            };
            for (i, ei) in &b.coeffs {
                // tr(F_i K) = Σ F_i[r,c] K[c,r]
                let val = ei.iter().fold(T::zero(), |acc, &(r, c, v)| acc + v * k[(c, r)]);
                schur[(*i, *j)] += val;
            }
        }
    }
    for (i, &p) in present.iter().enumerate() {
        if !p {
            schur[(i, i)] = T::one();
        }
    }
    sym(schur)
}

fn factor_schur<T: Scalar>(schur: DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    if let Some(ch) = Cholesky::new(schur.clone()) {
        return Some(ch);
    }
    let m = schur.nrows();
    let diag_max = schur.diagonal().amax().max(T::lit(1e-300));
    let mut shift = T::lit(1e-14) * diag_max;
    for _ in 0..6 {
        let shifted = &schur + DMatrix::identity(m, m) * shift;
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(ch);
        }
        shift *= T::lit(100.0);
    }
    None
}
