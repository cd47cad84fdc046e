//! Scaled EDMD Gram matrices, closed-form solutions, and the factor `L_α`
//! of the Tikhonov-shifted Gram matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{LiftedMatrices, LiftingSpec};
use crate::linalg::{self, DEFAULT_RCOND};
use crate::model::KoopmanModel;
use crate::scalar::Scalar;

/// Eigenvalues in `[-NEG_EIG_CLAMP, 0)` are treated as rounding noise.
pub const NEG_EIG_CLAMP: f64 = 1e-12;

/// `G = Θ₊Ψᵀ/q`, `H = ΨΨᵀ/q`, `c = tr(Θ₊Θ₊ᵀ)/q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmdMatrices<T: Scalar> {
    pub g: DMatrix<T>,
    pub h: DMatrix<T>,
    pub c: T,
    pub q: usize,
    pub lifting: LiftingSpec,
}

impl<T: Scalar> EdmdMatrices<T> {
    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    pub fn p_theta(&self) -> usize {
        self.g.nrows()
    }

    pub fn q_scalar(&self) -> T {
        T::from_usize(self.q).expect("snapshot count representable")
    }

    /// `H + (α/q) I`.
    pub fn h_alpha(&self, alpha: T) -> DMatrix<T> {
        let p = self.p();
        &self.h + DMatrix::identity(p, p) * (alpha / self.q_scalar())
    }

    /// `c − 2 tr(U Gᵀ) + tr(U H_α Uᵀ)`, the (Tikhonov-)regularized
    /// regression cost written through the Gram matrices.
    pub fn cost(&self, u: &DMatrix<T>, alpha: T) -> T {
        let h_alpha = self.h_alpha(alpha);
        self.c - T::lit(2.0) * u.dot(&self.g) + (u * h_alpha).dot(u)
    }
}

pub fn compute_gram<T: Scalar>(lifted: &LiftedMatrices<T>) -> Result<EdmdMatrices<T>> {
    let q = lifted.q();
    if q == 0 {
        return Err(Error::EmptyDataset);
    }
    let inv_q = T::one() / T::from_usize(q).expect("snapshot count representable");
    let g = &lifted.theta_plus * lifted.psi.transpose() * inv_q;
    let h = linalg::symmetrize(&(&lifted.psi * lifted.psi.transpose() * inv_q));
    let c = lifted.theta_plus.norm_squared() * inv_q;
    Ok(EdmdMatrices { g, h, c, q, lifting: lifted.lifting.clone() })
}

/// Diagnostics from a closed-form solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveReport {
    /// Numerical rank of the (shifted) Gram matrix.
    pub rank: usize,
    pub dimension: usize,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.dimension
    }
}

/// `U = G H†` with the default truncation `rcond = 1e-12`.
pub fn solve_pinv<T: Scalar>(em: &EdmdMatrices<T>) -> Result<(KoopmanModel<T>, SolveReport)> {
    solve_pinv_rcond(em, T::lit(DEFAULT_RCOND))
}

pub fn solve_pinv_rcond<T: Scalar>(em: &EdmdMatrices<T>, rcond: T) -> Result<(KoopmanModel<T>, SolveReport)> {
    solve_shifted(em, &em.h, rcond)
}

/// `U = G (H + (α/q) I)†`. `α = 0` is exactly [`solve_pinv`].
pub fn solve_tikhonov<T: Scalar>(em: &EdmdMatrices<T>, alpha: T) -> Result<(KoopmanModel<T>, SolveReport)> {
    check_alpha(alpha)?;
    solve_shifted(em, &em.h_alpha(alpha), T::lit(DEFAULT_RCOND))
}

fn solve_shifted<T: Scalar>(em: &EdmdMatrices<T>, h: &DMatrix<T>, rcond: T) -> Result<(KoopmanModel<T>, SolveReport)> {
    let (h_pinv, rank) = linalg::pseudo_inverse(h, rcond);
    let u = &em.g * h_pinv;
    let mut report = SolveReport { rank, dimension: h.nrows(), warnings: Vec::new() };
    if report.rank_deficient() {
        report.warnings.push(format!(
            "Gram matrix is rank deficient (rank {rank} of {}); minimum-norm solution returned",
            h.nrows()
        ));
    }
    Ok((KoopmanModel::new(u, em.lifting.clone())?, report))
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha >= T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("Tikhonov coefficient must be >= 0, got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FactorRoute {
    /// `L_α = V √Λ` from `H_α = V Λ Vᵀ`.
    #[default]
    Eigendecomposition,
    /// `L_α = Q √(Σ²/q + α/q)` from `Ψ = Q Σ Zᵀ`.
    SvdOfPsi,
}

/// Tikhonov-shifted Gram matrix and its factor, `H_α = L_α L_αᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedGram<T: Scalar> {
    pub alpha: T,
    pub h_alpha: DMatrix<T>,
    pub l_alpha: DMatrix<T>,
    pub route: FactorRoute,
}

impl<T: Scalar> RegularizedGram<T> {
    pub fn p(&self) -> usize {
        self.h_alpha.nrows()
    }

    /// `max(1, ‖H_α‖₂)`, the scale for strict-inequality margins.
    pub fn scale(&self) -> T {
        linalg::max_singular_value(&self.h_alpha).max(T::one())
    }
}

/// Factors `H_α` without inverting it. The SVD route needs the lifted
/// snapshots that produced `em`.
pub fn factor_l<T: Scalar>(
    em: &EdmdMatrices<T>,
    alpha: T,
    route: FactorRoute,
    lifted: Option<&LiftedMatrices<T>>,
) -> Result<RegularizedGram<T>> {
    check_alpha(alpha)?;
    let h_alpha = em.h_alpha(alpha);
    let l_alpha = match route {
        FactorRoute::Eigendecomposition => eigen_factor(&h_alpha)?,
        FactorRoute::SvdOfPsi => {
            let lifted = lifted
                .ok_or_else(|| Error::InvalidParameter("SVD factor route needs the snapshot matrix Psi".into()))?;
            if lifted.p() != em.p() || lifted.q() != em.q {
                return Err(Error::InvalidData("snapshot matrices do not match the Gram matrices".into()));
            }
            svd_factor(&lifted.psi, alpha)
        }
    };
    Ok(RegularizedGram { alpha, h_alpha, l_alpha, route })
}

fn eigen_factor<T: Scalar>(h_alpha: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (values, vectors) = linalg::sorted_symmetric_eigen(h_alpha);
    let clamp = T::lit(NEG_EIG_CLAMP);
    let mut l = vectors;
    for (k, &lambda) in values.iter().enumerate() {
        if lambda < -clamp {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lambda.as_f64() });
        }
        let root = lambda.max(T::zero()).sqrt();
        l.column_mut(k).scale_mut(root);
    }
    Ok(l)
}

fn svd_factor<T: Scalar>(psi: &DMatrix<T>, alpha: T) -> DMatrix<T> {
    let (p, q) = psi.shape();
    let qs = T::from_usize(q).expect("snapshot count representable");
    // Pad with zero columns so the left factor is a full p×p orthogonal matrix.
    let padded = if q < p {
        let mut m = DMatrix::zeros(p, p);
        m.columns_mut(0, q).copy_from(psi);
        m
    } else {
        psi.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut l = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = svd.singular_values[src];
        let root = ((sigma * sigma + alpha) / qs).sqrt();
        l.set_column(dst, &(u.column(src) * root));
    }
    l
}
