//! Verification and use of fitted models: spectra, H∞ norm by frequency
//! sweep, multi-step prediction and scoring.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lifting::{self, SnapshotDataset};
use crate::linalg;
use crate::model::KoopmanModel;
use crate::scalar::Scalar;

pub const DEFAULT_GRID_SIZE: usize = 4096;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Scalar>(a: &DMatrix<T>) -> Result<T> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidData(format!("matrix must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(linalg::spectral_radius(a))
}

fn complexify<T: Scalar>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|v| Complex::new(v, T::zero()))
}

/// `σ̄(C (e^{jθ} I − A)⁻¹ B + D)`.
fn gain_at<T: Scalar>(
    a: &DMatrix<Complex<T>>,
    b: &DMatrix<Complex<T>>,
    c: &DMatrix<Complex<T>>,
    d: &DMatrix<Complex<T>>,
    theta: T,
) -> T {
    let n = a.nrows();
    let g = if n == 0 {
        d.clone()
    } else {
        let z = Complex::new(theta.cos(), theta.sin());
        let m = DMatrix::from_diagonal_element(n, n, z) - a;
        let x = m
            .lu()
            .solve(b)
            .unwrap_or_else(|| DMatrix::from_element(n, b.ncols(), Complex::new(T::max_value().unwrap(), T::zero())));
        c * x + d
    };
    if g.is_empty() {
        return T::zero();
    }
    g.singular_values().iter().copied().fold(T::zero(), |m, s| m.max(s))
}

/// Peak of `σ̄(G(e^{jθ}))` over `θ ∈ [0, π]`: a uniform grid of `grid_size`
/// points followed by golden-section refinement around the best point. The
/// estimate is a lower bound that is tight to the refinement tolerance.
pub fn hinf_norm<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
    grid_size: usize,
) -> Result<T> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::InvalidData(format!(
            "inconsistent system dimensions: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    if grid_size < 2 {
        return Err(Error::InvalidParameter("frequency grid needs at least 2 points".into()));
    }
    let rho = linalg::spectral_radius(a);
    if rho >= T::one() {
        return Err(Error::UnboundedNorm { spectral_radius: rho.as_f64() });
    }
    let (ac, bc, cc, dc) = (complexify(a), complexify(b), complexify(c), complexify(d));
    let gain = |t: T| gain_at(&ac, &bc, &cc, &dc, t);

    let pi = T::pi();
    let step = pi / T::from_usize(grid_size - 1).unwrap();
    let mut best = (0usize, T::zero());
    for k in 0..grid_size {
        let g = gain(step * T::from_usize(k).unwrap());
        if k == 0 || g > best.1 {
            best = (k, g);
        }
    }
    let k = best.0;
    let mut lo = step * T::from_usize(k.saturating_sub(1)).unwrap();
    let mut hi = step * T::from_usize((k + 1).min(grid_size - 1)).unwrap();
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (gain(x1), gain(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = gain(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = gain(x1);
        }
    }
    Ok(best.1.max(f1).max(f2))
}

/// H∞ norm of the model's lifted system `(A, B, C, D)`.
pub fn model_hinf_norm<T: Scalar>(model: &KoopmanModel<T>, grid_size: usize) -> Result<T> {
    hinf_norm(&model.a(), &model.b(), model.c(), model.d(), grid_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Re-lift the retracted state after every step.
    Relift,
    /// Propagate the lifted state and only retract for the input lifting.
    #[default]
    LiftedRollout,
}

impl PredictionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionMode::Relift => "relift",
            PredictionMode::LiftedRollout => "lifted_rollout",
        }
    }
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relift" => Ok(PredictionMode::Relift),
            "lifted_rollout" | "lifted-rollout" => Ok(PredictionMode::LiftedRollout),
            other => Err(Error::InvalidParameter(format!("unknown prediction mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult<T: Scalar> {
    /// `x̂_1 … x̂_N`.
    pub states: Vec<DVector<T>>,
    /// `ϑ_1 … ϑ_N`.
    pub lifted: Vec<DVector<T>>,
    pub mode: PredictionMode,
}

/// Rolls the model forward from `x0` for `inputs.len()` steps.
pub fn predict<T: Scalar>(
    model: &KoopmanModel<T>,
    x0: &DVector<T>,
    inputs: &[DVector<T>],
    mode: PredictionMode,
) -> Result<PredictionResult<T>> {
    let spec = model.lifting();
    if x0.len() != spec.state_dim {
        return Err(Error::InvalidData(format!(
            "initial state has {} entries, model expects {}",
            x0.len(),
            spec.state_dim
        )));
    }
    if let Some(k) = inputs.iter().position(|u| u.len() != spec.input_dim) {
        return Err(Error::InvalidData(format!(
            "input {k} has {} entries, model expects {}",
            inputs[k].len(),
            spec.input_dim
        )));
    }
    let (a, b) = (model.a(), model.b());
    let mut theta = lifting::lift_state(x0, spec)?;
    let mut states = Vec::with_capacity(inputs.len());
    let mut lifted = Vec::with_capacity(inputs.len());
    for u in inputs {
        let x = lifting::retract_state(&theta, spec.state_dim)?;
        let upsilon = lifting::lift_input(&x, u, spec)?;
        let mut next = &a * &theta + &b * upsilon;
        let x_next = lifting::retract_state(&next, spec.state_dim)?;
        if mode == PredictionMode::Relift {
            next = lifting::lift_state(&x_next, spec)?;
        }
        states.push(x_next);
        lifted.push(next.clone());
        theta = next;
    }
    Ok(PredictionResult { states, lifted, mode })
}

/// One-step residuals `Θ₊ − U Ψ` on the lifted snapshots of `data`.
pub fn residuals<T: Scalar>(model: &KoopmanModel<T>, data: &SnapshotDataset<T>) -> Result<DMatrix<T>> {
    let lm = lifting::build_snapshots(data, model.lifting())?;
    if lm.q() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(&lm.theta_plus - model.u() * &lm.psi)
}

/// `(1/q) ‖Θ₊ − U Ψ‖_F²`.
pub fn score<T: Scalar>(model: &KoopmanModel<T>, data: &SnapshotDataset<T>) -> Result<T> {
    let r = residuals(model, data)?;
    Ok(r.norm_squared() / T::from_usize(r.ncols()).unwrap())
}
