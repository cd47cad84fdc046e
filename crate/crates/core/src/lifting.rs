//! Lifting functions and snapshot-matrix assembly.
//!
//! The state lifting is the vector of all monomials of the state of total
//! degree `1..=degree`, enumerated in graded lexicographic order, so the raw
//! state always occupies the first `m` entries. The input lifting is either
//! the input itself or the input followed by all products `x_i * u_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputLifting {
    /// `υ(x, u) = u`
    #[default]
    Identity,
    /// `υ(x, u) = (u, x_0 u_0, x_0 u_1, …, x_{m-1} u_{n-1})`
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftingSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub degree: usize,
    #[serde(default)]
    pub input_lifting: InputLifting,
    /// Appends a constant `1` after the monomials when set.
    #[serde(default)]
    pub constant: bool,
}

impl LiftingSpec {
    pub fn new(state_dim: usize, input_dim: usize, degree: usize, input_lifting: InputLifting) -> Result<Self> {
        let spec = LiftingSpec { state_dim, input_dim, degree, input_lifting, constant: false };
        spec.validate()?;
        Ok(spec)
    }

    /// Identity lifting of both state and input.
    pub fn linear(state_dim: usize, input_dim: usize) -> Self {
        LiftingSpec { state_dim, input_dim, degree: 1, input_lifting: InputLifting::Identity, constant: false }
    }

    pub fn with_constant(mut self, constant: bool) -> Self {
        self.constant = constant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::InvalidParameter("state dimension must be at least 1".into()));
        }
        if self.degree == 0 {
            return Err(Error::InvalidParameter("lifting degree must be at least 1".into()));
        }
        Ok(())
    }

    /// Exponent tuples of the state monomials, graded lexicographic.
    /// Each monomial is stored as the sorted list of variable indices it
    /// multiplies, e.g. `[0, 1]` is `x_0 x_1`.
    pub fn monomials(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for deg in 1..=self.degree {
            let mut idx = vec![0usize; deg];
            loop {
                out.push(idx.clone());
                // next non-decreasing index tuple
                let mut pos = deg;
                while pos > 0 && idx[pos - 1] == self.state_dim - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                let v = idx[pos - 1] + 1;
                for slot in idx.iter_mut().skip(pos - 1) {
                    *slot = v;
                }
            }
        }
        out
    }

    /// Lifted state dimension `p_ϑ`.
    pub fn p_theta(&self) -> usize {
        // C(m + d, d) − 1 monomials, plus the optional constant
        let (m, d) = (self.state_dim, self.degree);
        let mut binom: usize = 1;
        for k in 1..=d {
            binom = binom * (m + k) / k;
        }
        binom - 1 + usize::from(self.constant)
    }

    /// Lifted input dimension `p_υ`.
    pub fn p_upsilon(&self) -> usize {
        match self.input_lifting {
            InputLifting::Identity => self.input_dim,
            InputLifting::Bilinear => self.input_dim * (1 + self.state_dim),
        }
    }

    /// Full lifted dimension `p = p_ϑ + p_υ`.
    pub fn p(&self) -> usize {
        self.p_theta() + self.p_upsilon()
    }
}

/// Lifted state `ϑ(x)`.
pub fn lift_state<T: Scalar>(x: &DVector<T>, spec: &LiftingSpec) -> Result<DVector<T>> {
    if x.len() != spec.state_dim {
        return Err(Error::InvalidData(format!("state has {} entries, lifting expects {}", x.len(), spec.state_dim)));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData("state contains non-finite values".into()));
    }
    let mut out: Vec<T> =
        spec.monomials().iter().map(|mono| mono.iter().fold(T::one(), |acc, &i| acc * x[i])).collect();
    if spec.constant {
        out.push(T::one());
    }
    Ok(DVector::from_vec(out))
}

/// Lifted input `υ(x, u)`.
pub fn lift_input<T: Scalar>(x: &DVector<T>, u: &DVector<T>, spec: &LiftingSpec) -> Result<DVector<T>> {
    if u.len() != spec.input_dim || x.len() != spec.state_dim {
        return Err(Error::InvalidData(format!(
            "pair has dimensions ({}, {}), lifting expects ({}, {})",
            x.len(),
            u.len(),
            spec.state_dim,
            spec.input_dim
        )));
    }
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData("input contains non-finite values".into()));
    }
    let mut out: Vec<T> = u.iter().copied().collect();
    if spec.input_lifting == InputLifting::Bilinear {
        for i in 0..spec.state_dim {
            for j in 0..spec.input_dim {
                out.push(x[i] * u[j]);
            }
        }
    }
    Ok(DVector::from_vec(out))
}

/// `ψ(x, u) = [ϑ(x); υ(x, u)]`.
pub fn lift_pair<T: Scalar>(x: &DVector<T>, u: &DVector<T>, spec: &LiftingSpec) -> Result<DVector<T>> {
    let theta = lift_state(x, spec)?;
    let upsilon = lift_input(x, u, spec)?;
    let mut out = Vec::with_capacity(theta.len() + upsilon.len());
    out.extend(theta.iter().copied());
    out.extend(upsilon.iter().copied());
    Ok(DVector::from_vec(out))
}

/// Recovers the state from a lifted state (its first `state_dim` entries).
pub fn retract_state<T: Scalar>(theta: &DVector<T>, state_dim: usize) -> Result<DVector<T>> {
    if theta.len() < state_dim {
        return Err(Error::InvalidData(format!("lifted state has {} entries, need at least {state_dim}", theta.len())));
    }
    Ok(theta.rows(0, state_dim).into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode<T: Scalar> {
    pub states: Vec<DVector<T>>,
    /// One input per transition; empty when the system has no inputs.
    pub inputs: Vec<DVector<T>>,
}

impl<T: Scalar> Episode<T> {
    pub fn new(states: Vec<DVector<T>>, inputs: Vec<DVector<T>>) -> Self {
        Episode { states, inputs }
    }

    pub fn transitions(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Input applied at step `k`, or the empty vector for autonomous data.
    pub fn input(&self, k: usize) -> DVector<T> {
        self.inputs.get(k).cloned().unwrap_or_else(|| DVector::zeros(0))
    }
}

/// Episodic state/input data.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset<T: Scalar> {
    pub state_dim: usize,
    pub input_dim: usize,
    pub episodes: Vec<Episode<T>>,
}

impl<T: Scalar> SnapshotDataset<T> {
    pub fn new(state_dim: usize, input_dim: usize, episodes: Vec<Episode<T>>) -> Result<Self> {
        let ds = SnapshotDataset { state_dim, input_dim, episodes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for (e, ep) in self.episodes.iter().enumerate() {
            if ep.states.len() < 2 {
                return Err(Error::InvalidData(format!("episode {e} has fewer than two states")));
            }
            if let Some(x) = ep.states.iter().find(|x| x.len() != self.state_dim) {
                return Err(Error::InvalidData(format!(
                    "episode {e} has a state of dimension {}, expected {}",
                    x.len(),
                    self.state_dim
                )));
            }
            if self.input_dim > 0 {
                if ep.inputs.len() != ep.states.len() - 1 {
                    return Err(Error::InvalidData(format!(
                        "episode {e} has {} inputs for {} states",
                        ep.inputs.len(),
                        ep.states.len()
                    )));
                }
                if ep.inputs.iter().any(|u| u.len() != self.input_dim) {
                    return Err(Error::InvalidData(format!("episode {e} has an input of wrong dimension")));
                }
            }
        }
        Ok(())
    }

    pub fn num_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::transitions).sum()
    }
}

/// Lifted snapshot matrices `Ψ` (p × q) and `Θ₊` (p_ϑ × q).
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrices<T: Scalar> {
    pub psi: DMatrix<T>,
    pub theta_plus: DMatrix<T>,
    pub lifting: LiftingSpec,
}

impl<T: Scalar> LiftedMatrices<T> {
    pub fn p(&self) -> usize {
        self.psi.nrows()
    }

    pub fn p_theta(&self) -> usize {
        self.theta_plus.nrows()
    }

    pub fn p_upsilon(&self) -> usize {
        self.p() - self.p_theta()
    }

    pub fn q(&self) -> usize {
        self.psi.ncols()
    }
}

/// Assembles `Ψ` and `Θ₊` episode by episode; no column pair straddles an
/// episode boundary.
pub fn build_snapshots<T: Scalar>(data: &SnapshotDataset<T>, spec: &LiftingSpec) -> Result<LiftedMatrices<T>> {
    spec.validate()?;
    data.validate()?;
    if data.state_dim != spec.state_dim || data.input_dim != spec.input_dim {
        return Err(Error::InvalidData(format!(
            "dataset dimensions ({}, {}) do not match lifting ({}, {})",
            data.state_dim, data.input_dim, spec.state_dim, spec.input_dim
        )));
    }
    let q = data.num_transitions();
    let (p, p_theta) = (spec.p(), spec.p_theta());
    let mut psi = DMatrix::zeros(p, q);
    let mut theta_plus = DMatrix::zeros(p_theta, q);
    let mut col = 0;
    for ep in &data.episodes {
        let mut next_theta = lift_state(&ep.states[0], spec)?;
        for k in 0..ep.transitions() {
            let x = &ep.states[k];
            let theta = next_theta;
            next_theta = lift_state(&ep.states[k + 1], spec)?;
            let upsilon = lift_input(x, &ep.input(k), spec)?;
            psi.view_mut((0, col), (p_theta, 1)).copy_from(&theta);
            psi.view_mut((p_theta, col), (p - p_theta, 1)).copy_from(&upsilon);
            theta_plus.set_column(col, &next_theta);
            col += 1;
        }
    }
    Ok(LiftedMatrices { psi, theta_plus, lifting: spec.clone() })
}
