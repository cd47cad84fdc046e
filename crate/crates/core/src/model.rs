use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lifting::LiftingSpec;
use crate::scalar::Scalar;

/// Koopman matrix `U = [A B]` with the lifted LTI system it induces.
///
/// The output map defaults to `C = I`, `D = 0`, i.e. the whole lifted state
/// is the system output.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel<T: Scalar> {
    u: DMatrix<T>,
    lifting: LiftingSpec,
    c: DMatrix<T>,
    d: DMatrix<T>,
}

impl<T: Scalar> KoopmanModel<T> {
    pub fn new(u: DMatrix<T>, lifting: LiftingSpec) -> Result<Self> {
        let (p_theta, p) = (lifting.p_theta(), lifting.p());
        if u.shape() != (p_theta, p) {
            return Err(Error::InvalidData(format!(
                "Koopman matrix is {}x{}, lifting requires {p_theta}x{p}",
                u.nrows(),
                u.ncols()
            )));
        }
        let c = DMatrix::identity(p_theta, p_theta);
        let d = DMatrix::zeros(p_theta, p - p_theta);
        Ok(KoopmanModel { u, lifting, c, d })
    }

    /// Replaces the output map. `C` must have `p_ϑ` columns and `D` must
    /// have `p_υ` columns and as many rows as `C`.
    pub fn with_output(mut self, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        if c.ncols() != self.p_theta() || d.ncols() != self.p_upsilon() || c.nrows() != d.nrows() {
            return Err(Error::InvalidData("output matrices C, D have inconsistent dimensions".into()));
        }
        self.c = c;
        self.d = d;
        Ok(self)
    }

    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn a(&self) -> DMatrix<T> {
        self.u.columns(0, self.p_theta()).into_owned()
    }

    pub fn b(&self) -> DMatrix<T> {
        self.u.columns(self.p_theta(), self.p_upsilon()).into_owned()
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn lifting(&self) -> &LiftingSpec {
        &self.lifting
    }

    pub fn p_theta(&self) -> usize {
        self.lifting.p_theta()
    }

    pub fn p_upsilon(&self) -> usize {
        self.lifting.p_upsilon()
    }
}
