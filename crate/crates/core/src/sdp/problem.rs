use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::expr::{AffineExpr, LinearForm, VarId, VarShape, Variable};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// An affine symmetric matrix required to be positive semidefinite. Strict
/// constraints are shifted by the problem's margin: `expr ⪰ ε I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint<T: Scalar> {
    pub name: String,
    pub expr: AffineExpr<T>,
    pub strict: bool,
}

/// Bookkeeping for problems built by the regression formulations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionLayout {
    pub u: VarId,
    pub w: Option<VarId>,
    pub nu: Option<VarId>,
    pub gamma: Option<VarId>,
    pub p_theta: usize,
    pub p: usize,
    pub q: usize,
    pub extra: ExtraKind,
    pub stability: bool,
}

/// Which regularizer beyond Tikhonov has been added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtraKind {
    None,
    TwoNorm,
    Nuclear,
    HInfinity,
}

/// Semidefinite program with a linear objective and affine PSD constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem<T: Scalar> {
    variables: Vec<Variable>,
    num_scalars: usize,
    objective: LinearForm<T>,
    constraints: Vec<LmiConstraint<T>>,
    equalities: Vec<(String, LinearForm<T>)>,
    margin: T,
    pub(crate) layout: Option<RegressionLayout>,
}

impl<T: Scalar> SdpProblem<T> {
    pub fn new(margin: T) -> Self {
        SdpProblem {
            variables: Vec::new(),
            num_scalars: 0,
            objective: LinearForm::default(),
            constraints: Vec::new(),
            equalities: Vec::new(),
            margin: margin.max(T::zero()),
            layout: None,
        }
    }

    pub fn add_variable(&mut self, name: &str, shape: VarShape) -> Result<VarId> {
        if self.variables.iter().any(|v| v.name == name) {
            return Err(Error::Formulation(format!("variable `{name}` declared twice")));
        }
        let id = VarId(self.variables.len());
        self.variables.push(Variable { name: name.to_string(), shape, offset: self.num_scalars });
        self.num_scalars += shape.len();
        Ok(id)
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn variable_by_name(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_scalars(&self) -> usize {
        self.num_scalars
    }

    /// The variable as an affine expression.
    pub fn expr(&self, id: VarId) -> AffineExpr<T> {
        AffineExpr::var(self.variable(id))
    }

    pub fn objective(&self) -> &LinearForm<T> {
        &self.objective
    }

    pub fn add_objective(&mut self, form: &LinearForm<T>) -> Result<()> {
        self.check_indices(form.coeffs.keys().copied(), "objective")?;
        self.objective.add(form);
        Ok(())
    }

    pub fn constraints(&self) -> &[LmiConstraint<T>] {
        &self.constraints
    }

    pub fn add_constraint(&mut self, name: &str, expr: AffineExpr<T>, strict: bool) -> Result<()> {
        if expr.rows() != expr.cols() {
            return Err(Error::Formulation(format!("constraint `{name}` is not square")));
        }
        let scale = expr.constant.amax().max(T::one());
        if !expr.is_symmetric(T::lit(1e-12) * scale) {
            return Err(Error::Formulation(format!("constraint `{name}` is not symmetric")));
        }
        self.check_indices(expr.terms.keys().copied(), name)?;
        let mut expr = expr.compact();
        expr.constant = linalg::symmetrize(&expr.constant);
        self.constraints.push(LmiConstraint { name: name.to_string(), expr, strict });
        Ok(())
    }

    pub fn equalities(&self) -> &[(String, LinearForm<T>)] {
        &self.equalities
    }

    /// Adds the linear equality `form = 0`.
    pub fn add_equality(&mut self, name: &str, form: LinearForm<T>) -> Result<()> {
        self.check_indices(form.coeffs.keys().copied(), name)?;
        self.equalities.push((name.to_string(), form));
        Ok(())
    }

    pub fn margin(&self) -> T {
        self.margin
    }

    pub fn set_margin(&mut self, margin: T) {
        self.margin = margin.max(T::zero());
    }

    /// Shift applied to constraint `c` when lowered.
    pub fn shift_of(&self, c: &LmiConstraint<T>) -> T {
        if c.strict {
            self.margin
        } else {
            T::zero()
        }
    }

    pub fn layout(&self) -> Option<&RegressionLayout> {
        self.layout.as_ref()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.evaluate(x)
    }

    /// Minimum eigenvalue of every constraint block at `x` (before any margin).
    pub fn constraint_min_eigenvalues(&self, x: &[T]) -> Vec<T> {
        self.constraints.iter().map(|c| linalg::min_eigenvalue(&c.expr.evaluate(x))).collect()
    }

    /// Whether `x` satisfies every constraint including its strictness margin,
    /// up to `tol`.
    pub fn is_feasible(&self, x: &[T], tol: T) -> bool {
        self.constraints.iter().zip(self.constraint_min_eigenvalues(x)).all(|(c, lam)| lam >= self.shift_of(c) - tol)
            && self.equalities.iter().all(|(_, f)| f.evaluate(x).abs() <= tol)
    }

    /// Human-readable dump: variable table, objective, and every constraint
    /// block as dense constant and coefficient matrices.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# SDP problem: {} scalar variables, margin {}", self.num_scalars, self.margin);
        let _ = writeln!(s, "## variables");
        for v in &self.variables {
            let (r, c) = v.shape.dims();
            let kind = match v.shape {
                VarShape::Matrix { .. } => "matrix",
                VarShape::Symmetric(_) => "symmetric",
                VarShape::Scalar => "scalar",
            };
            let _ =
                writeln!(s, "{:<8} {kind:<9} {r}x{c}  scalars [{}, {})", v.name, v.offset, v.offset + v.shape.len());
        }
        let _ = writeln!(s, "## objective");
        let _ = writeln!(s, "constant {}", self.objective.constant);
        for (&k, &v) in &self.objective.coeffs {
            let _ = writeln!(s, "  {} {v}", self.scalar_label(k));
        }
        for (name, f) in &self.equalities {
            let _ = writeln!(s, "## equality {name}: constant {}", f.constant);
            for (&k, &v) in &f.coeffs {
                let _ = writeln!(s, "  {} {v}", self.scalar_label(k));
            }
        }
        for c in &self.constraints {
            let rel = if c.strict { "> 0 (shifted by margin)" } else { ">= 0" };
            let _ = writeln!(s, "## constraint {} ({}x{}) {rel}", c.name, c.expr.rows(), c.expr.cols());
            let _ = writeln!(s, "constant:");
            write_matrix(&mut s, &c.expr.constant);
            for &k in c.expr.terms.keys() {
                let _ = writeln!(s, "coefficient of {}:", self.scalar_label(k));
                write_matrix(&mut s, &c.expr.coefficient(k));
            }
        }
        s
    }

    /// `name[i,j]` label of a flattened scalar index.
    pub fn scalar_label(&self, k: usize) -> String {
        for v in &self.variables {
            if k >= v.offset && k < v.offset + v.shape.len() {
                let (rows, cols) = v.shape.dims();
                for i in 0..rows {
                    for j in 0..cols {
                        if v.index(i, j) == k && (!matches!(v.shape, VarShape::Symmetric(_)) || i <= j) {
                            return if v.shape == VarShape::Scalar {
                                v.name.clone()
                            } else {
                                format!("{}[{i},{j}]", v.name)
                            };
                        }
                    }
                }
            }
        }
        format!("x{k}")
    }

    fn check_indices(&self, mut keys: impl Iterator<Item = usize>, what: &str) -> Result<()> {
        if let Some(k) = keys.find(|&k| k >= self.num_scalars) {
            return Err(Error::Formulation(format!("`{what}` references undeclared scalar {k}")));
        }
        Ok(())
    }
}

fn write_matrix<T: Scalar>(s: &mut String, m: &DMatrix<T>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:>12.6e}", m[(i, j)].as_f64())).collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    /// The objective is unbounded below on the feasible set.
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SdpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIterations => "max_iterations",
            SdpStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarValue<T: Scalar> {
    Scalar(T),
    Matrix(DMatrix<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution<T: Scalar> {
    pub status: SdpStatus,
    pub objective: T,
    pub values: BTreeMap<String, VarValue<T>>,
    /// Flattened variable vector.
    pub x: Vec<T>,
    pub iterations: usize,
    /// Relative primal-dual objective gap at termination.
    pub duality_gap: T,
    pub primal_residual: T,
    pub dual_residual: T,
}

impl<T: Scalar> SdpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    pub fn matrix(&self, name: &str) -> Option<DMatrix<T>> {
        match self.values.get(name)? {
            VarValue::Matrix(m) => Some(m.clone()),
            VarValue::Scalar(s) => Some(DMatrix::from_element(1, 1, *s)),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<T> {
        match self.values.get(name)? {
            VarValue::Scalar(s) => Some(*s),
            VarValue::Matrix(m) if m.len() == 1 => Some(m[(0, 0)]),
            VarValue::Matrix(_) => None,
        }
    }

    pub(crate) fn from_vector(problem: &SdpProblem<T>, status: SdpStatus, x: Vec<T>) -> Self {
        let values = problem
            .variables()
            .iter()
            .map(|v| {
                let val = if v.shape == VarShape::Scalar {
                    VarValue::Scalar(x[v.offset])
                } else {
                    VarValue::Matrix(v.unflatten(&x))
                };
                (v.name.clone(), val)
            })
            .collect();
        SdpSolution {
            status,
            objective: problem.objective_value(&x),
            values,
            x,
            iterations: 0,
            duality_gap: T::zero(),
            primal_residual: T::zero(),
            dual_residual: T::zero(),
        }
    }
}
