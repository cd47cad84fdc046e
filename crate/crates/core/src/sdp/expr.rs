//! Affine matrix expressions over flattened scalar decision variables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Shape of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// General `rows × cols` matrix, flattened row-major.
    Matrix {
        rows: usize,
        cols: usize,
    },
    /// Symmetric `n × n` matrix, flattened as its upper triangle row by row.
    Symmetric(usize),
    Scalar,
}

impl VarShape {
    pub fn len(&self) -> usize {
        match *self {
            VarShape::Matrix { rows, cols } => rows * cols,
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Matrix { rows, cols } => (rows, cols),
            VarShape::Symmetric(n) => (n, n),
            VarShape::Scalar => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub shape: VarShape,
    /// Position of the first scalar of this variable in the flattened vector.
    pub offset: usize,
}

impl Variable {
    /// Flattened index of entry `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.shape {
            VarShape::Matrix { cols, .. } => self.offset + i * cols + j,
            VarShape::Symmetric(n) => {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                // r*n − r(r−1)/2 entries precede row r
                self.offset + r * n - r * r.saturating_sub(1) / 2 + (c - r)
            }
            VarShape::Scalar => self.offset,
        }
    }

    /// Rebuilds the matrix value of this variable from the flattened vector.
    pub fn unflatten<T: Scalar>(&self, x: &[T]) -> DMatrix<T> {
        let (rows, cols) = self.shape.dims();
        DMatrix::from_fn(rows, cols, |i, j| x[self.index(i, j)])
    }
}

/// Coefficient entries `(row, col, value)` of one scalar variable.
pub type Entries<T> = Vec<(usize, usize, T)>;

/// `constant + Σ_k x_k · F_k` with sparse coefficient matrices `F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr<T: Scalar> {
    pub constant: DMatrix<T>,
    pub terms: BTreeMap<usize, Entries<T>>,
}

impl<T: Scalar> AffineExpr<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AffineExpr { constant: DMatrix::zeros(rows, cols), terms: BTreeMap::new() }
    }

    pub fn constant(m: DMatrix<T>) -> Self {
        AffineExpr { constant: m, terms: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// The variable itself as a matrix expression.
    pub fn var(v: &Variable) -> Self {
        let (rows, cols) = v.shape.dims();
        let mut e = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                e.terms.entry(v.index(i, j)).or_default().push((i, j, T::one()));
            }
        }
        e
    }

    /// `s · I_n` for a scalar variable `s`.
    pub fn scaled_identity(v: &Variable, n: usize) -> Self {
        assert_eq!(v.shape, VarShape::Scalar, "scaled identity needs a scalar variable");
        let mut e = Self::zeros(n, n);
        e.terms.insert(v.offset, (0..n).map(|k| (k, k, T::one())).collect());
        e
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn transpose(&self) -> Self {
        AffineExpr {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(&k, es)| (k, es.iter().map(|&(r, c, v)| (c, r, v)).collect())).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        AffineExpr {
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(&k, es)| (k, es.iter().map(|&(r, c, v)| (r, c, v * s)).collect())).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.constant.shape(), other.constant.shape(), "shape mismatch in affine sum");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&k, es) in &other.terms {
            out.terms.entry(k).or_default().extend(es.iter().copied());
        }
        out.compact()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    /// Columns `start .. start + n`.
    pub fn columns(&self, start: usize, n: usize) -> Self {
        let constant = self.constant.columns(start, n).into_owned();
        let mut terms = BTreeMap::new();
        for (&k, es) in &self.terms {
            let kept: Entries<T> = es
                .iter()
                .filter(|&&(_, c, _)| c >= start && c < start + n)
                .map(|&(r, c, v)| (r, c - start, v))
                .collect();
            if !kept.is_empty() {
                terms.insert(k, kept);
            }
        }
        AffineExpr { constant, terms }
    }

    /// `self · M`.
    pub fn mul_right(&self, m: &DMatrix<T>) -> Self {
        assert_eq!(self.cols(), m.nrows(), "shape mismatch in right product");
        let mut out = AffineExpr::constant(&self.constant * m);
        for (&k, es) in &self.terms {
            let mut new = Entries::new();
            for &(r, c, v) in es {
                for j in 0..m.ncols() {
                    let w = m[(c, j)];
                    if w != T::zero() {
                        new.push((r, j, v * w));
                    }
                }
            }
            out.terms.insert(k, new);
        }
        out.compact()
    }

    /// `M · self`.
    pub fn mul_left(&self, m: &DMatrix<T>) -> Self {
        self.transpose().mul_right(&m.transpose()).transpose()
    }

    /// `tr(self)` as a 1×1 expression.
    pub fn trace(&self) -> Self {
        assert_eq!(self.rows(), self.cols(), "trace of a non-square expression");
        let mut out = AffineExpr::constant(DMatrix::from_element(1, 1, self.constant.trace()));
        for (&k, es) in &self.terms {
            let diag: Entries<T> = es.iter().filter(|e| e.0 == e.1).map(|&(_, _, v)| (0, 0, v)).collect();
            if !diag.is_empty() {
                out.terms.insert(k, diag);
            }
        }
        out.compact()
    }

    /// Frobenius inner product `⟨M, self⟩` as a linear form.
    pub fn inner(&self, m: &DMatrix<T>) -> LinearForm<T> {
        assert_eq!(self.constant.shape(), m.shape(), "shape mismatch in inner product");
        let mut form = LinearForm::constant(self.constant.dot(m));
        for (&k, es) in &self.terms {
            let s = es.iter().fold(T::zero(), |acc, &(r, c, v)| acc + v * m[(r, c)]);
            form.add_term(k, s);
        }
        form
    }

    /// Interprets a 1×1 expression as a linear form.
    pub fn to_linear_form(&self) -> LinearForm<T> {
        assert_eq!(self.constant.shape(), (1, 1), "only 1x1 expressions are scalars");
        self.inner(&DMatrix::from_element(1, 1, T::one()))
    }

    /// Merges duplicate entries and drops exact zeros.
    pub fn compact(mut self) -> Self {
        let mut terms = BTreeMap::new();
        for (k, es) in std::mem::take(&mut self.terms) {
            let mut acc: BTreeMap<(usize, usize), T> = BTreeMap::new();
            for (r, c, v) in es {
                *acc.entry((r, c)).or_insert_with(T::zero) += v;
            }
            let merged: Entries<T> =
                acc.into_iter().filter(|(_, v)| *v != T::zero()).map(|((r, c), v)| (r, c, v)).collect();
            if !merged.is_empty() {
                terms.insert(k, merged);
            }
        }
        self.terms = terms;
        self
    }

    pub fn evaluate(&self, x: &[T]) -> DMatrix<T> {
        let mut m = self.constant.clone();
        for (&k, es) in &self.terms {
            for &(r, c, v) in es {
                m[(r, c)] += v * x[k];
            }
        }
        m
    }

    /// Dense coefficient matrix of scalar variable `k`.
    pub fn coefficient(&self, k: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.rows(), self.cols());
        if let Some(es) = self.terms.get(&k) {
            for &(r, c, v) in es {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Whether constant and every coefficient matrix are symmetric within `tol`.
    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.rows() != self.cols() {
            return false;
        }
        let const_ok = (&self.constant - self.constant.transpose()).amax() <= tol;
        const_ok
            && self.terms.keys().all(|&k| {
                let f = self.coefficient(k);
                (&f - f.transpose()).amax() <= tol
            })
    }

    /// Assembles a symmetric block matrix from its upper triangle: `blocks[i][j]`
    /// for `j >= i`; the lower triangle is filled with transposes and absent
    /// off-diagonal blocks are zero.
    pub fn symmetric_blocks(blocks: &[Vec<Option<AffineExpr<T>>>]) -> Self {
        let nb = blocks.len();
        let sizes: Vec<usize> =
            (0..nb).map(|i| blocks[i][i].as_ref().expect("diagonal blocks are required").rows()).collect();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let n: usize = sizes.iter().sum();
        let mut out = Self::zeros(n, n);
        for i in 0..nb {
            for j in i..nb {
                let Some(block) = blocks[i].get(j).and_then(|b| b.as_ref()) else { continue };
                assert_eq!((block.rows(), block.cols()), (sizes[i], sizes[j]), "block ({i},{j}) has wrong size");
                out.place(block, offsets[i], offsets[j]);
                if i != j {
                    out.place(&block.transpose(), offsets[j], offsets[i]);
                }
            }
        }
        out.compact()
    }

    fn place(&mut self, block: &Self, r0: usize, c0: usize) {
        self.constant.view_mut((r0, c0), (block.rows(), block.cols())).copy_from(&block.constant);
        for (&k, es) in &block.terms {
            self.terms.entry(k).or_default().extend(es.iter().map(|&(r, c, v)| (r + r0, c + c0, v)));
        }
    }
}

/// `constant + Σ_k coeffs[k] · x_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearForm<T: Scalar> {
    pub constant: T,
    pub coeffs: BTreeMap<usize, T>,
}

impl<T: Scalar> LinearForm<T> {
    pub fn constant(c: T) -> Self {
        LinearForm { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn add_term(&mut self, k: usize, v: T) {
        if v != T::zero() {
            *self.coeffs.entry(k).or_insert_with(T::zero) += v;
        }
    }

    pub fn add(&mut self, other: &LinearForm<T>) {
        self.constant += other.constant;
        for (&k, &v) in &other.coeffs {
            self.add_term(k, v);
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        LinearForm { constant: self.constant * s, coeffs: self.coeffs.iter().map(|(&k, &v)| (k, v * s)).collect() }
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.coeffs.iter().fold(self.constant, |acc, (&k, &v)| acc + v * x[k])
    }
}
