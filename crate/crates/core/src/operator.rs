//! Dense complex operators on small Hilbert spaces.
//!
//! Everything in the crate (states, POVM elements, witnesses, Kraus
//! operators) is a [`ComplexOperator`]: a square, row-major matrix of
//! `Complex64` entries. Dimensions stay below ~100, so the routines here are
//! plain loops; the only heavy lifting is the Hermitian eigensolver, which is
//! closed-form for 2x2 and delegates to `nalgebra` otherwise.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance on `max |A - A^dag|` for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalue floor used by every positivity check.
pub const PSD_FLOOR: f64 = -1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator {
    dim: usize,
    entries: Vec<C64>,
}

impl ComplexOperator {
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::BadLength {
                dim,
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    /// Builds an operator from real entries given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<C64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::new(dim, entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out[(i, i)] = ONE;
        }
        out
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            out[(i, i)] = C64::new(d, 0.0);
        }
        out
    }

    /// `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        let dim = u.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for a in u {
            for b in v {
                entries.push(a * b.conj());
            }
        }
        Self { dim, entries }
    }

    /// Rank-one projector `|v><v|` (the vector is used as given).
    pub fn projector(v: &[C64]) -> Self {
        Self::outer(v, v)
    }

    /// Operator whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let dim = columns.len();
        let mut out = Self::zeros(dim.max(1));
        for (j, col) in columns.iter().enumerate() {
            if col.len() != dim {
                return Err(Error::DimensionMismatch(dim, col.len()));
            }
            for (i, &z) in col.iter().enumerate() {
                out[(i, j)] = z;
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`, in place. Panics on dimension mismatch.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!(self.dim, other.dim, "dimension mismatch in add_scaled");
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += b * s;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matmul");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        out
    }

    /// `A v`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|j| self.entries[i * n + j] * v[j]).sum())
            .collect()
    }

    /// `<v|A|v>` (complex; real for Hermitian `A`).
    pub fn sandwich(&self, v: &[C64]) -> C64 {
        let av = self.apply(v);
        v.iter().zip(&av).map(|(a, b)| a.conj() * b).sum()
    }

    /// `<u|A|v>`.
    pub fn matrix_element(&self, u: &[C64], v: &[C64]) -> C64 {
        let av = self.apply(v);
        u.iter().zip(&av).map(|(a, b)| a.conj() * b).sum()
    }

    /// `U^dag A U`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.adjoint().matmul(self).matmul(u)
    }

    /// Hilbert-Schmidt inner product `Tr(A^dag B)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.entries[i * n + j] * other.entries[j * n + i];
            }
        }
        acc
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_hermitian_deviation() <= tol
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let max_deviation = self.max_hermitian_deviation();
        if max_deviation <= HERMITIAN_TOL {
            Ok(())
        } else {
            Err(Error::NotHermitian { max_deviation })
        }
    }

    /// `(A + A^dag) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Validates that the operator is a density operator: Hermitian, unit
    /// trace within 1e-9, eigenvalues above [`PSD_FLOOR`].
    pub fn check_density(&self) -> Result<()> {
        self.check_hermitian()?;
        let tr = self.trace().re;
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::BadTrace { trace: tr });
        }
        let min = eigh(self)?.values[0];
        if min < PSD_FLOOR {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(())
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }
}

impl Index<(usize, usize)> for ComplexOperator {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.entries[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexOperator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.entries[i * self.dim + j]
    }
}

impl Add for &ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: &ComplexOperator) -> ComplexOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add");
        ComplexOperator {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: &ComplexOperator) -> ComplexOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sub");
        ComplexOperator {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &ComplexOperator {
    type Output = ComplexOperator;
    fn neg(self) -> ComplexOperator {
        self.scale(-1.0)
    }
}

impl Mul for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: &ComplexOperator) -> ComplexOperator {
        self.matmul(rhs)
    }
}

impl Mul<&ComplexOperator> for f64 {
    type Output = ComplexOperator;
    fn mul(self, rhs: &ComplexOperator) -> ComplexOperator {
        rhs.scale(self)
    }
}

/// Pauli matrices and friends.
pub mod pauli {
    use super::*;

    pub fn x() -> ComplexOperator {
        ComplexOperator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn y() -> ComplexOperator {
        ComplexOperator::new(2, vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO])
            .unwrap()
    }

    pub fn z() -> ComplexOperator {
        ComplexOperator::from_diagonal(&[1.0, -1.0])
    }

    /// `[sigma_x, sigma_y, sigma_z]`.
    pub fn all() -> [ComplexOperator; 3] {
        [x(), y(), z()]
    }
}

/// Tensor product. Entry `((i1 db + i2), (j1 db + j2)) = a(i1,j1) b(i2,j2)`.
pub fn kron(a: &ComplexOperator, b: &ComplexOperator) -> ComplexOperator {
    let (da, db) = (a.dim, b.dim);
    let n = da * db;
    let mut entries = vec![ZERO; n * n];
    for i1 in 0..da {
        for j1 in 0..da {
            let x = a.entries[i1 * da + j1];
            if x == ZERO {
                continue;
            }
            for i2 in 0..db {
                let row = (i1 * db + i2) * n + j1 * db;
                for j2 in 0..db {
                    entries[row + j2] = x * b.entries[i2 * db + j2];
                }
            }
        }
    }
    ComplexOperator { dim: n, entries }
}

/// Tensor product of a list of operators, left to right.
pub fn kron_all<'a, I>(ops: I) -> ComplexOperator
where
    I: IntoIterator<Item = &'a ComplexOperator>,
{
    let mut iter = ops.into_iter();
    let first = iter.next().expect("kron_all needs at least one operator").clone();
    iter.fold(first, |acc, op| kron(&acc, op))
}

/// Tensor product of state vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Spectral decomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Eigh {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: ComplexOperator,
}

impl Eigh {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    /// `V f(Lambda) V^dag`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexOperator {
        let n = self.values.len();
        let mut out = ComplexOperator::zeros(n);
        for (k, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors[(i, k)] * fl;
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)].conj();
                }
            }
        }
        out
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
///
/// Degenerate eigenvalues keep the solver's column order, so ties resolve to
/// the same vector on every call.
pub fn eigh(h: &ComplexOperator) -> Result<Eigh> {
    h.check_hermitian()?;
    Ok(eigh_unchecked(h))
}

pub(crate) fn eigh_unchecked(h: &ComplexOperator) -> Eigh {
    if h.dim == 1 {
        return Eigh {
            values: vec![h.entries[0].re],
            vectors: ComplexOperator::identity(1),
        };
    }
    if h.dim == 2 {
        return eigh_2x2(h);
    }
    let herm = h.hermitian_part();
    let decomposition = herm.to_nalgebra().symmetric_eigen();
    let n = h.dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a]
            .partial_cmp(&decomposition.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| decomposition.eigenvalues[k]).collect();
    let mut vectors = ComplexOperator::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, col)] = decomposition.eigenvectors[(i, k)];
        }
    }
    Eigh { values, vectors }
}

fn eigh_2x2(h: &ComplexOperator) -> Eigh {
    let a = h.entries[0].re;
    let d = h.entries[3].re;
    let b = (h.entries[1] + h.entries[2].conj()) * 0.5;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    let (lo, hi) = (mean - r, mean + r);
    let bn = b.norm();
    let vectors = if bn <= f64::EPSILON * (a.abs() + d.abs()).max(1e-300) {
        if a <= d {
            ComplexOperator::identity(2)
        } else {
            ComplexOperator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
        }
    } else {
        // (b, lam - a) is an eigenvector for eigenvalue lam; pick the better
        // conditioned of the two equivalent forms for each eigenvalue.
        let vec_for = |lam: f64| -> [C64; 2] {
            let v1 = [b, C64::new(lam - a, 0.0)];
            let v2 = [C64::new(lam - d, 0.0), b.conj()];
            let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
            let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
            if n1 >= n2 {
                [v1[0] / n1, v1[1] / n1]
            } else {
                [v2[0] / n2, v2[1] / n2]
            }
        };
        let u = vec_for(lo);
        let w = vec_for(hi);
        ComplexOperator {
            dim: 2,
            entries: vec![u[0], w[0], u[1], w[1]],
        }
    };
    Eigh {
        values: vec![lo, hi],
        vectors,
    }
}

/// Hilbert-Schmidt norm `sqrt(Tr(A^dag A))`.
pub fn hs_norm(a: &ComplexOperator) -> f64 {
    a.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest eigenvalue and a unit eigenvector for it.
pub fn min_eig_vector(h: &ComplexOperator) -> Result<(f64, Vec<C64>)> {
    let e = eigh(h)?;
    Ok((e.values[0], e.vector(0)))
}

pub(crate) fn min_eig_vector_unchecked(h: &ComplexOperator) -> (f64, Vec<C64>) {
    let e = eigh_unchecked(h);
    (e.values[0], e.vector(0))
}

/// Nearest positive semidefinite operator in Hilbert-Schmidt norm
/// (negative eigenvalues clipped to zero).
pub fn psd_project(h: &ComplexOperator) -> Result<ComplexOperator> {
    h.check_hermitian()?;
    Ok(psd_project_unchecked(h))
}

pub(crate) fn psd_project_unchecked(h: &ComplexOperator) -> ComplexOperator {
    let e = eigh_unchecked(h);
    if e.values[0] >= 0.0 {
        return h.hermitian_part();
    }
    e.reconstruct_with(|x| x.max(0.0))
}

/// Unitary `exp(i t H)` for Hermitian `H`.
pub fn expi_hermitian(h: &ComplexOperator, t: f64) -> Result<ComplexOperator> {
    let e = eigh(h)?;
    let n = h.dim;
    let mut out = ComplexOperator::zeros(n);
    for (k, &lam) in e.values.iter().enumerate() {
        let phase = C64::from_polar(1.0, t * lam);
        for i in 0..n {
            let vik = e.vectors[(i, k)] * phase;
            for j in 0..n {
                out[(i, j)] += vik * e.vectors[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

pub(crate) fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn normalize(v: &mut [C64]) {
    let n = vec_norm(v);
    for z in v.iter_mut() {
        *z /= n;
    }
}
