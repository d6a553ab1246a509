//! Target projective measurements, laboratory POVMs, infidelity, and the
//! tuned measurement produced by phase randomization in the target basis.
//!
//! Randomizing with `U = sum_k e^{i theta_k} |phi_k><phi_k|` before measuring
//! `{M_i}` is equivalent to measuring `{E[U^dag M_i U]}`. Every group used for
//! this averages the off-diagonal entries (in the target basis) to zero and
//! leaves the diagonal alone, so the three variants below all compute the
//! same POVM: they differ only in the averaging factor applied to entry
//! `(k, l)`, which is derived from the respective group.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operator::{hs_norm, inner, ComplexOperator, C64, PSD_FLOOR, ZERO};
use crate::operator::{eigh_unchecked, pauli};

/// Completeness residual allowed for `sum_i M_i = I` (HS norm).
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Orthonormality tolerance on target bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// The ideal projective measurement `{|phi_k><phi_k|}` with real outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMeasurement {
    basis: Vec<Vec<C64>>,
    outcomes: Vec<f64>,
}

impl TargetMeasurement {
    pub fn new(basis: Vec<Vec<C64>>, outcomes: Vec<f64>) -> Result<Self> {
        let d = basis.len();
        if d == 0 {
            return Err(Error::InvalidInput("empty basis".into()));
        }
        if outcomes.len() != d {
            return Err(Error::DimensionMismatch(d, outcomes.len()));
        }
        if let Some(bad) = outcomes.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite outcome {bad}")));
        }
        check_orthonormal(&basis)?;
        Ok(Self { basis, outcomes })
    }

    /// Computational basis with outcomes `0, 1, ..., d-1`.
    pub fn computational(d: usize) -> Self {
        let basis = (0..d)
            .map(|k| {
                let mut v = vec![ZERO; d];
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        Self {
            basis,
            outcomes: (0..d).map(|k| k as f64).collect(),
        }
    }

    /// Fourier basis `|f_k> = d^{-1/2} sum_l e^{+-2 pi i k l / d} |l>`;
    /// `conjugate` selects the minus sign.
    pub fn fourier(d: usize, conjugate: bool) -> Self {
        let sign = if conjugate { -1.0 } else { 1.0 };
        let norm = 1.0 / (d as f64).sqrt();
        let basis = (0..d)
            .map(|k| {
                (0..d)
                    .map(|l| C64::from_polar(norm, sign * 2.0 * PI * ((k * l) % d) as f64 / d as f64))
                    .collect()
            })
            .collect();
        Self {
            basis,
            outcomes: (0..d).map(|k| k as f64).collect(),
        }
    }

    /// Target for `sigma_z`: `{|0>, |1>}` with outcomes `+1, -1`.
    pub fn pauli_z() -> Self {
        let mut t = Self::computational(2);
        t.outcomes = vec![1.0, -1.0];
        t
    }

    /// Target for `sigma_x`: `{|+>, |->}` with outcomes `+1, -1`.
    pub fn pauli_x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            basis: vec![
                vec![C64::new(s, 0.0), C64::new(s, 0.0)],
                vec![C64::new(s, 0.0), C64::new(-s, 0.0)],
            ],
            outcomes: vec![1.0, -1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<C64>] {
        &self.basis
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn projector(&self, k: usize) -> ComplexOperator {
        ComplexOperator::projector(&self.basis[k])
    }

    pub fn projectors(&self) -> Vec<ComplexOperator> {
        (0..self.dim()).map(|k| self.projector(k)).collect()
    }

    /// Unitary whose columns are the basis vectors.
    pub fn basis_matrix(&self) -> ComplexOperator {
        ComplexOperator::from_columns(&self.basis).expect("square basis")
    }

    /// `sum_k lambda_k |phi_k><phi_k|`.
    pub fn observable(&self) -> ComplexOperator {
        let mut out = ComplexOperator::zeros(self.dim());
        for (k, &lam) in self.outcomes.iter().enumerate() {
            out.add_scaled(lam, &self.projector(k));
        }
        out
    }

    /// The ideal POVM `{P_k}`.
    pub fn ideal_povm(&self) -> Povm {
        Povm {
            elements: self.projectors(),
        }
    }

    /// `|<phi_k|psi>|^2` for every basis vector.
    pub fn populations(&self, psi: &[C64]) -> Vec<f64> {
        self.basis.iter().map(|phi| inner(phi, psi).norm_sqr()).collect()
    }

    /// `<phi_k| op |phi_l>`.
    pub fn element(&self, op: &ComplexOperator, k: usize, l: usize) -> C64 {
        op.matrix_element(&self.basis[k], &self.basis[l])
    }

    /// Rebuilds `sum_k diag[k] |phi_k><phi_k|`.
    pub fn diagonal_operator(&self, diag: &[f64]) -> ComplexOperator {
        let mut out = ComplexOperator::zeros(self.dim());
        for (k, &a) in diag.iter().enumerate() {
            if a != 0.0 {
                out.add_scaled(a, &self.projector(k));
            }
        }
        out
    }

    /// True when both targets have the same projectors (phases ignored).
    pub fn same_projectors(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .basis
                .iter()
                .zip(&other.basis)
                .all(|(a, b)| (inner(a, b).norm() - 1.0).abs() < 1e-10)
    }
}

fn check_orthonormal(basis: &[Vec<C64>]) -> Result<()> {
    let d = basis.len();
    let mut max_error = 0.0f64;
    for (j, u) in basis.iter().enumerate() {
        if u.len() != d {
            return Err(Error::DimensionMismatch(d, u.len()));
        }
        for (k, v) in basis.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            max_error = max_error.max((inner(u, v) - target).norm());
        }
    }
    if max_error < ORTHONORMAL_TOL {
        Ok(())
    } else {
        Err(Error::NotOrthonormal { max_error })
    }
}

/// A positive-operator-valued measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<ComplexOperator>,
}

impl Povm {
    /// Validates Hermiticity, positivity (eigenvalue floor `-1e-9`) and
    /// completeness (HS residual `1e-9`).
    pub fn new(elements: Vec<ComplexOperator>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidInput("POVM without elements".into()));
        };
        let dim = first.dim();
        let mut total = ComplexOperator::zeros(dim);
        for m in &elements {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch(dim, m.dim()));
            }
            m.check_hermitian()?;
            let min = eigh_unchecked(m).values[0];
            if min < PSD_FLOOR {
                return Err(Error::NotPositive {
                    min_eigenvalue: min,
                });
            }
            total.add_scaled(1.0, m);
        }
        let residual = hs_norm(&(&total - &ComplexOperator::identity(dim)));
        if residual > COMPLETENESS_TOL {
            return Err(Error::Incomplete { residual });
        }
        Ok(Self { elements })
    }

    pub(crate) fn from_elements_unchecked(elements: Vec<ComplexOperator>) -> Self {
        Self { elements }
    }

    /// Two-outcome POVM `{(I + M)/2, (I - M)/2}` of a qubit observable `M`.
    pub fn from_binary_observable(m: &ComplexOperator) -> Result<Self> {
        let id = ComplexOperator::identity(m.dim());
        let plus = (&id + m).scale(0.5);
        let minus = (&id - m).scale(0.5);
        Self::new(vec![plus, minus])
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexOperator] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &ComplexOperator {
        &self.elements[i]
    }

    /// `M_0 - M_1` for a two-outcome POVM.
    pub fn binary_observable(&self) -> ComplexOperator {
        &self.elements[0] - &self.elements[1]
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.elements
            .iter()
            .zip(&other.elements)
            .map(|(a, b)| hs_norm(&(a - b)))
            .fold(0.0, f64::max)
    }
}

/// Qubit two-outcome observable `M_+ - M_- = p I + n . sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitObservableParams {
    pub p: f64,
    pub n: [f64; 3],
}

impl QubitObservableParams {
    /// Rejects parameters outside the positivity region `|p| + |n| <= 1`.
    pub fn new(p: f64, n: [f64; 3]) -> Result<Self> {
        let params = Self { p, n };
        let lhs = p.abs() + params.n_norm();
        if !(lhs <= 1.0 + 1e-10) {
            return Err(Error::OutOfRange {
                what: "|p| + |n|",
                value: lhs,
                range: "[0, 1]".into(),
            });
        }
        Ok(params)
    }

    pub fn n_norm(&self) -> f64 {
        self.n.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn observable(&self) -> ComplexOperator {
        let mut m = ComplexOperator::identity(2).scale(self.p);
        for (c, s) in self.n.iter().zip(pauli::all()) {
            m.add_scaled(*c, &s);
        }
        m
    }

    pub fn to_povm(&self) -> Result<Povm> {
        Povm::from_binary_observable(&self.observable())
    }
}

fn check_matching(target: &TargetMeasurement, lab: &Povm) -> Result<()> {
    if lab.dim() != target.dim() {
        return Err(Error::DimensionMismatch(target.dim(), lab.dim()));
    }
    if lab.len() != target.dim() {
        return Err(Error::InvalidInput(format!(
            "POVM has {} outcomes but the target measurement has {}",
            lab.len(),
            target.dim()
        )));
    }
    Ok(())
}

/// Measurement infidelity `1 - (1/d) sum_i <phi_i|M_i|phi_i>`.
pub fn infidelity(target: &TargetMeasurement, lab: &Povm) -> Result<f64> {
    check_matching(target, lab)?;
    Ok(infidelity_unchecked(target, lab))
}

pub(crate) fn infidelity_unchecked(target: &TargetMeasurement, lab: &Povm) -> f64 {
    let d = target.dim();
    let fid: f64 = (0..d)
        .map(|i| lab.elements[i].sandwich(&target.basis[i]).re)
        .sum();
    1.0 - fid / d as f64
}

/// Decomposes a qubit two-outcome POVM into `(p, n)`.
pub fn qubit_decompose(lab: &Povm) -> Result<QubitObservableParams> {
    if lab.dim() != 2 || lab.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "expected a two-outcome qubit POVM, got {} outcomes in dimension {}",
            lab.len(),
            lab.dim()
        )));
    }
    let m = lab.binary_observable();
    let p = 0.5 * m.trace().re;
    let [sx, sy, sz] = pauli::all();
    let n = [
        0.5 * m.trace_product(&sx).re,
        0.5 * m.trace_product(&sy).re,
        0.5 * m.trace_product(&sz).re,
    ];
    Ok(QubitObservableParams { p, n })
}

/// Applies `(k, l) -> factor(k, l) * <phi_k|M|phi_l>` in the target basis to
/// every element and transforms back.
fn average_in_basis(
    target: &TargetMeasurement,
    lab: &Povm,
    factor: impl Fn(usize, usize) -> C64,
) -> Result<Povm> {
    check_matching(target, lab)?;
    let d = target.dim();
    let v = target.basis_matrix();
    let vdag = v.adjoint();
    let weights: Vec<C64> = (0..d * d).map(|kl| factor(kl / d, kl % d)).collect();
    let elements = lab
        .elements
        .iter()
        .map(|m| {
            let mut in_basis = vdag.matmul(m).matmul(&v);
            for k in 0..d {
                for l in 0..d {
                    in_basis[(k, l)] *= weights[k * d + l];
                }
            }
            v.matmul(&in_basis).matmul(&vdag).hermitian_part()
        })
        .collect();
    Ok(Povm::from_elements_unchecked(elements))
}

/// Tuned measurement: `M_i -> sum_k <phi_k|M_i|phi_k> |phi_k><phi_k|`.
///
/// This is the average over independent uniform phases `theta_k`, for which
/// `E[e^{-i(theta_k - theta_l)}] = delta_kl`.
pub fn tune(target: &TargetMeasurement, lab: &Povm) -> Result<Povm> {
    check_matching(target, lab)?;
    let d = target.dim();
    let elements = lab
        .elements
        .iter()
        .map(|m| {
            let diag: Vec<f64> = (0..d).map(|k| m.sandwich(&target.basis[k]).re).collect();
            target.diagonal_operator(&diag)
        })
        .collect();
    Ok(Povm::from_elements_unchecked(elements))
}

/// Largest group size handled by [`tune_discrete_signs`].
pub const MAX_SIGN_GROUP_DIM: usize = 20;

/// Average over the group of `2^d` sign flips `U|phi_l> = +-|phi_l>`.
///
/// Entry `(k, l)` picks up `s_k s_l`; the signs are independent and uniform,
/// so the factor is `E[s_k] E[s_l]` off the diagonal and `E[s_k^2]` on it.
pub fn tune_discrete_signs(target: &TargetMeasurement, lab: &Povm) -> Result<Povm> {
    if target.dim() > MAX_SIGN_GROUP_DIM {
        return Err(Error::InvalidInput(format!(
            "sign-flip group of size 2^{} is too large; use tune()",
            target.dim()
        )));
    }
    let mean_sign = 0.5 * (1.0 + (-1.0));
    let mean_square = 0.5 * (1.0 + 1.0);
    average_in_basis(target, lab, |k, l| {
        C64::new(if k == l { mean_square } else { mean_sign * mean_sign }, 0.0)
    })
}

/// Average over the cyclic group `U_j = sum_k e^{2 pi i k j / d} |phi_k><phi_k|`,
/// `j = 1..d`; entry `(k, l)` picks up `(1/d) sum_j e^{-2 pi i (k - l) j / d}`.
pub fn tune_discrete_fourier(target: &TargetMeasurement, lab: &Povm) -> Result<Povm> {
    let d = target.dim();
    average_in_basis(target, lab, |k, l| {
        if k == l {
            return C64::new(1.0, 0.0);
        }
        let diff = k as i64 - l as i64;
        let sum: C64 = (1..=d as i64)
            .map(|j| C64::from_polar(1.0, -2.0 * PI * ((diff * j).rem_euclid(d as i64)) as f64 / d as f64))
            .sum();
        sum / d as f64
    })
}

/// Both sides of the misalignment inequality `||M~ - M||_HS >= lambda sqrt(2 eps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MisalignmentGap {
    pub lhs: f64,
    pub rhs: f64,
    pub infidelity: f64,
}

/// Compares the ideal observable with the one obtained by rotating the basis
/// to `misaligned_basis` while keeping the outcome values.
pub fn misalignment_gap(
    target: &TargetMeasurement,
    misaligned_basis: &[Vec<C64>],
) -> Result<MisalignmentGap> {
    let d = target.dim();
    if misaligned_basis.len() != d {
        return Err(Error::DimensionMismatch(d, misaligned_basis.len()));
    }
    let tilted = TargetMeasurement::new(misaligned_basis.to_vec(), target.outcomes.clone())?;
    let mut gap = f64::INFINITY;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                gap = gap.min((target.outcomes[i] - target.outcomes[j]).abs());
            }
        }
    }
    if d < 2 || gap <= 0.0 {
        return Err(Error::InvalidInput(
            "misalignment bound needs pairwise distinct outcomes".into(),
        ));
    }
    let lhs = hs_norm(&(&tilted.observable() - &target.observable()));
    let overlap: f64 = (0..d)
        .map(|i| inner(&tilted.basis[i], &target.basis[i]).norm_sqr())
        .sum();
    let eps = (1.0 - overlap / d as f64).max(0.0);
    Ok(MisalignmentGap {
        lhs,
        rhs: gap * (2.0 * eps).sqrt(),
        infidelity: eps,
    })
}

/// Checks `(1 - d eps) P_i <= M_i <= (1 - d eps) P_i + d eps I` for a tuned
/// (target-diagonal) POVM.
pub fn sandwich_check(target: &TargetMeasurement, tuned: &Povm, eps: f64) -> Result<bool> {
    check_matching(target, tuned)?;
    let d = target.dim();
    let mut off = 0.0f64;
    for m in &tuned.elements {
        for k in 0..d {
            for l in 0..d {
                if k != l {
                    off = off.max(target.element(m, k, l).norm());
                }
            }
        }
    }
    if off > 1e-10 {
        return Err(Error::NotDiagonal { magnitude: off });
    }
    let de = d as f64 * eps;
    let id = ComplexOperator::identity(d);
    for (i, m) in tuned.elements.iter().enumerate() {
        let lower = target.projector(i).scale(1.0 - de);
        let mut upper = lower.clone();
        upper.add_scaled(de, &id);
        if eigh_unchecked(&(m - &lower)).values[0] < PSD_FLOOR {
            return Ok(false);
        }
        if eigh_unchecked(&(&upper - m)).values[0] < PSD_FLOOR {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Maximum off-diagonal magnitude of any element in the target basis.
pub fn max_off_diagonal(target: &TargetMeasurement, povm: &Povm) -> f64 {
    let d = target.dim();
    let mut off = 0.0f64;
    for m in &povm.elements {
        for k in 0..d {
            for l in 0..d {
                if k != l {
                    off = off.max(target.element(m, k, l).norm());
                }
            }
        }
    }
    off
}
