//! Closed-form separable minima of `I - sx(x)sx - sz(x)sz` under imprecise
//! measurements, the measurement families that attain them, and derived
//! quantities.

use serde::Serialize;

use crate::error::{check_range, Error, Result};
use crate::measurements::{Povm, QubitObservableParams};
use crate::operator::{kron, ComplexOperator, C64};
use crate::witnesses::{assemble_observable, MeasurementAssignment, ProductTermWitness, QUBIT_X, QUBIT_Z};

/// Infidelity at which the lab bound reaches `-1`.
pub fn lab_junction() -> f64 {
    (2.0 - std::f64::consts::SQRT_2) / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCurvePoint {
    pub eps: f64,
    pub value: f64,
}

/// Separable minimum over all lab measurements of infidelity at most `eps`.
pub fn b_lab(eps: f64) -> Result<f64> {
    check_range("eps", eps, 0.0, 1.0)?;
    if eps <= lab_junction() {
        Ok(-4.0 * (1.0 - 2.0 * eps) * (eps * (1.0 - eps)).sqrt())
    } else {
        Ok(-1.0)
    }
}

/// Separable minimum over tuned measurements of infidelity at most `eps`.
pub fn b_rand(eps: f64) -> Result<f64> {
    check_range("eps", eps, 0.0, 1.0)?;
    if eps <= 0.5 {
        let s2 = std::f64::consts::SQRT_2;
        Ok(-4.0 * (s2 - 1.0) * eps - 4.0 * (3.0 - 2.0 * s2) * eps * eps)
    } else {
        Ok(-1.0)
    }
}

/// `sigma_x` and `sigma_z` replacements for both parties of the two-qubit
/// witness.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitMeasurements {
    pub a_x: Povm,
    pub a_z: Povm,
    pub b_x: Povm,
    pub b_z: Povm,
}

impl QubitMeasurements {
    pub fn symmetric(x: Povm, z: Povm) -> Self {
        Self {
            a_x: x.clone(),
            a_z: z.clone(),
            b_x: x,
            b_z: z,
        }
    }

    pub fn assignment(&self, w: &ProductTermWitness) -> Result<MeasurementAssignment> {
        let mut a = MeasurementAssignment::empty(w);
        a.set(w, 0, QUBIT_X, self.a_x.clone())?;
        a.set(w, 0, QUBIT_Z, self.a_z.clone())?;
        a.set(w, 1, QUBIT_X, self.b_x.clone())?;
        a.set(w, 1, QUBIT_Z, self.b_z.clone())?;
        Ok(a)
    }
}

fn pair(p: f64, main: f64, cross: f64) -> Result<(Povm, Povm)> {
    let x = QubitObservableParams::new(p, [main, 0.0, cross])?.to_povm()?;
    let z = QubitObservableParams::new(p, [cross, 0.0, main])?.to_povm()?;
    Ok((x, z))
}

/// `M_x = (1-2e) sx + 2 sqrt(e(1-e)) sz`, `M_z` with `x <-> z`.
pub fn imp_eg1(eps: f64) -> Result<QubitMeasurements> {
    check_range("eps", eps, 0.0, 1.0)?;
    let (x, z) = pair(0.0, 1.0 - 2.0 * eps, 2.0 * (eps * (1.0 - eps)).sqrt())?;
    Ok(QubitMeasurements::symmetric(x, z))
}

/// `M_a = 2e I + (1-2e) s_a`.
pub fn imp_eg2(eps: f64) -> Result<QubitMeasurements> {
    check_range("eps", eps, 0.0, 0.5)?;
    let (x, z) = pair(2.0 * eps, 1.0 - 2.0 * eps, 0.0)?;
    Ok(QubitMeasurements::symmetric(x, z))
}

/// Lab measurements attaining [`b_lab`].
pub fn worst_lab_measurements(eps: f64) -> Result<QubitMeasurements> {
    check_range("eps", eps, 0.0, lab_junction())?;
    imp_eg1(eps)
}

/// Tuned measurements attaining [`b_rand`].
pub fn worst_tuned_measurements(eps: f64) -> Result<QubitMeasurements> {
    check_range("eps", eps, 0.0, 0.5)?;
    imp_eg2(eps)
}

/// `M_x = p I + (1-2e) sx + q sz`, `M_z = p I + (1-2e) sz + q sx`.
pub fn pq_measurements(eps: f64, p: f64, q: f64) -> Result<QubitMeasurements> {
    check_range("eps", eps, 0.0, 1.0)?;
    let main = 1.0 - 2.0 * eps;
    let norm = p.abs() + (main * main + q * q).sqrt();
    if !p.is_finite() || !q.is_finite() || norm > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "|p| + sqrt((1-2eps)^2 + q^2) = {norm} exceeds 1 (eps={eps}, p={p}, q={q})"
        )));
    }
    let (x, z) = pair(p, main, q)?;
    Ok(QubitMeasurements::symmetric(x, z))
}

/// First-order bound `eps * (sum of negative weights) * (sum of party dims)`.
pub fn general_linear_bound(w: &ProductTermWitness, eps: f64) -> Result<f64> {
    let dmax = w.party_dims().into_iter().max().unwrap_or(1);
    if !(eps >= 0.0 && eps < 1.0 / dmax as f64) {
        return Err(Error::OutOfRange {
            what: "eps",
            value: eps,
            range: format!("[0, {})", 1.0 / dmax as f64),
        });
    }
    let dim_sum: usize = w.party_dims().iter().sum();
    Ok(eps * w.negative_weight_sum() * dim_sum as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Visibility {
    /// Infimum of the certifying visibilities; every `v` in `(v*, 1]` certifies.
    Certifiable(f64),
    Uncertifiable,
}

/// Smallest `v` with `Tr(W_a rho_v) < bound` for
/// `rho_v = v |phi+><phi+| + (1-v) I/D` on two parties of equal dimension.
pub fn visibility_threshold(
    w: &ProductTermWitness,
    a: &MeasurementAssignment,
    bound: f64,
) -> Result<Visibility> {
    let dims = w.party_dims();
    if dims.len() != 2 || dims[0] != dims[1] {
        return Err(Error::InvalidInput(
            "visibility needs two parties of equal dimension".into(),
        ));
    }
    let d = dims[0];
    let op = assemble_observable(w, a)?;
    let total = (d * d) as f64;
    let mut phi = vec![C64::new(0.0, 0.0); d * d];
    for k in 0..d {
        phi[k * d + k] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    let offset = op.trace().re / total;
    let slope = op.sandwich(&phi).re - offset;
    if !(slope < 0.0) {
        return Ok(Visibility::Uncertifiable);
    }
    let v = ((bound - offset) / slope).max(0.0);
    if v >= 1.0 - 1e-12 {
        Ok(Visibility::Uncertifiable)
    } else {
        Ok(Visibility::Certifiable(v))
    }
}

/// Product state `rho_A (x) rho_B` from Bloch vectors.
pub fn product_bloch_state(a: [f64; 3], b: [f64; 3]) -> ComplexOperator {
    let one = |r: [f64; 3]| {
        let mut m = ComplexOperator::identity(2).scale(0.5);
        for (k, s) in crate::operator::pauli::all().iter().enumerate() {
            m.add_scaled(0.5 * r[k], s);
        }
        m
    };
    kron(&one(a), &one(b))
}
