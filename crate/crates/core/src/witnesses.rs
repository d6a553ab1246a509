//! Entanglement witnesses written as weighted sums of local rank-one
//! projectors, `W = sum_mu w_mu P_mu^(1) (x) ... (x) P_mu^(N)`, and the
//! observables obtained when each projector is replaced by the matching
//! element of a laboratory (or tuned) POVM.
//!
//! Identity terms are always expanded into projectors of a basis the party
//! already measures (`sigma_z` for the qubit witness, `{e_k}` for the MUB
//! family), and no terms are merged. This fixes the decomposition, so the
//! weight bookkeeping in [`crate::bounds::general_linear_bound`] is
//! reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{tune, Povm, TargetMeasurement};
use crate::operator::{eigh, kron_all, ComplexOperator};

/// The measurements available to one party.
#[derive(Clone, Debug, PartialEq)]
pub struct Party {
    dim: usize,
    measurements: Vec<TargetMeasurement>,
    labels: Vec<String>,
}

impl Party {
    pub fn new(measurements: Vec<(String, TargetMeasurement)>) -> Result<Self> {
        let Some((_, first)) = measurements.first() else {
            return Err(Error::InvalidInput("party without measurements".into()));
        };
        let dim = first.dim();
        if let Some((_, bad)) = measurements.iter().find(|(_, m)| m.dim() != dim) {
            return Err(Error::DimensionMismatch(dim, bad.dim()));
        }
        let (labels, measurements) = measurements.into_iter().unzip();
        Ok(Self {
            dim,
            measurements,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measurements(&self) -> &[TargetMeasurement] {
        &self.measurements
    }

    pub fn measurement(&self, m: usize) -> &TargetMeasurement {
        &self.measurements[m]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Outcome `outcome` of measurement `measurement` of a party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ProjectorRef {
    pub measurement: usize,
    pub outcome: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessTerm {
    pub weight: f64,
    /// One projector per party.
    pub factors: Vec<ProjectorRef>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductTermWitness {
    parties: Vec<Party>,
    terms: Vec<WitnessTerm>,
}

impl ProductTermWitness {
    pub fn new(parties: Vec<Party>, terms: Vec<WitnessTerm>) -> Result<Self> {
        for (t, term) in terms.iter().enumerate() {
            if term.factors.len() != parties.len() {
                return Err(Error::InvalidInput(format!(
                    "term {t} has {} factors for {} parties",
                    term.factors.len(),
                    parties.len()
                )));
            }
            for (party, f) in parties.iter().zip(&term.factors) {
                if f.measurement >= party.measurements.len() || f.outcome >= party.dim {
                    return Err(Error::InvalidInput(format!(
                        "term {t} references measurement {} outcome {} that does not exist",
                        f.measurement, f.outcome
                    )));
                }
            }
            if !term.weight.is_finite() {
                return Err(Error::InvalidInput(format!("term {t} has non-finite weight")));
            }
        }
        Ok(Self { parties, terms })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn party(&self, n: usize) -> &Party {
        &self.parties[n]
    }

    pub fn terms(&self) -> &[WitnessTerm] {
        &self.terms
    }

    pub fn party_dims(&self) -> Vec<usize> {
        self.parties.iter().map(|p| p.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.parties.iter().map(|p| p.dim).product()
    }

    /// Distinct joint settings (one measurement index per party), in order
    /// of first appearance.
    pub fn settings(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for term in &self.terms {
            let key: Vec<usize> = term.factors.iter().map(|f| f.measurement).collect();
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    /// Smallest eigenvalue of the ideal witness operator.
    pub fn ideal_minimum(&self) -> f64 {
        let op = assemble_observable(self, &MeasurementAssignment::ideal(self))
            .expect("ideal assignment is complete");
        eigh(&op.hermitian_part()).expect("hermitian").values[0]
    }

    /// `sum_{w_mu < 0} w_mu`.
    pub fn negative_weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).filter(|&w| w < 0.0).sum()
    }
}

/// Named witness families, as referenced from scenario configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WitnessKind {
    ChshLike,
    Mub { d: usize },
}

impl WitnessKind {
    pub fn build(&self) -> Result<ProductTermWitness> {
        match *self {
            WitnessKind::ChshLike => Ok(chsh_like_witness()),
            WitnessKind::Mub { d } => mub_witness(d),
        }
    }
}

/// Measurement index of `sigma_x` in [`chsh_like_witness`].
pub const QUBIT_X: usize = 0;
/// Measurement index of `sigma_z` in [`chsh_like_witness`].
pub const QUBIT_Z: usize = 1;

/// `W = I - sigma_x (x) sigma_x - sigma_z (x) sigma_z` on two qubits.
///
/// Terms: the identity as `sum_{s,t} P_s^z (x) P_t^z`, then
/// `-sigma_a (x) sigma_a = sum_{s,t} (-st) P_s^a (x) P_t^a` for `a = x, z`.
pub fn chsh_like_witness() -> ProductTermWitness {
    let qubit = || {
        Party::new(vec![
            ("x".into(), TargetMeasurement::pauli_x()),
            ("z".into(), TargetMeasurement::pauli_z()),
        ])
        .expect("qubit party")
    };
    let sign = [1.0, -1.0];
    let mut terms = Vec::with_capacity(12);
    for s in 0..2 {
        for t in 0..2 {
            terms.push(WitnessTerm {
                weight: 1.0,
                factors: vec![
                    ProjectorRef { measurement: QUBIT_Z, outcome: s },
                    ProjectorRef { measurement: QUBIT_Z, outcome: t },
                ],
            });
        }
    }
    for m in [QUBIT_X, QUBIT_Z] {
        for s in 0..2 {
            for t in 0..2 {
                terms.push(WitnessTerm {
                    weight: -sign[s] * sign[t],
                    factors: vec![
                        ProjectorRef { measurement: m, outcome: s },
                        ProjectorRef { measurement: m, outcome: t },
                    ],
                });
            }
        }
    }
    ProductTermWitness::new(vec![qubit(), qubit()], terms).expect("valid qubit witness")
}

/// Measurement index of the computational basis in [`mub_witness`].
pub const MUB_E: usize = 0;
/// Measurement index of the Fourier basis (`f_k` on A, `f_k^*` on B).
pub const MUB_F: usize = 1;

/// Two-qudit witness
/// `W = (d+1)/d I - sum_k (|e_k e_k><e_k e_k| + |f_k f_k^*><f_k f_k^*|)`.
///
/// The identity is expanded as `(d+1)/d sum_{k,l} |e_k><e_k| (x) |e_l><e_l|`.
pub fn mub_witness(d: usize) -> Result<ProductTermWitness> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("MUB witness needs d >= 2, got {d}")));
    }
    let alice = Party::new(vec![
        ("e".into(), TargetMeasurement::computational(d)),
        ("f".into(), TargetMeasurement::fourier(d, false)),
    ])?;
    let bob = Party::new(vec![
        ("e".into(), TargetMeasurement::computational(d)),
        ("f*".into(), TargetMeasurement::fourier(d, true)),
    ])?;
    let scale = (d as f64 + 1.0) / d as f64;
    let mut terms = Vec::with_capacity(d * d + 2 * d);
    for k in 0..d {
        for l in 0..d {
            terms.push(WitnessTerm {
                weight: scale,
                factors: vec![
                    ProjectorRef { measurement: MUB_E, outcome: k },
                    ProjectorRef { measurement: MUB_E, outcome: l },
                ],
            });
        }
    }
    for m in [MUB_E, MUB_F] {
        for k in 0..d {
            terms.push(WitnessTerm {
                weight: -1.0,
                factors: vec![
                    ProjectorRef { measurement: m, outcome: k },
                    ProjectorRef { measurement: m, outcome: k },
                ],
            });
        }
    }
    ProductTermWitness::new(vec![alice, bob], terms)
}

/// The POVM used in place of each target measurement, per party.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementAssignment {
    povms: Vec<Vec<Option<Povm>>>,
}

impl MeasurementAssignment {
    /// Assignment with nothing set.
    pub fn empty(w: &ProductTermWitness) -> Self {
        Self {
            povms: w
                .parties
                .iter()
                .map(|p| vec![None; p.measurements.len()])
                .collect(),
        }
    }

    /// Every measurement replaced by its ideal projectors.
    pub fn ideal(w: &ProductTermWitness) -> Self {
        Self {
            povms: w
                .parties
                .iter()
                .map(|p| p.measurements.iter().map(|m| Some(m.ideal_povm())).collect())
                .collect(),
        }
    }

    /// Builds an assignment from a full `[party][measurement]` table.
    pub fn from_table(w: &ProductTermWitness, table: Vec<Vec<Povm>>) -> Result<Self> {
        let mut a = Self::empty(w);
        if table.len() != w.parties.len() {
            return Err(Error::DimensionMismatch(w.parties.len(), table.len()));
        }
        for (n, row) in table.into_iter().enumerate() {
            for (m, povm) in row.into_iter().enumerate() {
                a.set(w, n, m, povm)?;
            }
        }
        Ok(a)
    }

    /// Same POVM table for every party (witnesses with identical parties).
    pub fn symmetric(w: &ProductTermWitness, per_party: Vec<Povm>) -> Result<Self> {
        let table = vec![per_party; w.parties.len()];
        Self::from_table(w, table)
    }

    pub fn set(&mut self, w: &ProductTermWitness, party: usize, measurement: usize, povm: Povm) -> Result<()> {
        let p = w.parties.get(party).ok_or_else(|| {
            Error::InvalidInput(format!("party {party} does not exist"))
        })?;
        let target = p.measurements.get(measurement).ok_or_else(|| {
            Error::InvalidInput(format!("party {party} has no measurement {measurement}"))
        })?;
        if povm.dim() != target.dim() {
            return Err(Error::DimensionMismatch(target.dim(), povm.dim()));
        }
        if povm.len() != target.dim() {
            return Err(Error::InvalidInput(format!(
                "POVM for party {party}, measurement {measurement} has {} outcomes, expected {}",
                povm.len(),
                target.dim()
            )));
        }
        self.povms[party][measurement] = Some(povm);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, party: usize, measurement: usize, povm: Povm) {
        self.povms[party][measurement] = Some(povm);
    }

    pub fn get(&self, party: usize, measurement: usize) -> Option<&Povm> {
        self.povms.get(party)?.get(measurement)?.as_ref()
    }

    pub fn require(&self, party: usize, measurement: usize) -> Result<&Povm> {
        self.get(party, measurement)
            .ok_or(Error::MissingAssignment { party, measurement })
    }

    /// Replaces every assigned POVM by its tuned counterpart.
    pub fn tuned(&self, w: &ProductTermWitness) -> Result<Self> {
        self.try_map(w, |target, povm| tune(target, povm))
    }

    /// Applies `f(target, povm)` to every assigned POVM.
    pub fn try_map(
        &self,
        w: &ProductTermWitness,
        mut f: impl FnMut(&TargetMeasurement, &Povm) -> Result<Povm>,
    ) -> Result<Self> {
        let mut out = Self::empty(w);
        for (n, party) in w.parties.iter().enumerate() {
            for (m, target) in party.measurements.iter().enumerate() {
                if let Some(povm) = self.get(n, m) {
                    out.povms[n][m] = Some(f(target, povm)?);
                }
            }
        }
        Ok(out)
    }
}

/// `sum_mu w_mu (x)_n X_mu^(n)` where `X` is the assigned POVM element with
/// the projector's outcome index.
pub fn assemble_observable(w: &ProductTermWitness, a: &MeasurementAssignment) -> Result<ComplexOperator> {
    let dim = w.total_dim();
    let mut out = ComplexOperator::zeros(dim);
    for term in &w.terms {
        let mut factors = Vec::with_capacity(term.factors.len());
        for (n, f) in term.factors.iter().enumerate() {
            factors.push(a.require(n, f.measurement)?.element(f.outcome));
        }
        out.add_scaled(term.weight, &kron_all(factors));
    }
    Ok(out)
}

/// `Tr(op * state)` for Hermitian `op` and a density operator `state`.
pub fn expectation(op: &ComplexOperator, state: &ComplexOperator) -> Result<f64> {
    if op.dim() != state.dim() {
        return Err(Error::DimensionMismatch(op.dim(), state.dim()));
    }
    op.check_hermitian()?;
    state.check_density()?;
    let value = op.trace_product(state);
    if value.im.abs() > 1e-8 {
        return Err(Error::ComplexExpectation(value.im));
    }
    Ok(value.re)
}

/// Remaining fraction of the ideal certification range `[witness_min, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capability {
    pub value: f64,
    /// Set when the bound fell outside `[witness_min, 0]` and was clamped.
    pub clamped: bool,
}

pub fn certification_capability(bound: f64, witness_min: f64) -> Result<Capability> {
    if !(witness_min < 0.0) || !bound.is_finite() {
        return Err(Error::InvalidInput(format!(
            "certification range needs witness_min < 0 (got {witness_min}) and a finite bound"
        )));
    }
    let raw = 1.0 - bound / witness_min;
    let value = raw.clamp(0.0, 1.0);
    Ok(Capability {
        value,
        clamped: value != raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{hs_norm, kron, kron_vec, pauli, C64};
    use crate::random::{haar_state, mix_povms, random_povm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi_plus(d: usize) -> ComplexOperator {
        let mut v = vec![C64::new(0.0, 0.0); d * d];
        for k in 0..d {
            v[k * d + k] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        ComplexOperator::projector(&v)
    }

    fn chsh_operator() -> ComplexOperator {
        let mut w = ComplexOperator::identity(4);
        w.add_scaled(-1.0, &kron(&pauli::x(), &pauli::x()));
        w.add_scaled(-1.0, &kron(&pauli::z(), &pauli::z()));
        w
    }

    #[test]
    fn chsh_assembles_to_defining_operator() {
        let w = chsh_like_witness();
        assert_eq!(w.terms().len(), 12);
        let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
        assert!(hs_norm(&(&op - &chsh_operator())) < 1e-13);
        assert!(op.is_hermitian(1e-14));
        assert_eq!(w.negative_weight_sum(), -4.0);
    }

    #[test]
    fn chsh_expectations() {
        let w = chsh_like_witness();
        let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
        assert!((expectation(&op, &phi_plus(2)).unwrap() + 1.0).abs() < 1e-13);
        let mixed = ComplexOperator::identity(4).scale(0.25);
        assert!((expectation(&op, &mixed).unwrap() - 1.0).abs() < 1e-13);
        let a = (std::f64::consts::PI / 8.0).cos();
        let b = (std::f64::consts::PI / 8.0).sin();
        let phi = [C64::new(a, 0.0), C64::new(b, 0.0)];
        let rho = ComplexOperator::projector(&kron_vec(&phi, &phi));
        assert!(expectation(&op, &rho).unwrap().abs() < 1e-13);
    }

    #[test]
    fn mub_witness_spectrum_and_trace() {
        for d in 2..=4 {
            let w = mub_witness(d).unwrap();
            let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
            let dd = d as f64;
            assert!((w.ideal_minimum() + (dd - 1.0) / dd).abs() < 1e-10, "d={d}");
            assert!((op.trace().re - (dd * dd - dd)).abs() < 1e-10);
            let mixed = ComplexOperator::identity(d * d).scale(1.0 / (dd * dd));
            assert!((expectation(&op, &mixed).unwrap() - (dd - 1.0) / dd).abs() < 1e-12);
        }
        let w = mub_witness(2).unwrap();
        let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
        assert!((expectation(&op, &phi_plus(2)).unwrap() + 0.5).abs() < 1e-13);
        assert!(mub_witness(1).is_err());
    }

    #[test]
    fn mub_witness_nonnegative_on_product_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in [2, 3, 4] {
            let w = mub_witness(d).unwrap();
            let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
            for _ in 0..1000 / 3 + 1 {
                let psi = kron_vec(&haar_state(d, &mut rng), &haar_state(d, &mut rng));
                assert!(op.sandwich(&psi).re >= -1e-9);
            }
        }
    }

    #[test]
    fn missing_assignment_names_party_and_measurement() {
        let w = chsh_like_witness();
        let mut a = MeasurementAssignment::ideal(&w);
        a.povms[1][QUBIT_X] = None;
        assert_eq!(
            assemble_observable(&w, &a),
            Err(Error::MissingAssignment { party: 1, measurement: QUBIT_X })
        );
    }

    #[test]
    fn assembly_is_affine_in_each_povm() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let w = mub_witness(3).unwrap();
        let base = MeasurementAssignment::ideal(&w);
        for _ in 0..10 {
            let n = rng.random_range(0..2);
            let m = rng.random_range(0..2);
            let pa = random_povm(3, 3, &mut rng);
            let pb = random_povm(3, 3, &mut rng);
            let lam = rng.random_range(0.0..1.0);
            let mut a = base.clone();
            a.set(&w, n, m, pa.clone()).unwrap();
            let mut b = base.clone();
            b.set(&w, n, m, pb.clone()).unwrap();
            let mut mix = base.clone();
            mix.set(&w, n, m, mix_povms(&pa, &pb, 1.0 - lam)).unwrap();
            let lhs = assemble_observable(&w, &mix).unwrap();
            let mut rhs = assemble_observable(&w, &a).unwrap().scale(lam);
            rhs.add_scaled(1.0 - lam, &assemble_observable(&w, &b).unwrap());
            assert!(hs_norm(&(&lhs - &rhs)) < 1e-12);
            assert!(lhs.is_hermitian(1e-12));
        }
    }

    #[test]
    fn expectation_examples() {
        let rho0 = ComplexOperator::from_diagonal(&[1.0, 0.0]);
        assert_eq!(expectation(&pauli::z(), &rho0).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rho = crate::random::random_density(3, &mut rng);
        assert!((expectation(&ComplexOperator::identity(3), &rho).unwrap() - 1.0).abs() < 1e-12);

        let w = chsh_like_witness();
        let op = assemble_observable(&w, &MeasurementAssignment::ideal(&w)).unwrap();
        for v in [0.0, 0.3, 0.5, 1.0] {
            let mut state = phi_plus(2).scale(v);
            state.add_scaled((1.0 - v) / 4.0, &ComplexOperator::identity(4));
            assert!((expectation(&op, &state).unwrap() - (1.0 - 2.0 * v)).abs() < 1e-13);
        }
        let non_herm = ComplexOperator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(expectation(&non_herm, &rho0).is_err());
    }

    #[test]
    fn capability_examples() {
        assert_eq!(certification_capability(0.0, -1.0).unwrap().value, 1.0);
        assert_eq!(certification_capability(-1.0, -1.0).unwrap().value, 0.0);
        let c = certification_capability(-0.279, -1.0).unwrap();
        assert!((c.value - 0.721).abs() < 1e-12);
        assert!(!c.clamped);
        let c = certification_capability(-1.5, -1.0).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.clamped);
        assert!(certification_capability(-0.1, 0.0).is_err());
    }

    #[test]
    fn settings_of_chsh() {
        assert_eq!(chsh_like_witness().settings(), vec![vec![QUBIT_Z, QUBIT_Z], vec![QUBIT_X, QUBIT_X]]);
    }
}
