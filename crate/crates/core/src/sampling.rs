//! Finite-shot estimation of witness values, optionally with per-shot phase
//! randomization of every local measurement.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{Povm, TargetMeasurement};
use crate::noise::{noisy_tuned_observable, Axis, DephasingGateModel};
use crate::operator::{kron_all, ComplexOperator, C64};
use crate::witnesses::{MeasurementAssignment, ProductTermWitness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Randomization {
    None,
    /// Independent uniform phases on every target basis vector.
    ContinuousPhase,
    /// Independent uniform signs on every target basis vector.
    DiscreteGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotPlan {
    /// Total number of state copies, split evenly over the joint settings.
    pub shots: u64,
    pub seed: u64,
    pub randomization: Randomization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettingCounts {
    /// Measurement index per party.
    pub setting: Vec<usize>,
    pub shots: u64,
    /// Histogram over joint outcomes, mixed-radix with the last party fastest.
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessEstimate {
    pub mean: f64,
    pub std_estimate: f64,
    pub per_setting_counts: Vec<SettingCounts>,
}

const NEGATIVE_PROBABILITY_TOL: f64 = 1e-10;
const BLOCK: u64 = 1024;

/// `p_i = Tr(M_i rho)`, clipped to `[0, 1]` and renormalized.
pub fn born_probabilities(povm: &Povm, state: &ComplexOperator) -> Result<Vec<f64>> {
    if povm.dim() != state.dim() {
        return Err(Error::DimensionMismatch(povm.dim(), state.dim()));
    }
    let raw: Vec<f64> = povm.elements().iter().map(|m| m.trace_product(state).re).collect();
    normalize_probabilities(raw)
}

fn normalize_probabilities(raw: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(&bad) = raw.iter().find(|&&p| p < -NEGATIVE_PROBABILITY_TOL) {
        return Err(Error::InvalidInput(format!(
            "negative outcome probability {bad:.3e}; POVM and state do not pair to a distribution"
        )));
    }
    let clipped: Vec<f64> = raw.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let total: f64 = clipped.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("outcome probabilities sum to {total}")));
    }
    Ok(clipped.iter().map(|p| p / total).collect())
}

/// Multinomial draw by sequential binomials.
pub fn sample_counts(probs: &[f64], shots: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut counts = vec![0; probs.len()];
    let mut left = shots;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() || mass <= 0.0 {
            counts[i] = left;
            left = 0;
            break;
        }
        let cond = (p / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, cond).expect("probability in [0, 1]").sample(rng);
        counts[i] = k;
        left -= k;
        mass -= p;
    }
    if left > 0 {
        // Only reachable when rounding left mass on zero-probability tails.
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        counts[last] += left;
    }
    counts
}

fn categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One party's measurement expressed in its target basis.
struct LocalMeasurement {
    /// `B^dag M_i B`.
    elements: Vec<ComplexOperator>,
}

impl LocalMeasurement {
    fn new(target: &TargetMeasurement, povm: &Povm) -> Self {
        let b = target.basis_matrix();
        Self {
            elements: povm.elements().iter().map(|m| m.conjugate_by(&b)).collect(),
        }
    }

    /// Elements after a diagonal phase gate `diag(e^{i theta_k})`, seen
    /// through the dephasing channel when `noise` is given.
    fn randomized(&self, theta: &[f64], noise: Option<&DephasingGateModel>) -> Vec<ComplexOperator> {
        let d = theta.len();
        let phase = |m: &ComplexOperator| {
            let mut out = m.clone();
            for k in 0..d {
                for l in 0..d {
                    out[(k, l)] *= C64::from_polar(1.0, theta[l] - theta[k]);
                }
            }
            out
        };
        match noise {
            None => self.elements.iter().map(phase).collect(),
            Some(model) => {
                let rel = (theta[1] - theta[0]).rem_euclid(2.0 * PI);
                let a = (1.0 + (-model.gamma(rel)).exp()) / 2.0;
                let z = crate::operator::pauli::z();
                self.elements
                    .iter()
                    .map(|m| {
                        let mut out = phase(m).scale(a);
                        out.add_scaled(1.0 - a, &phase(&z.matmul(m).matmul(&z)));
                        out
                    })
                    .collect()
            }
        }
    }
}

fn joint_probabilities(parts: &[&[ComplexOperator]], rho: &ComplexOperator) -> Result<Vec<f64>> {
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().product();
    let mut raw = Vec::with_capacity(total);
    let mut idx = vec![0usize; parts.len()];
    for _ in 0..total {
        let factors: Vec<&ComplexOperator> = parts.iter().zip(&idx).map(|(p, &i)| &p[i]).collect();
        raw.push(kron_all(factors).trace_product(rho).re);
        for n in (0..idx.len()).rev() {
            idx[n] += 1;
            if idx[n] < sizes[n] {
                break;
            }
            idx[n] = 0;
        }
    }
    normalize_probabilities(raw)
}

fn setting_weights(w: &ProductTermWitness, setting: &[usize]) -> Vec<f64> {
    let sizes: Vec<usize> = w.party_dims();
    let total: usize = sizes.iter().product();
    let mut f = vec![0.0; total];
    for t in w.terms() {
        if t.factors.iter().zip(setting).all(|(f, &m)| f.measurement == m) {
            let mut index = 0;
            for (n, f) in t.factors.iter().enumerate() {
                index = index * sizes[n] + f.outcome;
            }
            f[index] += t.weight;
        }
    }
    f
}

impl WitnessEstimate {
    /// `sum_mu w_mu` times the empirical frequency of each term's joint outcome.
    pub fn mean_from_counts(&self, w: &ProductTermWitness) -> f64 {
        self.per_setting_counts
            .iter()
            .map(|s| {
                let f = setting_weights(w, &s.setting);
                s.counts.iter().zip(&f).map(|(&c, &x)| c as f64 * x).sum::<f64>() / s.shots as f64
            })
            .sum()
    }
}

/// Simulated estimate of the witness on `state` with the measurements in `a`.
///
/// With randomization, every shot draws fresh phases (or signs) for every
/// party; `noise` then replaces each ideal phase gate by the dephasing model
/// in the measurement's own basis (qubit parties only).
pub fn estimate_witness(
    w: &ProductTermWitness,
    a: &MeasurementAssignment,
    state: &ComplexOperator,
    plan: &ShotPlan,
    noise: Option<&DephasingGateModel>,
) -> Result<WitnessEstimate> {
    let settings = w.settings();
    if plan.shots < settings.len() as u64 {
        return Err(Error::InvalidInput(format!(
            "{} shots cannot cover {} settings",
            plan.shots,
            settings.len()
        )));
    }
    if state.dim() != w.total_dim() {
        return Err(Error::DimensionMismatch(w.total_dim(), state.dim()));
    }
    state.check_density()?;
    if noise.is_some() {
        if plan.randomization == Randomization::None {
            return Err(Error::InvalidInput("gate noise needs a randomization mode".into()));
        }
        if w.party_dims().iter().any(|&d| d != 2) {
            return Err(Error::InvalidInput("gate noise is modelled for qubit parties only".into()));
        }
    }
    let base = plan.shots / settings.len() as u64;
    let extra = plan.shots % settings.len() as u64;
    let mut per_setting_counts = Vec::with_capacity(settings.len());
    let mut mean = 0.0;
    let mut variance = 0.0;
    for (s, setting) in settings.iter().enumerate() {
        let shots = base + u64::from((s as u64) < extra);
        let locals: Vec<LocalMeasurement> = setting
            .iter()
            .enumerate()
            .map(|(n, &m)| Ok(LocalMeasurement::new(w.party(n).measurement(m), a.require(n, m)?)))
            .collect::<Result<_>>()?;
        let rotation = kron_all(
            setting
                .iter()
                .enumerate()
                .map(|(n, &m)| w.party(n).measurement(m).basis_matrix())
                .collect::<Vec<_>>()
                .iter(),
        );
        let rho = state.conjugate_by(&rotation);
        let counts = sample_setting(&locals, &rho, shots, plan, s as u64, noise)?;
        let f = setting_weights(w, setting);
        let n = shots as f64;
        let m1: f64 = counts.iter().zip(&f).map(|(&c, &x)| c as f64 * x).sum::<f64>() / n;
        let m2: f64 = counts.iter().zip(&f).map(|(&c, &x)| c as f64 * x * x).sum::<f64>() / n;
        mean += m1;
        variance += (m2 - m1 * m1).max(0.0) / n;
        per_setting_counts.push(SettingCounts {
            setting: setting.clone(),
            shots,
            counts,
        });
    }
    Ok(WitnessEstimate {
        mean,
        std_estimate: variance.sqrt(),
        per_setting_counts,
    })
}

fn sample_setting(
    locals: &[LocalMeasurement],
    rho: &ComplexOperator,
    shots: u64,
    plan: &ShotPlan,
    setting: u64,
    noise: Option<&DephasingGateModel>,
) -> Result<Vec<u64>> {
    let outcomes: usize = locals.iter().map(|l| l.elements.len()).product();
    let stream = |block: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream((setting << 32) | block);
        rng
    };
    if plan.randomization == Randomization::None {
        let parts: Vec<&[ComplexOperator]> = locals.iter().map(|l| l.elements.as_slice()).collect();
        let probs = joint_probabilities(&parts, rho)?;
        return Ok(sample_counts(&probs, shots, &mut stream(0)));
    }
    let blocks = shots.div_ceil(BLOCK);
    let partial: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(b);
            let mut counts = vec![0u64; outcomes];
            let n = BLOCK.min(shots - b * BLOCK);
            for _ in 0..n {
                let effective: Vec<Vec<ComplexOperator>> = locals
                    .iter()
                    .map(|l| {
                        let d = l.elements[0].dim();
                        let theta: Vec<f64> = match plan.randomization {
                            Randomization::ContinuousPhase => {
                                (0..d).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
                            }
                            _ => (0..d)
                                .map(|_| if rng.random::<bool>() { PI } else { 0.0 })
                                .collect(),
                        };
                        l.randomized(&theta, noise)
                    })
                    .collect();
                let parts: Vec<&[ComplexOperator]> = effective.iter().map(|e| e.as_slice()).collect();
                let probs = joint_probabilities(&parts, rho)?;
                counts[categorical(&probs, &mut rng)] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; outcomes];
    for p in partial {
        for (c, x) in counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(counts)
}

/// The assignment whose exact expectation the estimator converges to.
pub fn effective_assignment(
    w: &ProductTermWitness,
    a: &MeasurementAssignment,
    randomization: Randomization,
    noise: Option<&DephasingGateModel>,
) -> Result<MeasurementAssignment> {
    match (randomization, noise) {
        (Randomization::None, None) => Ok(a.clone()),
        (Randomization::None, Some(_)) => Err(Error::InvalidInput("gate noise needs a randomization mode".into())),
        (_, None) => a.tuned(w),
        (Randomization::ContinuousPhase, Some(m)) => {
            a.try_map(w, |target, povm| noisy_tuned_observable(target, povm, m))
        }
        (Randomization::DiscreteGroup, Some(m)) => a.try_map(w, |target, povm| {
            // Signs (1, -1) and (-1, 1) are the phase gate at pi, the others
            // the identity.
            let flipped = noisy_phase_pi(target, povm, m)?;
            let elems = povm
                .elements()
                .iter()
                .zip(flipped.elements())
                .map(|(x, y)| {
                    let mut e = x.scale(0.5);
                    e.add_scaled(0.5, y);
                    e.hermitian_part()
                })
                .collect();
            Ok(Povm::from_elements_unchecked(elems))
        }),
    }
}

fn noisy_phase_pi(target: &TargetMeasurement, povm: &Povm, m: &DephasingGateModel) -> Result<Povm> {
    let axis = Axis::of_target(target)
        .ok_or_else(|| Error::InvalidInput("gate noise is modelled for sigma_z and sigma_x targets".into()))?;
    let ch = crate::noise::dephased_phase_gate(&m.with_axis(axis), PI)?;
    ch.transport_povm(povm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::worst_lab_measurements;
    use crate::noise::calibrate_dephasing;
    use crate::operator::kron_vec;
    use crate::witnesses::{assemble_observable, chsh_like_witness, expectation, mub_witness};

    fn phi_plus() -> ComplexOperator {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexOperator::projector(&[C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)])
    }

    fn pi8_state() -> ComplexOperator {
        let t = PI / 8.0;
        let v = [C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)];
        ComplexOperator::projector(&kron_vec(&v, &v))
    }

    fn exact(w: &ProductTermWitness, a: &MeasurementAssignment, rho: &ComplexOperator) -> f64 {
        expectation(&assemble_observable(w, a).unwrap(), rho).unwrap()
    }

    #[test]
    fn born_examples() {
        let z = TargetMeasurement::pauli_z().ideal_povm();
        let rho0 = ComplexOperator::from_diagonal(&[1.0, 0.0]);
        assert_eq!(born_probabilities(&z, &rho0).unwrap(), vec![1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p = crate::random::random_povm(3, 4, &mut rng);
        let rho = crate::random::random_density(3, &mut rng);
        let probs = born_probabilities(&p, &rho).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let zz = [
            z.elements().to_vec(),
            z.elements().to_vec(),
        ];
        let parts: Vec<&[ComplexOperator]> = zz.iter().map(|v| v.as_slice()).collect();
        let joint = joint_probabilities(&parts, &phi_plus()).unwrap();
        for (got, want) in joint.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(born_probabilities(&z, &ComplexOperator::identity(3).scale(1.0 / 3.0)).is_err());
    }

    #[test]
    fn born_rejects_negative_pairing() {
        let bad = Povm::from_elements_unchecked(vec![
            ComplexOperator::from_diagonal(&[1.2, 0.0]),
            ComplexOperator::from_diagonal(&[-0.2, 1.0]),
        ]);
        let rho = ComplexOperator::from_diagonal(&[0.0, 1.0]);
        assert!(born_probabilities(&bad, &ComplexOperator::from_diagonal(&[1.0, 0.0])).is_err());
        assert!(born_probabilities(&bad, &rho).is_ok());
    }

    #[test]
    fn counts_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        assert_eq!(sample_counts(&[1.0, 0.0], 100, &mut rng), vec![100, 0]);
        let counts = sample_counts(&[0.25; 4], 1_000_000, &mut rng);
        assert_eq!(counts.iter().sum::<u64>(), 1_000_000);
        let sigma = (1e6f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 250_000.0).abs() < 5.0 * sigma);
        }
        let a = sample_counts(&[0.2, 0.3, 0.5], 1000, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_counts(&[0.2, 0.3, 0.5], 1000, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    fn plan(shots: u64, randomization: Randomization, seed: u64) -> ShotPlan {
        ShotPlan {
            shots,
            seed,
            randomization,
        }
    }

    #[test]
    fn ideal_bell_estimate() {
        let w = chsh_like_witness();
        let a = MeasurementAssignment::ideal(&w);
        let est = estimate_witness(&w, &a, &phi_plus(), &plan(1_000_000, Randomization::None, 1), None).unwrap();
        assert!((est.mean + 1.0).abs() <= 3.0 * est.std_estimate + 1e-12);
        assert!((est.mean_from_counts(&w) - est.mean).abs() < 1e-12);
        let total: u64 = est.per_setting_counts.iter().map(|s| s.shots).sum();
        assert_eq!(total, 1_000_000);
    }

    #[test]
    fn shots_split_with_remainder_first() {
        let w = chsh_like_witness();
        let a = MeasurementAssignment::ideal(&w);
        let est = estimate_witness(&w, &a, &pi8_state(), &plan(5001, Randomization::None, 2), None).unwrap();
        let shots: Vec<u64> = est.per_setting_counts.iter().map(|s| s.shots).collect();
        assert_eq!(shots, vec![2501, 2500]);
        assert!(estimate_witness(&w, &a, &pi8_state(), &plan(1, Randomization::None, 2), None).is_err());
    }

    #[test]
    fn continuous_randomization_targets_tuned_value() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.05).unwrap().assignment(&w).unwrap();
        let rho = pi8_state();
        let tuned = exact(&w, &a.tuned(&w).unwrap(), &rho);
        let lab = exact(&w, &a, &rho);
        let est = estimate_witness(&w, &a, &rho, &plan(1_000_000, Randomization::ContinuousPhase, 3), None).unwrap();
        assert!((est.mean - tuned).abs() <= 3.0 * est.std_estimate, "{} vs {tuned}", est.mean);
        assert!((est.mean - lab).abs() > 3.0 * est.std_estimate);
    }

    #[test]
    fn discrete_and_continuous_agree() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.05).unwrap().assignment(&w).unwrap();
        let rho = pi8_state();
        let c = estimate_witness(&w, &a, &rho, &plan(200_000, Randomization::ContinuousPhase, 4), None).unwrap();
        let d = estimate_witness(&w, &a, &rho, &plan(200_000, Randomization::DiscreteGroup, 5), None).unwrap();
        let sigma = (c.std_estimate.powi(2) + d.std_estimate.powi(2)).sqrt();
        assert!((c.mean - d.mean).abs() <= 4.0 * sigma);
    }

    #[test]
    fn convergence_ladder() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.01).unwrap().assignment(&w).unwrap();
        let rho = pi8_state();
        let target = exact(&w, &a.tuned(&w).unwrap(), &rho);
        let mut stds = Vec::new();
        for (k, shots) in [1_000u64, 10_000, 100_000, 1_000_000].into_iter().enumerate() {
            let est = estimate_witness(&w, &a, &rho, &plan(shots, Randomization::ContinuousPhase, 10 + k as u64), None).unwrap();
            assert!((est.mean - target).abs() <= 4.0 * est.std_estimate);
            stds.push(est.std_estimate);
        }
        for pair in stds.windows(2) {
            let ratio = pair[0] / pair[1];
            let ideal = 10f64.sqrt();
            assert!(ratio > ideal / 1.5 && ratio < ideal * 1.5, "ratio {ratio}");
        }
    }

    #[test]
    fn randomization_costs_no_extra_copies() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.005).unwrap().assignment(&w).unwrap();
        let rho = pi8_state();
        let plain = estimate_witness(&w, &a, &rho, &plan(5000, Randomization::None, 20), None).unwrap();
        let rand = estimate_witness(&w, &a, &rho, &plan(5000, Randomization::ContinuousPhase, 21), None).unwrap();
        let ratio = rand.std_estimate / plain.std_estimate;
        assert!(ratio > 0.5 && ratio < 2.0, "ratio {ratio}");
    }

    #[test]
    fn noisy_randomization_targets_noisy_tuned_value() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.05).unwrap().assignment(&w).unwrap();
        let rho = pi8_state();
        let model = calibrate_dephasing(0.05, Axis::Z).unwrap();
        for r in [Randomization::ContinuousPhase, Randomization::DiscreteGroup] {
            let eff = effective_assignment(&w, &a, r, Some(&model)).unwrap();
            let target = exact(&w, &eff, &rho);
            let est = estimate_witness(&w, &a, &rho, &plan(400_000, r, 30), Some(&model)).unwrap();
            assert!((est.mean - target).abs() <= 4.0 * est.std_estimate, "{r:?}: {} vs {target}", est.mean);
        }
    }

    #[test]
    fn randomized_qudit_estimate() {
        let w = mub_witness(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut a = MeasurementAssignment::ideal(&w);
        for n in 0..2 {
            for m in 0..2 {
                let target = w.party(n).measurement(m);
                let noise = crate::random::random_povm(3, 3, &mut rng);
                a.set(&w, n, m, crate::random::mix_povms(&target.ideal_povm(), &noise, 0.1)).unwrap();
            }
        }
        let rho = crate::random::random_density(9, &mut rng);
        let target = exact(&w, &a.tuned(&w).unwrap(), &rho);
        let est = estimate_witness(&w, &a, &rho, &plan(100_000, Randomization::ContinuousPhase, 40), None).unwrap();
        assert!((est.mean - target).abs() <= 4.0 * est.std_estimate);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let w = chsh_like_witness();
        let a = worst_lab_measurements(0.05).unwrap().assignment(&w).unwrap();
        let p = plan(3000, Randomization::ContinuousPhase, 77);
        let x = estimate_witness(&w, &a, &pi8_state(), &p, None).unwrap();
        let y = estimate_witness(&w, &a, &pi8_state(), &p, None).unwrap();
        assert_eq!(x, y);
    }
}
