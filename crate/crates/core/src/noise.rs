//! Channels for imperfect randomization gates.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::measurements::{Povm, TargetMeasurement};
use crate::operator::{kron, pauli, ComplexOperator, C64};

const TRACE_PRESERVING_TOL: f64 = 1e-9;

/// Completely positive, trace-preserving map `rho -> sum_j K_j rho K_j^dag`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    dim: usize,
    kraus: Vec<ComplexOperator>,
}

/// Completely positive map given by Kraus operators, without the
/// trace-preservation requirement. Duals of channels are unital maps of this
/// kind.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausMap {
    dim: usize,
    kraus: Vec<ComplexOperator>,
}

fn apply_kraus(kraus: &[ComplexOperator], x: &ComplexOperator) -> ComplexOperator {
    let mut out = ComplexOperator::zeros(x.dim());
    for k in kraus {
        out.add_scaled(1.0, &k.matmul(x).matmul(&k.adjoint()));
    }
    out
}

impl KrausChannel {
    pub fn new(kraus: Vec<ComplexOperator>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::InvalidInput("channel without Kraus operators".into()));
        };
        let dim = first.dim();
        let mut total = ComplexOperator::zeros(dim);
        for k in &kraus {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch(dim, k.dim()));
            }
            total.add_scaled(1.0, &k.adjoint().matmul(k));
        }
        let residual = (&total - &ComplexOperator::identity(dim)).max_abs();
        if residual > TRACE_PRESERVING_TOL {
            return Err(Error::InvalidInput(format!(
                "Kraus operators are not trace preserving (residual {residual:.3e})"
            )));
        }
        Ok(Self { dim, kraus })
    }

    pub fn identity(dim: usize) -> Self {
        Self::unitary(ComplexOperator::identity(dim))
    }

    pub fn unitary(u: ComplexOperator) -> Self {
        Self {
            dim: u.dim(),
            kraus: vec![u],
        }
    }

    /// `rho -> (1-p) rho + p I/2` on a qubit.
    pub fn qubit_depolarizing(p: f64) -> Result<Self> {
        check_range("p", p, 0.0, 4.0 / 3.0)?;
        let mut kraus = vec![ComplexOperator::identity(2).scale((1.0 - 0.75 * p).sqrt())];
        kraus.extend(pauli::all().iter().map(|s| s.scale((p / 4.0).sqrt())));
        Self::new(kraus)
    }

    /// Qubit dephasing in the computational basis; coherences shrink by
    /// `e^{-gamma}`.
    pub fn qubit_dephasing(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(Error::OutOfRange {
                what: "gamma",
                value: gamma,
                range: "[0, inf]".into(),
            });
        }
        let a = (1.0 + (-gamma).exp()) / 2.0;
        Self::new(vec![
            ComplexOperator::identity(2).scale(a.sqrt()),
            pauli::z().scale((1.0 - a).sqrt()),
        ])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[ComplexOperator] {
        &self.kraus
    }

    /// Image of a density operator.
    pub fn apply(&self, state: &ComplexOperator) -> Result<ComplexOperator> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, state.dim()));
        }
        state.check_density()?;
        Ok(apply_kraus(&self.kraus, state))
    }

    /// Image of an arbitrary operator.
    pub fn apply_operator(&self, x: &ComplexOperator) -> Result<ComplexOperator> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, x.dim()));
        }
        Ok(apply_kraus(&self.kraus, x))
    }

    /// Heisenberg-picture map `Y -> sum_j K_j^dag Y K_j`.
    pub fn dual(&self) -> KrausMap {
        KrausMap {
            dim: self.dim,
            kraus: self.kraus.iter().map(|k| k.adjoint()).collect(),
        }
    }

    /// `{E*(M_i)}`, the measurement realized by applying the channel before `povm`.
    pub fn transport_povm(&self, povm: &Povm) -> Result<Povm> {
        if povm.dim() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, povm.dim()));
        }
        let dual = self.dual();
        let elements = povm
            .elements()
            .iter()
            .map(|m| apply_kraus(&dual.kraus, m).hermitian_part())
            .collect();
        Ok(Povm::from_elements_unchecked(elements))
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        if first.dim != self.dim {
            return Err(Error::DimensionMismatch(self.dim, first.dim));
        }
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| first.kraus.iter().map(move |b| a.matmul(b)))
            .collect();
        Ok(Self { dim: self.dim, kraus })
    }

    /// Choi-type matrix `sum_{ij} E(|i><j|) (x) |i><j|`, used to compare maps.
    pub fn choi(&self) -> ComplexOperator {
        choi_of(&self.kraus, self.dim)
    }
}

fn choi_of(kraus: &[ComplexOperator], dim: usize) -> ComplexOperator {
    let mut out = ComplexOperator::zeros(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut unit = ComplexOperator::zeros(dim);
            unit[(i, j)] = C64::new(1.0, 0.0);
            out.add_scaled(1.0, &kron(&apply_kraus(kraus, &unit), &unit));
        }
    }
    out
}

impl KrausMap {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[ComplexOperator] {
        &self.kraus
    }

    pub fn apply_operator(&self, x: &ComplexOperator) -> Result<ComplexOperator> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, x.dim()));
        }
        Ok(apply_kraus(&self.kraus, x))
    }

    pub fn dual(&self) -> KrausMap {
        KrausMap {
            dim: self.dim,
            kraus: self.kraus.iter().map(|k| k.adjoint()).collect(),
        }
    }

    pub fn choi(&self) -> ComplexOperator {
        choi_of(&self.kraus, self.dim)
    }
}

fn check_gate(ch: &KrausChannel, u: &ComplexOperator) -> Result<()> {
    if u.dim() != ch.dim {
        return Err(Error::DimensionMismatch(ch.dim, u.dim()));
    }
    let residual = (&u.adjoint().matmul(u) - &ComplexOperator::identity(u.dim())).max_abs();
    if residual > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "target gate is not unitary (residual {residual:.3e})"
        )));
    }
    Ok(())
}

/// Haar-average fidelity `(d F_pro + 1)/(d + 1)` with
/// `F_pro = sum_j |Tr(U^dag K_j)|^2 / d^2`.
pub fn average_gate_fidelity(ch: &KrausChannel, u: &ComplexOperator) -> Result<f64> {
    check_gate(ch, u)?;
    let d = ch.dim as f64;
    let udag = u.adjoint();
    let f_pro: f64 = ch
        .kraus
        .iter()
        .map(|k| udag.trace_product(k).norm_sqr())
        .sum::<f64>()
        / (d * d);
    Ok((d * f_pro + 1.0) / (d + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateFidelity {
    pub value: f64,
    /// Set when the minimum comes from sampling rather than a full search.
    pub approximate: bool,
}

/// Worst-case pure-state fidelity `min_psi <psi| U^dag E(|psi><psi|) U |psi>`.
///
/// Qubits: Bloch-sphere grid of 10^4 points, then pattern search from the best
/// grid points. Larger dimensions: Haar sampling with local refinement,
/// flagged approximate.
pub fn min_gate_fidelity(ch: &KrausChannel, u: &ComplexOperator) -> Result<GateFidelity> {
    check_gate(ch, u)?;
    if ch.dim == 2 {
        Ok(GateFidelity {
            value: qubit_min_fidelity(ch, u),
            approximate: false,
        })
    } else {
        Ok(GateFidelity {
            value: sampled_min_fidelity(ch, u),
            approximate: true,
        })
    }
}

fn qubit_min_fidelity(ch: &KrausChannel, u: &ComplexOperator) -> f64 {
    // Phi(rho) = U^dag E(rho) U acts on Bloch vectors as r -> c + M r, and the
    // fidelity of |psi> with Bloch vector r is (1 + r.(c + M r))/2.
    let udag = u.adjoint();
    let phi = |x: &ComplexOperator| udag.matmul(&apply_kraus(&ch.kraus, x)).matmul(u);
    let paulis = pauli::all();
    let image_mixed = phi(&ComplexOperator::identity(2).scale(0.5));
    let c: Vec<f64> = paulis.iter().map(|s| s.trace_product(&image_mixed).re).collect();
    let mut m = [[0.0; 3]; 3];
    for (k, sk) in paulis.iter().enumerate() {
        let img = phi(&sk.scale(0.5));
        for (j, sj) in paulis.iter().enumerate() {
            m[j][k] = sj.trace_product(&img).re;
        }
    }
    let fid = |theta: f64, phi: f64| {
        let r = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let mut s = 0.0;
        for j in 0..3 {
            let image = c[j] + m[j][0] * r[0] + m[j][1] * r[1] + m[j][2] * r[2];
            s += r[j] * image;
        }
        (1.0 + s) / 2.0
    };

    const N: usize = 100;
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity(N * N);
    for i in 0..N {
        let theta = PI * (i as f64 + 0.5) / N as f64;
        for j in 0..N {
            let ph = 2.0 * PI * j as f64 / N as f64;
            grid.push((fid(theta, ph), theta, ph));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = grid[0].0;
    for &(f0, t0, p0) in grid.iter().take(8) {
        let (mut f, mut t, mut p) = (f0, t0, p0);
        let mut step = PI / N as f64;
        while step > 1e-10 {
            let mut moved = false;
            for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let cand = fid(t + dt, p + dp);
                if cand < f {
                    f = cand;
                    t += dt;
                    p += dp;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        best = best.min(f);
    }
    best
}

fn sampled_min_fidelity(ch: &KrausChannel, u: &ComplexOperator) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let d = ch.dim;
    let udag = u.adjoint();
    let fid = |psi: &[C64]| {
        let rho = ComplexOperator::projector(psi);
        udag.matmul(&apply_kraus(&ch.kraus, &rho)).matmul(u).sandwich(psi).re
    };
    let mut best_psi = crate::random::haar_state(d, &mut rng);
    let mut best = fid(&best_psi);
    for _ in 0..4000 {
        let psi = crate::random::haar_state(d, &mut rng);
        let f = fid(&psi);
        if f < best {
            best = f;
            best_psi = psi;
        }
    }
    let mut scale = 0.1;
    while scale > 1e-7 {
        let mut improved = false;
        for _ in 0..50 {
            let kick = crate::random::haar_state(d, &mut rng);
            let mut cand: Vec<C64> = best_psi
                .iter()
                .zip(&kick)
                .map(|(a, b)| a + b * scale)
                .collect();
            crate::operator::normalize(&mut cand);
            let f = fid(&cand);
            if f < best {
                best = f;
                best_psi = cand;
                improved = true;
            }
        }
        if !improved {
            scale /= 2.0;
        }
    }
    best
}

/// Infidelity bound `(sqrt(eps) + sqrt(tau))^2`, capped at 1, for a lab
/// measurement of infidelity `eps` preceded by a gate with worst-case
/// infidelity `tau`.
pub fn gate_independent_bound(eps: f64, tau: f64) -> Result<f64> {
    check_range("eps", eps, 0.0, 1.0)?;
    check_range("tau", tau, 0.0, 1.0)?;
    Ok((eps + tau + 2.0 * (eps * tau).sqrt()).min(1.0))
}

/// Basis in which the randomizing phase gate acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Z,
    X,
}

impl Axis {
    /// Unitary whose columns are the axis eigenbasis.
    pub fn basis_change(self) -> ComplexOperator {
        match self {
            Axis::Z => ComplexOperator::identity(2),
            Axis::X => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                ComplexOperator::from_real_rows(&[&[h, h], &[h, -h]]).expect("2x2")
            }
        }
    }

    pub fn pauli(self) -> ComplexOperator {
        match self {
            Axis::Z => pauli::z(),
            Axis::X => pauli::x(),
        }
    }

    pub fn target(self) -> TargetMeasurement {
        match self {
            Axis::Z => TargetMeasurement::pauli_z(),
            Axis::X => TargetMeasurement::pauli_x(),
        }
    }

    /// Axis whose eigenbasis matches `target`, if any.
    pub fn of_target(target: &TargetMeasurement) -> Option<Self> {
        [Axis::Z, Axis::X]
            .into_iter()
            .find(|a| target.dim() == 2 && a.target().same_projectors(target))
    }
}

/// Phase gate `U_theta = diag(1, e^{i theta})` in the axis basis, with a
/// dephasing exponent growing linearly with the rotation angle:
/// `Gamma(theta) = gamma_total * theta / (2 pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingGateModel {
    pub axis: Axis,
    pub gamma_total: f64,
}

impl DephasingGateModel {
    pub fn new(axis: Axis, gamma_total: f64) -> Result<Self> {
        check_range("gamma_total", gamma_total, 0.0, f64::INFINITY)?;
        Ok(Self { axis, gamma_total })
    }

    pub fn with_axis(self, axis: Axis) -> Self {
        Self { axis, ..self }
    }

    pub fn gamma(&self, theta: f64) -> f64 {
        self.gamma_total * theta / (2.0 * PI)
    }

    pub fn ideal_gate(&self, theta: f64) -> ComplexOperator {
        let b = self.axis.basis_change();
        let phase = ComplexOperator::new(
            2,
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::from_polar(1.0, theta)],
        )
        .expect("2x2");
        b.matmul(&phase).matmul(&b.adjoint())
    }
}

/// Noisy phase gate `{sqrt(a) U, sqrt(1-a) sigma_axis U}` with
/// `a = (1 + e^{-Gamma(theta)})/2`.
pub fn dephased_phase_gate(m: &DephasingGateModel, theta: f64) -> Result<KrausChannel> {
    if !(0.0..2.0 * PI).contains(&theta) {
        return Err(Error::OutOfRange {
            what: "theta",
            value: theta,
            range: "[0, 2pi)".into(),
        });
    }
    Ok(dephased_gate_unchecked(m, theta))
}

fn dephased_gate_unchecked(m: &DephasingGateModel, theta: f64) -> KrausChannel {
    let u = m.ideal_gate(theta);
    let a = (1.0 + (-m.gamma(theta)).exp()) / 2.0;
    KrausChannel {
        dim: 2,
        kraus: vec![u.scale(a.sqrt()), m.axis.pauli().matmul(&u).scale((1.0 - a).sqrt())],
    }
}

/// Integrates `d rho/dt = -i[sigma/2, rho] + kappa (sigma rho sigma - rho)`
/// with classical RK4 over time `theta`, where `sigma` is the axis Pauli and
/// `kappa = gamma_total / (4 pi)`. Agrees with [`dephased_phase_gate`] up to
/// the global phase of the generated unitary.
pub fn evolve_master_equation(
    m: &DephasingGateModel,
    rho: &ComplexOperator,
    theta: f64,
    steps: usize,
) -> ComplexOperator {
    let sigma = m.axis.pauli();
    let h = sigma.scale(0.5);
    let kappa = m.gamma_total / (4.0 * PI);
    let minus_i = C64::new(0.0, -1.0);
    let rhs = |r: &ComplexOperator| {
        let comm = &h.matmul(r) - &r.matmul(&h);
        let mut out = comm.scale_complex(minus_i);
        let mut diss = sigma.matmul(r).matmul(&sigma);
        diss.add_scaled(-1.0, r);
        out.add_scaled(kappa, &diss);
        out
    };
    let dt = theta / steps as f64;
    let mut r = rho.clone();
    for _ in 0..steps {
        let k1 = rhs(&r);
        let mut tmp = r.clone();
        tmp.add_scaled(dt / 2.0, &k1);
        let k2 = rhs(&tmp);
        let mut tmp = r.clone();
        tmp.add_scaled(dt / 2.0, &k2);
        let k3 = rhs(&tmp);
        let mut tmp = r.clone();
        tmp.add_scaled(dt, &k3);
        let k4 = rhs(&tmp);
        r.add_scaled(dt / 6.0, &k1);
        r.add_scaled(dt / 3.0, &k2);
        r.add_scaled(dt / 3.0, &k3);
        r.add_scaled(dt / 6.0, &k4);
    }
    r
}

/// Gauss-Legendre rule for the uniform mean over `theta in [0, 2 pi)`.
#[derive(Clone, Debug)]
pub struct ThetaQuadrature {
    /// `(theta, weight)` with weights summing to 1.
    nodes: Vec<(f64, f64)>,
}

pub const DEFAULT_QUADRATURE_NODES: usize = 256;

impl ThetaQuadrature {
    pub fn new(n: usize) -> Result<Self> {
        let n = NonZeroUsize::new(n).ok_or_else(|| Error::InvalidInput("zero quadrature nodes".into()))?;
        let rule = GaussLegendre::new(n);
        let nodes = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (PI * (x + 1.0), w / 2.0))
            .collect();
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(t, w)| w * f(t)).sum()
    }
}

impl Default for ThetaQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_QUADRATURE_NODES).expect("nonzero")
    }
}

/// `E_theta F_avg(E_theta, U_theta)`.
pub fn mean_average_fidelity(m: &DephasingGateModel, quad: &ThetaQuadrature) -> f64 {
    quad.mean(|theta| {
        let ch = dephased_gate_unchecked(m, theta);
        average_gate_fidelity(&ch, &m.ideal_gate(theta)).expect("unitary target")
    })
}

/// Dephasing strength whose mean average gate fidelity is `1 - eps_target/10`.
pub fn calibrate_dephasing(eps_target: f64, axis: Axis) -> Result<DephasingGateModel> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::OutOfRange {
            what: "eps_target",
            value: eps_target,
            range: "(0, 1)".into(),
        });
    }
    let quad = ThetaQuadrature::default();
    let target = 1.0 - eps_target / 10.0;
    let excess = |g: f64| mean_average_fidelity(&DephasingGateModel { axis, gamma_total: g }, &quad) - target;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical(format!(
                "could not bracket dephasing strength for eps_target = {eps_target}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    DephasingGateModel::new(axis, 0.5 * (lo + hi))
}

/// `E_theta[E_theta^*(M_i)]`: the measurement realized by randomizing with
/// noisy phase gates before the lab POVM. The model's axis is taken from the
/// target basis.
pub fn noisy_tuned_observable(
    target: &TargetMeasurement,
    lab: &Povm,
    m: &DephasingGateModel,
) -> Result<Povm> {
    noisy_tuned_observable_with(target, lab, m, &ThetaQuadrature::default())
}

pub fn noisy_tuned_observable_with(
    target: &TargetMeasurement,
    lab: &Povm,
    m: &DephasingGateModel,
    quad: &ThetaQuadrature,
) -> Result<Povm> {
    if lab.dim() != target.dim() {
        return Err(Error::DimensionMismatch(target.dim(), lab.dim()));
    }
    let axis = Axis::of_target(target).ok_or_else(|| {
        Error::InvalidInput("noisy phase randomization is defined for sigma_z and sigma_x targets".into())
    })?;
    let model = m.with_axis(axis);
    let mut out: Vec<ComplexOperator> = vec![ComplexOperator::zeros(2); lab.len()];
    for &(theta, w) in quad.nodes() {
        let dual = dephased_gate_unchecked(&model, theta).dual();
        for (acc, e) in out.iter_mut().zip(lab.elements()) {
            acc.add_scaled(w, &apply_kraus(&dual.kraus, e));
        }
    }
    Ok(Povm::from_elements_unchecked(
        out.into_iter().map(|e| e.hermitian_part()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{infidelity, tune};
    use crate::operator::hs_norm;
    use crate::random::{haar_state, near_identity_channel, random_channel, random_density, random_hermitian, random_povm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plus() -> ComplexOperator {
        ComplexOperator::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap()
    }

    #[test]
    fn apply_examples() {
        let id = KrausChannel::identity(2);
        assert_eq!(id.apply(&plus()).unwrap(), plus());
        let full = KrausChannel::qubit_dephasing(f64::INFINITY).unwrap();
        assert!(hs_norm(&(&full.apply(&plus()).unwrap() - &ComplexOperator::identity(2).scale(0.5))) < 1e-15);
        assert!(id.apply(&ComplexOperator::identity(3).scale(1.0 / 3.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for d in [2, 3, 4] {
            let ch = random_channel(d, 3, &mut rng);
            let out = ch.apply(&random_density(d, &mut rng)).unwrap();
            assert!((out.trace().re - 1.0).abs() < 1e-12);
            assert!(out.check_density().is_ok());
        }
    }

    #[test]
    fn rejects_non_trace_preserving() {
        assert!(KrausChannel::new(vec![ComplexOperator::identity(2).scale(0.9)]).is_err());
    }

    #[test]
    fn duality_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let ch = random_channel(3, 2, &mut rng);
        let dual = ch.dual();
        for _ in 0..100 {
            let x = random_hermitian(3, &mut rng);
            let y = random_hermitian(3, &mut rng);
            let lhs = ch.apply_operator(&x).unwrap().trace_product(&y);
            let rhs = x.trace_product(&dual.apply_operator(&y).unwrap());
            assert!((lhs - rhs).norm() < 1e-11);
        }
        assert!(hs_norm(&(&dual.dual().choi() - &ch.choi())) < 1e-12);
        let u = crate::random::haar_unitary(3, &mut rng);
        let uc = KrausChannel::unitary(u.clone());
        let y = random_hermitian(3, &mut rng);
        assert!(hs_norm(&(&uc.dual().apply_operator(&y).unwrap() - &y.conjugate_by(&u))) < 1e-12);
        let id = KrausChannel::identity(2).dual();
        assert_eq!(id.apply_operator(&pauli::x()).unwrap(), pauli::x());
    }

    #[test]
    fn depolarizing_fidelities() {
        let id = ComplexOperator::identity(2);
        for p in [0.0, 0.1, 0.3, 1.0] {
            let ch = KrausChannel::qubit_depolarizing(p).unwrap();
            assert!((average_gate_fidelity(&ch, &id).unwrap() - (1.0 - p / 2.0)).abs() < 1e-14);
            let min = min_gate_fidelity(&ch, &id).unwrap();
            assert!(!min.approximate);
            assert!((min.value - (1.0 - p / 2.0)).abs() < 1e-12);
        }
        let ch = KrausChannel::identity(2);
        assert!((average_gate_fidelity(&ch, &id).unwrap() - 1.0).abs() < 1e-15);
        assert!((min_gate_fidelity(&ch, &id).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dephasing_fidelities() {
        let id = ComplexOperator::identity(2);
        for g in [0.0, 0.05, 0.7] {
            let ch = KrausChannel::qubit_dephasing(g).unwrap();
            let e = (-g as f64).exp();
            assert!((average_gate_fidelity(&ch, &id).unwrap() - (2.0 + e) / 3.0).abs() < 1e-14);
            assert!((min_gate_fidelity(&ch, &id).unwrap().value - (1.0 + e) / 2.0).abs() < 1e-12);
            let equator = ComplexOperator::projector(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]).scale(0.5);
            let f = ch.apply(&equator).unwrap().trace_product(&equator).re;
            assert!((f - (1.0 + e) / 2.0).abs() < 1e-14);
        }
    }

    fn haar_mean_fidelity(ch: &KrausChannel, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let psi = haar_state(ch.dim(), &mut rng);
            let f = ch.apply(&ComplexOperator::projector(&psi)).unwrap().sandwich(&psi).re;
            sum += f;
            sum_sq += f * f;
        }
        let n = samples as f64;
        let mean = sum / n;
        (mean, ((sum_sq / n - mean * mean).max(0.0) / n).sqrt())
    }

    #[test]
    fn average_fidelity_matches_haar_monte_carlo() {
        let id = ComplexOperator::identity(2);
        for (ch, seed) in [
            (KrausChannel::qubit_depolarizing(0.2).unwrap(), 1),
            (KrausChannel::qubit_dephasing(0.4).unwrap(), 2),
        ] {
            let (mean, se) = haar_mean_fidelity(&ch, 1_000_000, seed);
            let exact = average_gate_fidelity(&ch, &id).unwrap();
            assert!((mean - exact).abs() < 3.0 * se + 1e-9, "{mean} vs {exact} (se {se})");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let ch = random_channel(3, 2, &mut rng);
        let (mean, se) = haar_mean_fidelity(&ch, 200_000, 3);
        let exact = average_gate_fidelity(&ch, &ComplexOperator::identity(3)).unwrap();
        assert!((mean - exact).abs() < 4.0 * se);
    }

    #[test]
    fn min_fidelity_below_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for d in [2, 2, 2, 3] {
            let ch = random_channel(d, 2, &mut rng);
            let u = crate::random::haar_unitary(d, &mut rng);
            let min = min_gate_fidelity(&ch, &u).unwrap();
            assert_eq!(min.approximate, d != 2);
            assert!(min.value <= average_gate_fidelity(&ch, &u).unwrap() + 1e-12);
        }
    }

    #[test]
    fn qubit_min_fidelity_beats_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let id = ComplexOperator::identity(2);
        for _ in 0..20 {
            let ch = near_identity_channel(2, 0.1, &mut rng);
            let min = min_gate_fidelity(&ch, &id).unwrap().value;
            for _ in 0..200 {
                let psi = haar_state(2, &mut rng);
                let f = ch.apply(&ComplexOperator::projector(&psi)).unwrap().sandwich(&psi).re;
                assert!(min <= f + 1e-12);
            }
        }
    }

    #[test]
    fn gate_independent_bound_examples() {
        assert_eq!(gate_independent_bound(0.01, 0.0).unwrap(), 0.01);
        assert_eq!(gate_independent_bound(0.0, 0.02).unwrap(), 0.02);
        assert_eq!(gate_independent_bound(0.8, 0.8).unwrap(), 1.0);
        assert!(gate_independent_bound(-0.1, 0.0).is_err());
    }

    #[test]
    fn transported_measurement_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let target = TargetMeasurement::pauli_z();
        let id = ComplexOperator::identity(2);
        for _ in 0..50 {
            let lab = crate::random::mix_povms(&target.ideal_povm(), &random_povm(2, 2, &mut rng), rng.random_range(0.0..0.3));
            let ch = near_identity_channel(2, rng.random_range(0.0..0.2), &mut rng);
            let eps = infidelity(&target, &lab).unwrap();
            let tau = 1.0 - min_gate_fidelity(&ch, &id).unwrap().value;
            let moved = infidelity(&target, &ch.transport_povm(&lab).unwrap()).unwrap();
            assert!(moved <= gate_independent_bound(eps, tau.max(0.0)).unwrap() + 1e-9);
        }
    }

    #[test]
    fn noiseless_gate_is_unitary() {
        for axis in [Axis::Z, Axis::X] {
            let m = DephasingGateModel::new(axis, 0.0).unwrap();
            let ch = dephased_phase_gate(&m, 1.1).unwrap();
            let u = m.ideal_gate(1.1);
            assert!((average_gate_fidelity(&ch, &u).unwrap() - 1.0).abs() < 1e-14);
        }
        let m = DephasingGateModel::new(Axis::Z, 0.0).unwrap();
        assert!(dephased_phase_gate(&m, 2.0 * PI).is_err());
        assert!(DephasingGateModel::new(Axis::Z, -1.0).is_err());
    }

    #[test]
    fn strong_dephasing_kills_coherence() {
        let m = DephasingGateModel::new(Axis::Z, 1e4).unwrap();
        let theta = 2.0 * PI - 1e-9;
        let out = dephased_phase_gate(&m, theta).unwrap().apply(&plus()).unwrap();
        assert!(out[(0, 1)].norm() < 1e-12);
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_integrator() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for axis in [Axis::Z, Axis::X] {
            for (gamma_total, theta) in [(0.02, PI), (0.3, 2.5), (0.01, 0.4)] {
                let m = DephasingGateModel::new(axis, gamma_total).unwrap();
                let ch = dephased_phase_gate(&m, theta).unwrap();
                for _ in 0..3 {
                    let rho = random_density(2, &mut rng);
                    let rk = evolve_master_equation(&m, &rho, theta, 2000);
                    let exact = ch.apply(&rho).unwrap();
                    assert!((&rk - &exact).max_abs() < 1e-8);
                }
            }
        }
        let m = DephasingGateModel::new(Axis::Z, 0.02).unwrap();
        assert!((m.gamma(PI) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quadrature_is_converged() {
        let m = DephasingGateModel::new(Axis::Z, 0.3).unwrap();
        let a = mean_average_fidelity(&m, &ThetaQuadrature::new(256).unwrap());
        let b = mean_average_fidelity(&m, &ThetaQuadrature::new(512).unwrap());
        assert!((a - b).abs() < 1e-14);
        let g: f64 = 0.3;
        let closed = (2.0 + (1.0 - (-g).exp()) / g) / 3.0;
        assert!((a - closed).abs() < 1e-14);
    }

    #[test]
    fn calibration_hits_target() {
        let quad = ThetaQuadrature::default();
        let mut last = 0.0;
        for k in 1..=10 {
            let eps = k as f64 * 0.01;
            let m = calibrate_dephasing(eps, Axis::Z).unwrap();
            assert!((mean_average_fidelity(&m, &quad) - (1.0 - eps / 10.0)).abs() < 1e-8);
            assert!(m.gamma_total > last);
            last = m.gamma_total;
        }
        let m = calibrate_dephasing(0.005, Axis::X).unwrap();
        assert!((mean_average_fidelity(&m, &quad) - 0.9995).abs() < 1e-8);
        assert!(calibrate_dephasing(1e-9, Axis::Z).unwrap().gamma_total < 1e-6);
        assert!(calibrate_dephasing(0.0, Axis::Z).is_err());
        assert!(calibrate_dephasing(1.0, Axis::Z).is_err());
    }

    #[test]
    fn noiseless_randomization_is_tuning() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        for target in [TargetMeasurement::pauli_z(), TargetMeasurement::pauli_x()] {
            let lab = random_povm(2, 2, &mut rng);
            let m = DephasingGateModel::new(Axis::Z, 0.0).unwrap();
            let noisy = noisy_tuned_observable(&target, &lab, &m).unwrap();
            assert!(noisy.max_distance(&tune(&target, &lab).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn noisy_tuning_quadrature_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let target = TargetMeasurement::pauli_x();
        let lab = random_povm(2, 2, &mut rng);
        let m = calibrate_dephasing(0.05, Axis::X).unwrap();
        let a = noisy_tuned_observable_with(&target, &lab, &m, &ThetaQuadrature::new(256).unwrap()).unwrap();
        let b = noisy_tuned_observable_with(&target, &lab, &m, &ThetaQuadrature::new(512).unwrap()).unwrap();
        assert!(a.max_distance(&b) < 1e-10);
        let comp = Povm::new(a.elements().to_vec());
        assert!(comp.is_ok());
    }

    #[test]
    fn noisy_tuning_rejects_other_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let m = DephasingGateModel::new(Axis::Z, 0.1).unwrap();
        let lab = random_povm(3, 3, &mut rng);
        assert!(noisy_tuned_observable(&TargetMeasurement::computational(3), &lab, &m).is_err());
    }
}
