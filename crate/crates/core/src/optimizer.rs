//! Worst-case separable witness values under infidelity-constrained
//! measurements, by alternating (see-saw) search.
//!
//! Each alternation fixes the product state and minimizes over every party's
//! POVMs, then fixes the POVMs and sweeps the parties' states. Both halves are
//! exact or monotone, so the objective never increases.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{Povm, TargetMeasurement};
use crate::operator::{
    eigh_unchecked, hs_norm, kron_all, min_eig_vector_unchecked, psd_project_unchecked, ComplexOperator, C64,
};
use crate::random::haar_state;
use crate::witnesses::{assemble_observable, expectation, MeasurementAssignment, ProductTermWitness};

/// Pure product state, one unit vector per party.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    parties: Vec<Vec<C64>>,
}

impl ProductState {
    pub fn new(parties: Vec<Vec<C64>>) -> Result<Self> {
        for (n, v) in parties.iter().enumerate() {
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if v.is_empty() || (norm - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "party {n} state has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { parties })
    }

    pub fn parties(&self) -> &[Vec<C64>] {
        &self.parties
    }

    pub fn party(&self, n: usize) -> &[C64] {
        &self.parties[n]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.parties.iter().map(|v| v.len()).collect()
    }

    /// Bloch vector of a qubit party.
    pub fn bloch(&self, n: usize) -> Result<[f64; 3]> {
        let v = &self.parties[n];
        if v.len() != 2 {
            return Err(Error::InvalidInput(format!("party {n} is not a qubit")));
        }
        let rho01 = v[0] * v[1].conj();
        Ok([
            2.0 * rho01.re,
            -2.0 * rho01.im,
            v[0].norm_sqr() - v[1].norm_sqr(),
        ])
    }

    pub fn density(&self) -> ComplexOperator {
        let projectors: Vec<ComplexOperator> =
            self.parties.iter().map(|v| ComplexOperator::projector(v)).collect();
        kron_all(&projectors).hermitian_part()
    }
}

fn default_restarts() -> usize {
    50
}
fn default_max_outer_iters() -> usize {
    500
}
fn default_convergence_tol() -> f64 {
    1e-9
}
fn default_inner_step_tol() -> f64 {
    1e-7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_inner_step_tol")]
    pub inner_step_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: default_restarts(),
            max_outer_iters: default_max_outer_iters(),
            convergence_tol: default_convergence_tol(),
            seed: 0,
            inner_step_tol: default_inner_step_tol(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidInput("restarts and max_outer_iters must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) || !(self.inner_step_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lab,
    Tuned,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lab => "lab",
            Mode::Tuned => "tuned",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundEstimate {
    pub value: f64,
    pub argmin_state: ProductState,
    pub argmin_measurements: MeasurementAssignment,
    pub converged: bool,
    pub iterations: usize,
    /// Max minus min of the final values over restarts.
    pub restart_spread: f64,
    /// Lab steps whose projection did not converge.
    pub projection_failures: usize,
}

fn rng_for(cfg: &SearchConfig, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64))
}

fn check_dims(op: &ComplexOperator, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || dims.contains(&0) || total != op.dim() {
        return Err(Error::InvalidInput(format!(
            "party dimensions {dims:?} do not match operator dimension {}",
            op.dim()
        )));
    }
    Ok(())
}

/// `<psi_rest| op |psi_rest>` as an operator on party `n`.
fn partial_contraction(op: &ComplexOperator, dims: &[usize], state: &[Vec<C64>], n: usize) -> ComplexOperator {
    let total = op.dim();
    let dn = dims[n];
    let mut digit = vec![0usize; total];
    let mut coef = vec![C64::new(1.0, 0.0); total];
    for idx in 0..total {
        let mut rem = idx;
        let mut c = C64::new(1.0, 0.0);
        for p in (0..dims.len()).rev() {
            let dig = rem % dims[p];
            rem /= dims[p];
            if p == n {
                digit[idx] = dig;
            } else {
                c *= state[p][dig];
            }
        }
        coef[idx] = c;
    }
    let mut h = ComplexOperator::zeros(dn);
    for i in 0..total {
        let ci = coef[i].conj();
        if ci == C64::new(0.0, 0.0) {
            continue;
        }
        for j in 0..total {
            h[(digit[i], digit[j])] += ci * op[(i, j)] * coef[j];
        }
    }
    h.hermitian_part()
}

fn product_value(op: &ComplexOperator, dims: &[usize], state: &[Vec<C64>]) -> f64 {
    let h = partial_contraction(op, dims, state, 0);
    h.sandwich(&state[0]).re
}

/// See-saw minimization of `<psi|op|psi>` over pure product states.
pub fn min_product_expectation(
    op: &ComplexOperator,
    dims: &[usize],
    cfg: &SearchConfig,
) -> Result<(f64, ProductState)> {
    cfg.validate()?;
    op.check_hermitian()?;
    check_dims(op, dims)?;
    let runs: Vec<(f64, Vec<Vec<C64>>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(cfg, r);
            let mut state: Vec<Vec<C64>> = dims.iter().map(|&d| haar_state(d, &mut rng)).collect();
            let mut value = product_value(op, dims, &state);
            for _ in 0..cfg.max_outer_iters {
                for n in 0..dims.len() {
                    let h = partial_contraction(op, dims, &state, n);
                    state[n] = min_eig_vector_unchecked(&h).1;
                }
                let next = product_value(op, dims, &state);
                let change = value - next;
                value = next;
                if change < cfg.convergence_tol {
                    break;
                }
            }
            (value, state)
        })
        .collect();
    let (best, _) = best_of(runs.iter().map(|r| r.0));
    let (value, state) = runs.into_iter().nth(best).expect("at least one restart");
    Ok((value, ProductState::new(state)?))
}

/// Index of the smallest value (ties to the lowest index) and the spread.
fn best_of(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (best.0, hi - lo)
}

/// Per-party, per-measurement POVM elements and expectation table for the
/// current product state.
#[derive(Clone, Debug)]
struct Search<'a> {
    w: &'a ProductTermWitness,
    povms: Vec<Vec<Vec<ComplexOperator>>>,
    state: Vec<Vec<C64>>,
    table: Vec<Vec<Vec<f64>>>,
}

impl<'a> Search<'a> {
    fn new(w: &'a ProductTermWitness, povms: Vec<Vec<Vec<ComplexOperator>>>, state: Vec<Vec<C64>>) -> Self {
        let mut s = Self {
            w,
            table: povms
                .iter()
                .map(|party| party.iter().map(|m| vec![0.0; m.len()]).collect())
                .collect(),
            povms,
            state,
        };
        for n in 0..s.state.len() {
            s.refresh(n);
        }
        s
    }

    fn refresh(&mut self, n: usize) {
        let psi = &self.state[n];
        for (m, elems) in self.povms[n].iter().enumerate() {
            for (i, e) in elems.iter().enumerate() {
                self.table[n][m][i] = e.sandwich(psi).re;
            }
        }
    }

    fn objective(&self) -> f64 {
        self.w
            .terms()
            .iter()
            .map(|t| {
                t.weight
                    * t.factors
                        .iter()
                        .enumerate()
                        .map(|(n, f)| self.table[n][f.measurement][f.outcome])
                        .product::<f64>()
            })
            .sum()
    }

    /// `c[m][i]`: the objective is `sum_{m,i} c[m][i] <psi_n|M_{m,i}|psi_n>`
    /// plus nothing else, with all other parties held fixed.
    fn coefficients(&self, n: usize) -> Vec<Vec<f64>> {
        let mut c: Vec<Vec<f64>> = self.povms[n].iter().map(|m| vec![0.0; m.len()]).collect();
        for t in self.w.terms() {
            let rest: f64 = t
                .factors
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != n)
                .map(|(k, f)| self.table[k][f.measurement][f.outcome])
                .product();
            let f = t.factors[n];
            c[f.measurement][f.outcome] += t.weight * rest;
        }
        c
    }

    fn state_sweep(&mut self) {
        for n in 0..self.state.len() {
            let c = self.coefficients(n);
            let dim = self.state[n].len();
            let mut h = ComplexOperator::zeros(dim);
            for (m, elems) in self.povms[n].iter().enumerate() {
                for (i, e) in elems.iter().enumerate() {
                    if c[m][i] != 0.0 {
                        h.add_scaled(c[m][i], e);
                    }
                }
            }
            self.state[n] = min_eig_vector_unchecked(&h.hermitian_part()).1;
            self.refresh(n);
        }
    }

    fn assignment(&self) -> MeasurementAssignment {
        let mut a = MeasurementAssignment::empty(self.w);
        for (n, party) in self.povms.iter().enumerate() {
            for (m, elems) in party.iter().enumerate() {
                a.set_unchecked(n, m, Povm::from_elements_unchecked(elems.clone()));
            }
        }
        a
    }
}

/// `(1 - eps) P_i + eps I/d`.
fn initial_povm(target: &TargetMeasurement, eps: f64) -> Vec<ComplexOperator> {
    let d = target.dim();
    (0..d)
        .map(|i| {
            let mut e = target.projector(i).scale(1.0 - eps);
            e.add_scaled(eps / d as f64, &ComplexOperator::identity(d));
            e
        })
        .collect()
}

/// Exact minimizer of `sum_i c_i <psi|M_i|psi>` over POVMs diagonal in the
/// target basis with infidelity at most `eps`.
fn tuned_lp(target: &TargetMeasurement, psi: &[C64], c: &[f64], eps: f64) -> Vec<ComplexOperator> {
    let d = target.dim();
    let q = target.populations(psi);
    // a[i][k]: weight of outcome i on basis vector k.
    let mut a = vec![vec![0.0; d]; d];
    let mut base = vec![0usize; d];
    let mut diag_mass = 0.0;
    for k in 0..d {
        let mut best = k;
        for i in 0..d {
            if c[i] * q[k] < c[best] * q[k] {
                best = i;
            }
        }
        base[k] = best;
        a[best][k] = 1.0;
        if best == k {
            diag_mass += 1.0;
        }
    }
    let need = d as f64 * (1.0 - eps);
    if diag_mass < need {
        let mut order: Vec<usize> = (0..d).filter(|&k| base[k] != k).collect();
        let pen = |k: usize| q[k] * (c[k] - c[base[k]]);
        order.sort_by(|&x, &y| pen(x).total_cmp(&pen(y)).then(x.cmp(&y)));
        let mut missing = need - diag_mass;
        for k in order {
            if missing <= 0.0 {
                break;
            }
            let t = missing.min(1.0);
            a[k][k] += t;
            a[base[k]][k] -= t;
            missing -= t;
        }
    }
    (0..d).map(|i| target.diagonal_operator(&a[i])).collect()
}

/// Tuned-mode measurement step: exact LP over diagonal POVMs for every
/// measurement of `party`, with the state and other parties fixed.
pub fn tuned_measurement_step(
    w: &ProductTermWitness,
    a: &MeasurementAssignment,
    state: &ProductState,
    party: usize,
    eps: f64,
) -> Result<Vec<Povm>> {
    let search = search_from(w, a, state)?;
    check_eps(eps)?;
    let c = search.coefficients(party);
    Ok(w.party(party)
        .measurements()
        .iter()
        .enumerate()
        .map(|(m, target)| Povm::from_elements_unchecked(tuned_lp(target, state.party(party), &c[m], eps)))
        .collect())
}

/// Lab-mode measurement step for every measurement of `party`, started from
/// the POVMs in `a`. The flag reports projection failures.
pub fn lab_measurement_step(
    w: &ProductTermWitness,
    a: &MeasurementAssignment,
    state: &ProductState,
    party: usize,
    eps: f64,
    cfg: &SearchConfig,
) -> Result<(Vec<Povm>, bool)> {
    let search = search_from(w, a, state)?;
    check_eps(eps)?;
    let c = search.coefficients(party);
    let mut failed = false;
    let mut out = Vec::new();
    for (m, target) in w.party(party).measurements().iter().enumerate() {
        let (elems, ok) = lab_pg(target, state.party(party), &c[m], &search.povms[party][m], eps, cfg.inner_step_tol);
        failed |= !ok;
        out.push(Povm::from_elements_unchecked(elems));
    }
    Ok((out, failed))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange {
            what: "eps",
            value: eps,
            range: "[0, 1)".into(),
        });
    }
    Ok(())
}

fn search_from<'a>(w: &'a ProductTermWitness, a: &MeasurementAssignment, state: &ProductState) -> Result<Search<'a>> {
    if state.dims() != w.party_dims() {
        return Err(Error::InvalidInput("state does not match the witness parties".into()));
    }
    let mut povms = Vec::new();
    for (n, party) in w.parties().iter().enumerate() {
        let mut row = Vec::new();
        for m in 0..party.measurements().len() {
            row.push(a.require(n, m)?.elements().to_vec());
        }
        povms.push(row);
    }
    Ok(Search::new(w, povms, state.parties().to_vec()))
}

const PG_STEP: f64 = 0.1;
const PG_MAX_HALVINGS: usize = 20;
const PG_MAX_ITERS: usize = 2000;
const DYKSTRA_MAX: usize = 10_000;
const DYKSTRA_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

fn linear_value(elems: &[ComplexOperator], psi: &[C64], c: &[f64]) -> f64 {
    elems.iter().zip(c).map(|(e, &ci)| ci * e.sandwich(psi).re).sum()
}

/// Projected gradient on `sum_i c_i <psi|M_i|psi>`.
fn lab_pg(
    target: &TargetMeasurement,
    psi: &[C64],
    c: &[f64],
    start: &[ComplexOperator],
    eps: f64,
    tol: f64,
) -> (Vec<ComplexOperator>, bool) {
    if eps == 0.0 {
        return (target.projectors(), true);
    }
    let q = ComplexOperator::projector(psi);
    let mut cur = start.to_vec();
    let mut fcur = linear_value(&cur, psi, c);
    let mut ok = true;
    for _ in 0..PG_MAX_ITERS {
        let mut eta = PG_STEP;
        let mut accepted = None;
        for _ in 0..=PG_MAX_HALVINGS {
            let moved: Vec<ComplexOperator> = cur
                .iter()
                .zip(c)
                .map(|(e, &ci)| {
                    let mut x = e.clone();
                    x.add_scaled(-eta * ci, &q);
                    x
                })
                .collect();
            match project_feasible(target, &moved, eps) {
                Some(cand) => {
                    let fc = linear_value(&cand, psi, c);
                    if fc <= fcur {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                None => ok = false,
            }
            eta /= 2.0;
        }
        let Some((cand, fc)) = accepted else { break };
        let change = fcur - fc;
        cur = cand;
        fcur = fc;
        if change < tol {
            break;
        }
    }
    (cur, ok)
}

/// Projection onto `{sum M_i = I, sum <phi_i|M_i|phi_i> >= d(1-eps)}`.
fn project_affine(target: &TargetMeasurement, x: &[ComplexOperator], eps: f64) -> Vec<ComplexOperator> {
    let d = target.dim();
    let df = d as f64;
    let mut excess = ComplexOperator::identity(d).scale(-1.0);
    for e in x {
        excess.add_scaled(1.0, e);
    }
    let mut y: Vec<ComplexOperator> = x
        .iter()
        .map(|e| {
            let mut v = e.clone();
            v.add_scaled(-1.0 / df, &excess);
            v
        })
        .collect();
    let fid: f64 = y
        .iter()
        .enumerate()
        .map(|(i, e)| e.sandwich(&target.basis()[i]).re)
        .sum();
    let need = df * (1.0 - eps);
    if fid < need {
        let t = (need - fid) / (df - 1.0);
        let id = ComplexOperator::identity(d);
        for (i, e) in y.iter_mut().enumerate() {
            e.add_scaled(t, &target.projector(i));
            e.add_scaled(-t / df, &id);
        }
    }
    y
}

/// Exact projection for two outcomes: with `M_0 = X`, `M_1 = I - X` the
/// feasible set is `{0 <= X <= I, Tr(X (P_0 - P_1)) >= 1 - 2 eps}`, whose
/// projection is `clip_[0,1](V + mu G)` for the smallest feasible `mu >= 0`.
fn project_binary(target: &TargetMeasurement, z: &[ComplexOperator], eps: f64) -> Vec<ComplexOperator> {
    let id = ComplexOperator::identity(2);
    let mut v = &z[0] - &z[1];
    v.add_scaled(1.0, &id);
    let v = v.scale(0.5);
    let g = &target.projector(0) - &target.projector(1);
    let clip = |mu: f64| {
        let mut shifted = v.clone();
        shifted.add_scaled(mu, &g);
        eigh_unchecked(&shifted).reconstruct_with(|x| x.clamp(0.0, 1.0))
    };
    let need = 1.0 - 2.0 * eps;
    let slack = |x: &ComplexOperator| x.trace_product(&g).re - need;
    let mut x = clip(0.0);
    if slack(&x) < 0.0 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while slack(&clip(hi)) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slack(&clip(mid)) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        x = clip(hi);
    }
    let x = x.hermitian_part();
    vec![x.clone(), &id - &x]
}

/// Orthonormal basis of the real space of `d x d` Hermitian matrices.
fn hermitian_basis(d: usize) -> Vec<ComplexOperator> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for k in 0..d {
        let mut e = ComplexOperator::zeros(d);
        e[(k, k)] = C64::new(1.0, 0.0);
        out.push(e);
    }
    for k in 0..d {
        for l in (k + 1)..d {
            let mut e = ComplexOperator::zeros(d);
            e[(k, l)] = C64::new(r, 0.0);
            e[(l, k)] = C64::new(r, 0.0);
            out.push(e);
            let mut e = ComplexOperator::zeros(d);
            e[(k, l)] = C64::new(0.0, -r);
            e[(l, k)] = C64::new(0.0, r);
            out.push(e);
        }
    }
    out
}

/// Dual of the feasible-set projection of `w`: minimises
/// `f(Y, mu) = sum_i |[w_i + mu P_i - Y]_+|^2 / 2 + Tr Y - mu need`.
struct ProjectionDual<'a> {
    w: &'a [ComplexOperator],
    projectors: Vec<ComplexOperator>,
    basis: Vec<ComplexOperator>,
    need: f64,
}

struct DualPoint {
    f: f64,
    grad: Vec<f64>,
    eigs: Vec<crate::operator::Eigh>,
}

impl ProjectionDual<'_> {
    fn shifted(&self, u: &[f64], free_mu: bool, i: usize) -> ComplexOperator {
        let mut a = self.w[i].clone();
        for (b, e) in self.basis.iter().enumerate() {
            if u[b] != 0.0 {
                a.add_scaled(-u[b], e);
            }
        }
        if free_mu {
            a.add_scaled(u[self.basis.len()], &self.projectors[i]);
        }
        a.hermitian_part()
    }

    fn evaluate(&self, u: &[f64], free_mu: bool) -> DualPoint {
        let d2 = self.basis.len();
        let d = self.projectors[0].dim();
        let mut f = u[..d].iter().sum::<f64>();
        let mut grad = vec![0.0; u.len()];
        for g in grad.iter_mut().take(d) {
            *g = 1.0;
        }
        if free_mu {
            f -= u[d2] * self.need;
            grad[d2] = -self.need;
        }
        let mut eigs = Vec::with_capacity(self.w.len());
        for i in 0..self.w.len() {
            let eig = eigh_unchecked(&self.shifted(u, free_mu, i));
            f += 0.5 * eig.values.iter().map(|&l| l.max(0.0).powi(2)).sum::<f64>();
            let m = eig.reconstruct_with(|l| l.max(0.0));
            for (b, e) in self.basis.iter().enumerate() {
                grad[b] -= m.trace_product(e).re;
            }
            if free_mu {
                grad[d2] += m.trace_product(&self.projectors[i]).re;
            }
            eigs.push(eig);
        }
        DualPoint { f, grad, eigs }
    }

    fn hessian(&self, point: &DualPoint, free_mu: bool) -> DMatrix<f64> {
        let d2 = self.basis.len();
        let m = d2 + usize::from(free_mu);
        let d = self.projectors[0].dim();
        let mut h = DMatrix::zeros(m, m);
        for (i, eig) in point.eigs.iter().enumerate() {
            let v = &eig.vectors;
            let lam = &eig.values;
            let mut omega = vec![0.0; d * d];
            for k in 0..d {
                for l in 0..d {
                    let (a, b) = (lam[k], lam[l]);
                    omega[k * d + l] = if a > 0.0 && b > 0.0 {
                        1.0
                    } else if a <= 0.0 && b <= 0.0 {
                        0.0
                    } else {
                        (a.max(0.0) - b.max(0.0)) / (a - b)
                    };
                }
            }
            let mut dirs: Vec<ComplexOperator> = self.basis.iter().map(|e| e.conjugate_by(v).scale(-1.0)).collect();
            if free_mu {
                dirs.push(self.projectors[i].conjugate_by(v));
            }
            for a in 0..m {
                let ta = dirs[a].entries();
                for b in a..m {
                    let tb = dirs[b].entries();
                    let val: f64 = (0..d * d).map(|k| omega[k] * (ta[k].conj() * tb[k]).re).sum();
                    h[(a, b)] += val;
                    if a != b {
                        h[(b, a)] += val;
                    }
                }
            }
        }
        h
    }

    /// Semismooth Newton with backtracking; `None` if the gradient does not vanish.
    fn solve(&self, u0: Vec<f64>, free_mu: bool) -> Option<(Vec<f64>, DualPoint)> {
        let mut u = u0;
        let mut point = self.evaluate(&u, free_mu);
        for _ in 0..NEWTON_MAX {
            let gnorm = point.grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gnorm < NEWTON_TOL {
                return Some((u, point));
            }
            let h = self.hessian(&point, free_mu);
            let rhs = -DVector::from_column_slice(&point.grad);
            let mut tau = 1e-12 + gnorm.min(1e-6);
            let step = loop {
                let reg = &h + DMatrix::identity(u.len(), u.len()) * tau;
                if let Some(ch) = reg.cholesky() {
                    break ch.solve(&rhs);
                }
                tau *= 100.0;
                if tau > 1e6 {
                    return None;
                }
            };
            let slope: f64 = step.iter().zip(&point.grad).map(|(s, g)| s * g).sum();
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let next = self.evaluate(&trial, free_mu);
                let slack = 1e-14 * (1.0 + point.f.abs());
                if next.f <= point.f + 1e-4 * t * slope + slack {
                    accepted = Some((trial, next));
                    break;
                }
                t *= 0.5;
            }
            let (trial, next) = accepted?;
            u = trial;
            point = next;
        }
        None
    }
}

/// Projection onto the feasible POVM set through its dual; `None` when the
/// Newton iteration stalls.
fn project_dual(target: &TargetMeasurement, z: &[ComplexOperator], eps: f64) -> Option<Vec<ComplexOperator>> {
    let d = target.dim();
    let dual = ProjectionDual {
        w: z,
        projectors: (0..z.len()).map(|i| target.projector(i)).collect(),
        basis: hermitian_basis(d),
        need: d as f64 * (1.0 - eps),
    };
    let elements = |p: &DualPoint| -> Vec<ComplexOperator> {
        p.eigs.iter().map(|e| e.reconstruct_with(|l| l.max(0.0))).collect()
    };
    let (y, point) = dual.solve(vec![0.0; d * d], false)?;
    let mut m = elements(&point);
    let fid: f64 = m.iter().zip(&dual.projectors).map(|(e, p)| e.trace_product(p).re).sum();
    if fid < dual.need {
        let mut u = y;
        u.push(0.0);
        let (_, point) = dual.solve(u, true)?;
        m = elements(&point);
    }
    Some(interior_fixup(target, project_affine(target, &m, eps), eps))
}

/// Restores positivity lost to rounding by mixing toward the interior point
/// `(1 - eps) P_i + eps I / d`, which keeps completeness and the fidelity constraint.
fn interior_fixup(target: &TargetMeasurement, mut y: Vec<ComplexOperator>, eps: f64) -> Vec<ComplexOperator> {
    let d = target.dim();
    let lam_min = y
        .iter()
        .map(|e| eigh_unchecked(e).values[0])
        .fold(f64::INFINITY, f64::min);
    if lam_min < 0.0 {
        let interior = initial_povm(target, eps);
        let margin = eps / d as f64;
        let s = -lam_min / (margin - lam_min);
        for (e, c) in y.iter_mut().zip(&interior) {
            *e = e.scale(1.0 - s);
            e.add_scaled(s, c);
        }
    }
    y.into_iter().map(|e| e.hermitian_part()).collect()
}

/// Euclidean projection onto the feasible POVM set by Dykstra's algorithm,
/// followed by a tiny pull toward a strictly positive feasible point so the
/// result is exactly feasible. `None` if the alternation does not converge.
fn project_feasible(target: &TargetMeasurement, z: &[ComplexOperator], eps: f64) -> Option<Vec<ComplexOperator>> {
    if z.len() == 2 {
        return Some(project_binary(target, z, eps));
    }
    project_dual(target, z, eps).or_else(|| project_dykstra(target, z, eps))
}

fn project_dykstra(target: &TargetMeasurement, z: &[ComplexOperator], eps: f64) -> Option<Vec<ComplexOperator>> {
    let n = z.len();
    let d = target.dim();
    let zero = || vec![ComplexOperator::zeros(d); n];
    let mut x = z.to_vec();
    let mut p = zero();
    let mut q = zero();
    let mut y = x.clone();
    let mut converged = false;
    for _ in 0..DYKSTRA_MAX {
        let shifted: Vec<ComplexOperator> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        y = project_affine(target, &shifted, eps);
        for i in 0..n {
            p[i] = &shifted[i] - &y[i];
        }
        let shifted: Vec<ComplexOperator> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let x_new: Vec<ComplexOperator> = shifted.iter().map(psd_project_unchecked).collect();
        for i in 0..n {
            q[i] = &shifted[i] - &x_new[i];
        }
        let gap = x_new.iter().zip(&y).map(|(a, b)| hs_norm(&(a - b))).fold(0.0, f64::max);
        let step = x_new.iter().zip(&x).map(|(a, b)| hs_norm(&(a - b))).fold(0.0, f64::max);
        x = x_new;
        if gap < DYKSTRA_TOL && step < DYKSTRA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    Some(interior_fixup(target, y, eps))
}

/// One restart of the alternating search.
struct RunResult {
    value: f64,
    state: Vec<Vec<C64>>,
    povms: Vec<Vec<Vec<ComplexOperator>>>,
    converged: bool,
    iterations: usize,
    projection_failures: usize,
}

/// Starting point for a restart.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub state: ProductState,
    pub measurements: MeasurementAssignment,
}

impl From<&BoundEstimate> for WarmStart {
    fn from(b: &BoundEstimate) -> Self {
        Self {
            state: b.argmin_state.clone(),
            measurements: b.argmin_measurements.clone(),
        }
    }
}

fn run_restart(
    w: &ProductTermWitness,
    eps: f64,
    mode: Mode,
    cfg: &SearchConfig,
    start: Option<&WarmStart>,
    restart: usize,
) -> Result<RunResult> {
    let mut search = match start {
        Some(ws) => search_from(w, &ws.measurements, &ws.state)?,
        None => {
            let mut rng = rng_for(cfg, restart);
            let povms = w
                .parties()
                .iter()
                .map(|p| p.measurements().iter().map(|t| initial_povm(t, eps)).collect())
                .collect();
            let state = w.party_dims().iter().map(|&d| haar_state(d, &mut rng)).collect();
            Search::new(w, povms, state)
        }
    };
    let mut value = search.objective();
    let mut converged = false;
    let mut iterations = 0;
    let mut projection_failures = 0;
    let slack = 1e-10 * (1.0 + value.abs());
    for it in 0..cfg.max_outer_iters {
        iterations = it + 1;
        for n in 0..search.state.len() {
            let c = search.coefficients(n);
            for (m, target) in w.party(n).measurements().iter().enumerate() {
                let elems = match mode {
                    Mode::Tuned => tuned_lp(target, &search.state[n], &c[m], eps),
                    Mode::Lab => {
                        let (elems, ok) =
                            lab_pg(target, &search.state[n], &c[m], &search.povms[n][m], eps, cfg.inner_step_tol);
                        if !ok {
                            projection_failures += 1;
                        }
                        elems
                    }
                };
                search.povms[n][m] = elems;
            }
            search.refresh(n);
        }
        let after_measurements = search.objective();
        let mut inner = after_measurements;
        for _ in 0..200 {
            search.state_sweep();
            let next = search.objective();
            let change = inner - next;
            inner = next;
            if change < cfg.convergence_tol {
                break;
            }
        }
        if after_measurements > value + slack || inner > after_measurements + slack {
            return Err(Error::Numerical(format!(
                "alternating search increased the objective ({value} -> {after_measurements} -> {inner})"
            )));
        }
        let change = value - inner;
        value = inner;
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(RunResult {
        value,
        state: search.state,
        povms: search.povms,
        converged,
        iterations,
        projection_failures,
    })
}

/// Most negative witness value over product states and measurements with
/// infidelity at most `eps` (tuned mode: diagonal in each target basis).
pub fn worst_case_bound(w: &ProductTermWitness, eps: f64, mode: Mode, cfg: &SearchConfig) -> Result<BoundEstimate> {
    worst_case_bound_from(w, eps, mode, cfg, &[])
}

/// As [`worst_case_bound`], with the first restarts started from `warm`
/// instead of random points. The total restart count is unchanged.
pub fn worst_case_bound_from(
    w: &ProductTermWitness,
    eps: f64,
    mode: Mode,
    cfg: &SearchConfig,
    warm: &[WarmStart],
) -> Result<BoundEstimate> {
    cfg.validate()?;
    check_eps(eps)?;
    let runs: Vec<RunResult> = (0..cfg.restarts.max(warm.len()))
        .into_par_iter()
        .map(|r| run_restart(w, eps, mode, cfg, warm.get(r), r))
        .collect::<Result<_>>()?;
    let (best, restart_spread) = best_of(runs.iter().map(|r| r.value));
    let projection_failures = runs.iter().map(|r| r.projection_failures).sum();
    let run = runs.into_iter().nth(best).expect("at least one restart");
    let search = Search::new(w, run.povms, run.state);
    let argmin_measurements = search.assignment();
    let argmin_state = ProductState::new(search.state.clone())?;
    let op = assemble_observable(w, &argmin_measurements)?;
    let value = expectation(&op.hermitian_part(), &argmin_state.density())?;
    Ok(BoundEstimate {
        value,
        argmin_state,
        argmin_measurements,
        converged: run.converged,
        iterations: run.iterations,
        restart_spread,
        projection_failures,
    })
}
