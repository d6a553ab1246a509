use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rmw_core::bounds::{b_lab, b_rand, imp_eg1, imp_eg2, pq_measurements, product_bloch_state, visibility_threshold, Visibility};
use rmw_core::measurements::{misalignment_gap, TargetMeasurement};
use rmw_core::noise::{calibrate_dephasing, Axis, DephasingGateModel};
use rmw_core::operator::{expi_hermitian, ComplexOperator};
use rmw_core::optimizer::{worst_case_bound, worst_case_bound_from, Mode, SearchConfig, WarmStart};
use rmw_core::random::{haar_unitary, random_hermitian};
use rmw_core::sampling::{effective_assignment, estimate_witness, Randomization, ShotPlan};
use rmw_core::witnesses::{
    assemble_observable, certification_capability, chsh_like_witness, expectation, mub_witness, MeasurementAssignment,
    ProductTermWitness,
};

use crate::config::{ScenarioConfig, ScenarioId};
use crate::error::{CliError, CliResult};
use crate::table::{Cell, ResultTable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed for row `index`, independent of scheduling.
pub fn row_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Product state `(cos(pi/8)|0> + sin(pi/8)|1>)` on both qubits.
pub fn reference_state() -> ComplexOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    product_bloch_state([s, 0.0, s], [s, 0.0, s])
}

/// Runs a scenario on a resolved config with `jobs` worker threads.
pub fn run_scenario(cfg: &ScenarioConfig, jobs: usize) -> CliResult<ResultTable> {
    let id = cfg
        .scenario
        .ok_or_else(|| CliError::Schema("config has not been resolved against a scenario".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut table = pool.install(|| match id {
        ScenarioId::BoundsCurve => bounds_curve(cfg),
        ScenarioId::CapabilityFig1 => capability_fig1(cfg),
        ScenarioId::SamplingFig2 => sampling_fig2(cfg),
        ScenarioId::MubSweep => mub_sweep(cfg),
        ScenarioId::DephasingSweep => dephasing_sweep(cfg),
        ScenarioId::PqGrid => pq_grid(cfg),
        ScenarioId::Visibility => visibility(cfg),
        ScenarioId::MisalignmentAudit => misalignment_audit(cfg),
    })?;
    let mut head = vec![
        ("generator".to_string(), format!("rmw {VERSION}")),
        ("scenario".to_string(), id.as_str().to_string()),
        ("config_sha256".to_string(), cfg.hash()),
        ("seed".to_string(), cfg.seed.to_string()),
    ];
    head.append(&mut table.provenance);
    table.provenance = head;
    Ok(table)
}

fn eps_grid(cfg: &ScenarioConfig) -> &[f64] {
    cfg.eps_grid.as_deref().unwrap_or_default()
}

/// Computes rows in parallel and appends them in grid order.
fn fill<T: Sync>(
    table: &mut ResultTable,
    items: &[T],
    f: impl Fn(usize, &T) -> CliResult<Vec<Vec<Cell>>> + Sync + Send,
) -> CliResult<()> {
    let rows: Vec<Vec<Vec<Cell>>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect::<CliResult<_>>()?;
    for row in rows.into_iter().flatten() {
        table.push(row)?;
    }
    Ok(())
}

fn value(w: &ProductTermWitness, a: &MeasurementAssignment, state: &ComplexOperator) -> CliResult<f64> {
    Ok(expectation(&assemble_observable(w, a)?, state)?)
}

fn noise_model(cfg: &ScenarioConfig, eps: f64) -> CliResult<DephasingGateModel> {
    let fixed = cfg.noise.as_ref().and_then(|n| n.gamma_total);
    Ok(match fixed {
        Some(g) => DephasingGateModel::new(Axis::Z, g)?,
        None if eps == 0.0 => DephasingGateModel::new(Axis::Z, 0.0)?,
        None => calibrate_dephasing(eps, Axis::Z)?,
    })
}

fn noise_note(cfg: &ScenarioConfig) -> String {
    match cfg.noise.as_ref().and_then(|n| n.gamma_total) {
        Some(g) => format!("dephasing gamma_total = {g} on every randomization gate of both parties"),
        None => "dephasing calibrated to mean average gate fidelity 1 - eps/10 on every randomization gate of both parties"
            .to_string(),
    }
}

fn bounds_curve(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let mut t = ResultTable::new(&["eps", "b_lab", "b_rand"]);
    fill(&mut t, eps_grid(cfg), |_, &eps| {
        Ok(vec![vec![eps.into(), b_lab(eps)?.into(), b_rand(eps)?.into()]])
    })?;
    Ok(t)
}

fn capability_fig1(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let wmin = chsh_like_witness().ideal_minimum();
    let mut t = ResultTable::new(&["eps", "capability_lab", "capability_tuned"]);
    fill(&mut t, eps_grid(cfg), |_, &eps| {
        let lab = certification_capability(b_lab(eps)?, wmin)?.value;
        let tuned = certification_capability(b_rand(eps)?, wmin)?.value;
        Ok(vec![vec![eps.into(), lab.into(), tuned.into()]])
    })?;
    t.note("witness_minimum", format!("{wmin:.9e}"));
    Ok(t)
}

const SAMPLING_MODES: [&str; 4] = ["ideal", "lab", "tuned", "tuned-noisy"];

fn sampling_fig2(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let w = chsh_like_witness();
    let state = reference_state();
    let shots = cfg.shots.unwrap_or(5000);
    let randomization = cfg.randomization.unwrap_or(Randomization::ContinuousPhase);
    let mut t = ResultTable::new(&["eps", "mode", "shots", "mean", "std", "exact", "bound"]);
    let grid = eps_grid(cfg);
    let items: Vec<(usize, f64, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, &eps)| (0..SAMPLING_MODES.len()).map(move |m| (i, eps, m)))
        .collect();
    fill(&mut t, &items, |row, &(_, eps, m)| {
        let lab = imp_eg1(eps)?.assignment(&w)?;
        let ideal = MeasurementAssignment::ideal(&w);
        let model = noise_model(cfg, eps)?;
        let (a, rand_mode, noise, bound) = match SAMPLING_MODES[m] {
            "ideal" => (&ideal, Randomization::None, None, 0.0),
            "lab" => (&lab, Randomization::None, None, b_lab(eps)?),
            "tuned" => (&lab, randomization, None, b_rand(eps)?),
            _ => (&lab, randomization, Some(&model), b_rand(eps)?),
        };
        let plan = ShotPlan {
            shots,
            seed: row_seed(cfg.seed, row as u64),
            randomization: rand_mode,
        };
        let est = estimate_witness(&w, a, &state, &plan, noise)?;
        let exact = value(&w, &effective_assignment(&w, a, rand_mode, noise)?, &state)?;
        Ok(vec![vec![
            eps.into(),
            SAMPLING_MODES[m].into(),
            shots.into(),
            est.mean.into(),
            est.std_estimate.into(),
            exact.into(),
            bound.into(),
        ]])
    })?;
    t.note("state", "product of cos(pi/8)|0> + sin(pi/8)|1> on both qubits");
    t.note("measurements", "lab: M_x = (1-2eps) X + 2 sqrt(eps(1-eps)) Z, M_z = (1-2eps) Z + 2 sqrt(eps(1-eps)) X on both parties");
    t.note("noise", noise_note(cfg));
    Ok(t)
}

fn mub_sweep(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let base = cfg.search.clone().unwrap_or_default();
    let lab_restarts = cfg.lab_restarts.unwrap_or(3);
    let dims = cfg.dims.clone().unwrap_or_default();
    let items: Vec<(usize, f64)> = dims
        .iter()
        .flat_map(|&d| eps_grid(cfg).iter().map(move |&e| (d, e)))
        .collect();
    let mut t = ResultTable::new(&[
        "d",
        "eps",
        "mode",
        "bound",
        "capability",
        "restart_spread",
        "converged",
        "iterations",
        "projection_failures",
    ]);
    fill(&mut t, &items, |row, &(d, eps)| {
        let w = mub_witness(d)?;
        let wmin = w.ideal_minimum();
        let search = SearchConfig {
            seed: row_seed(cfg.seed, row as u64).wrapping_add(base.seed),
            ..base.clone()
        };
        let tuned = worst_case_bound(&w, eps, Mode::Tuned, &search)?;
        let lab_cfg = SearchConfig {
            restarts: lab_restarts,
            ..search
        };
        let lab = worst_case_bound_from(&w, eps, Mode::Lab, &lab_cfg, &[WarmStart::from(&tuned)])?;
        [(Mode::Tuned, &tuned), (Mode::Lab, &lab)]
            .into_iter()
            .map(|(mode, est)| {
                Ok(vec![
                    d.into(),
                    eps.into(),
                    mode.as_str().into(),
                    est.value.into(),
                    certification_capability(est.value, wmin)?.value.into(),
                    est.restart_spread.into(),
                    est.converged.into(),
                    est.iterations.into(),
                    est.projection_failures.into(),
                ])
            })
            .collect()
    })?;
    t.note("lab_search", format!("warm-started from the tuned optimum, {lab_restarts} restarts in total"));
    Ok(t)
}

fn dephasing_sweep(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let w = chsh_like_witness();
    let state = reference_state();
    let mut t = ResultTable::new(&["eps", "gamma_total", "lab_value", "tuned_value", "tuned_noisy_value"]);
    fill(&mut t, eps_grid(cfg), |_, &eps| {
        let lab = imp_eg1(eps)?.assignment(&w)?;
        let model = noise_model(cfg, eps)?;
        let tuned = effective_assignment(&w, &lab, Randomization::ContinuousPhase, None)?;
        let noisy = effective_assignment(&w, &lab, Randomization::ContinuousPhase, Some(&model))?;
        Ok(vec![vec![
            eps.into(),
            model.gamma_total.into(),
            value(&w, &lab, &state)?.into(),
            value(&w, &tuned, &state)?.into(),
            value(&w, &noisy, &state)?.into(),
        ]])
    })?;
    t.note("state", "product of cos(pi/8)|0> + sin(pi/8)|1> on both qubits");
    t.note("noise", noise_note(cfg));
    Ok(t)
}

fn pq_grid(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let w = chsh_like_witness();
    let state = reference_state();
    let ps = cfg.p_grid.clone().unwrap_or_default();
    let qs = cfg.q_grid.clone().unwrap_or_default();
    let mut items = Vec::new();
    let mut skipped = 0usize;
    for &eps in eps_grid(cfg) {
        for &p in &ps {
            for &q in &qs {
                if p.abs() + ((1.0 - 2.0 * eps).powi(2) + q * q).sqrt() <= 1.0 {
                    items.push((eps, p, q));
                } else {
                    skipped += 1;
                }
            }
        }
    }
    if items.is_empty() {
        return Err(CliError::Schema("no feasible (eps, p, q) combination in the grids".into()));
    }
    let mut t = ResultTable::new(&["eps", "p", "q", "lab_value", "tuned_value", "tuned_noiseless_value"]);
    fill(&mut t, &items, |_, &(eps, p, q)| {
        let lab = pq_measurements(eps, p, q)?.assignment(&w)?;
        let model = noise_model(cfg, eps)?;
        let noisy = effective_assignment(&w, &lab, Randomization::ContinuousPhase, Some(&model))?;
        let tuned = lab.tuned(&w)?;
        Ok(vec![vec![
            eps.into(),
            p.into(),
            q.into(),
            value(&w, &lab, &state)?.into(),
            value(&w, &noisy, &state)?.into(),
            value(&w, &tuned, &state)?.into(),
        ]])
    })?;
    t.note("state", "product of cos(pi/8)|0> + sin(pi/8)|1> on both qubits");
    t.note("noise", noise_note(cfg));
    t.note("infeasible_points_skipped", skipped.to_string());
    Ok(t)
}

fn visibility(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let w = chsh_like_witness();
    let items: Vec<(f64, &str, Mode)> = eps_grid(cfg)
        .iter()
        .flat_map(|&eps| {
            ["imp_eg1", "imp_eg2"]
                .into_iter()
                .flat_map(move |f| [(eps, f, Mode::Lab), (eps, f, Mode::Tuned)])
        })
        .collect();
    let mut t = ResultTable::new(&["eps", "family", "mode", "v_threshold", "certifiable"]);
    fill(&mut t, &items, |_, &(eps, family, mode)| {
        let meas = if family == "imp_eg1" { imp_eg1(eps)? } else { imp_eg2(eps)? };
        let lab = meas.assignment(&w)?;
        let (a, bound) = match mode {
            Mode::Lab => (lab, b_lab(eps)?),
            Mode::Tuned => (lab.tuned(&w)?, b_rand(eps)?),
        };
        let (v, ok) = match visibility_threshold(&w, &a, bound)? {
            Visibility::Certifiable(v) => (v, true),
            Visibility::Uncertifiable => (1.0, false),
        };
        Ok(vec![vec![eps.into(), family.into(), mode.as_str().into(), v.into(), ok.into()]])
    })?;
    t.note("state", "v |phi+><phi+| + (1 - v) I/4; uncertifiable rows report v_threshold = 1");
    Ok(t)
}

/// Random nondegenerate measurement and a misaligned copy of its basis.
fn misaligned_pair(d: usize, rng: &mut ChaCha8Rng) -> CliResult<(TargetMeasurement, Vec<Vec<rmw_core::C64>>)> {
    let u = haar_unitary(d, rng);
    let basis: Vec<_> = (0..d).map(|k| u.column(k)).collect();
    let outcomes: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target = TargetMeasurement::new(basis, outcomes)?;
    let tilt = expi_hermitian(&random_hermitian(d, rng), rng.random_range(0.0..0.5))?;
    let rotated = tilt.matmul(&u);
    Ok((target, (0..d).map(|k| rotated.column(k)).collect()))
}

fn misalignment_audit(cfg: &ScenarioConfig) -> CliResult<ResultTable> {
    let dims = cfg.dims.clone().unwrap_or_default();
    let trials: Vec<usize> = (0..cfg.trials.unwrap_or(1000)).collect();
    let mut t = ResultTable::new(&["trial", "d", "lhs", "rhs", "eps", "holds"]);
    fill(&mut t, &trials, |_, &trial| {
        let d = dims[trial % dims.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed(cfg.seed, trial as u64));
        let (target, basis) = misaligned_pair(d, &mut rng)?;
        let gap = misalignment_gap(&target, &basis)?;
        Ok(vec![vec![
            trial.into(),
            d.into(),
            gap.lhs.into(),
            gap.rhs.into(),
            gap.infidelity.into(),
            (gap.lhs >= gap.rhs - 1e-12).into(),
        ]])
    })?;
    Ok(t)
}
