use rmw_core::bounds::{b_lab, b_rand, imp_eg1, product_bloch_state};
use rmw_core::optimizer::{worst_case_bound, Mode, SearchConfig};
use rmw_core::sampling::{estimate_witness, Randomization, ShotPlan};
use rmw_core::witnesses::{assemble_observable, certification_capability, chsh_like_witness, expectation};

#[test]
fn searched_bounds_match_closed_forms() {
    let w = chsh_like_witness();
    let cfg = SearchConfig { restarts: 10, ..SearchConfig::default() };
    for eps in [0.01, 0.1] {
        let lab = worst_case_bound(&w, eps, Mode::Lab, &cfg).unwrap();
        let tuned = worst_case_bound(&w, eps, Mode::Tuned, &cfg).unwrap();
        assert!((lab.value - b_lab(eps).unwrap()).abs() < 1e-6, "{eps}");
        assert!((tuned.value - b_rand(eps).unwrap()).abs() < 1e-6, "{eps}");
        let cap_lab = certification_capability(lab.value, w.ideal_minimum()).unwrap();
        let cap_tuned = certification_capability(tuned.value, w.ideal_minimum()).unwrap();
        assert!(cap_tuned.value > cap_lab.value);
    }
}

#[test]
fn randomized_sampling_estimates_tuned_expectation() {
    let w = chsh_like_witness();
    let eps = 0.05;
    let lab = imp_eg1(eps).unwrap().assignment(&w).unwrap();
    let tuned = lab.tuned(&w).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let state = product_bloch_state([s, 0.0, s], [s, 0.0, s]);
    let exact = expectation(&assemble_observable(&w, &tuned).unwrap(), &state).unwrap();
    let plan = ShotPlan { shots: 40_000, seed: 7, randomization: Randomization::ContinuousPhase };
    let est = estimate_witness(&w, &lab, &state, &plan, None).unwrap();
    assert!((est.mean - exact).abs() < 5.0 * est.std_estimate, "{} vs {exact}", est.mean);
    assert_eq!(est.per_setting_counts.iter().map(|c| c.shots).sum::<u64>(), 40_000);
}
