use impact_pair::hybrid::{self, IntegratorConfig, Scenario};
use impact_pair::ident::{self, Bound, FitConfig, FitProblem, FreeParam, Weights, PENALTY};
use impact_pair::model::SENSOR_QUANTUM;
use impact_pair::{Error, SystemParams};

fn ic() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn problem(sc: &Scenario, free: &[FreeParam], noise: f64, seed: u64) -> FitProblem {
    let clean = hybrid::simulate(sc, &ic()).unwrap();
    let trace = ident::synthetic_trace(&clean, noise, seed).unwrap();
    let free = free
        .iter()
        .map(|p| (*p, p.default_bound(p.get(&sc.params))))
        .collect();
    FitProblem::new(trace, sc.clone(), free, Weights::default(), ic()).unwrap()
}

fn scenario_1() -> Scenario {
    Scenario::idle_impulse(SystemParams::steel(), 1.0, 0.01)
}

fn scenario_2() -> Scenario {
    Scenario::constant_drag(SystemParams::aluminium(), 0.01).with_t_end(1.5)
}

#[test]
fn init_at_truth_without_noise_converges_exactly() {
    let sc = scenario_1();
    let pr = problem(&sc, &[FreeParam::K, FreeParam::Alpha], 0.0, 0);
    let res = ident::fit(&pr, &pr.nominal(), &FitConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.rmse <= 1e-9, "{}", res.rmse);
    assert_eq!(res.value(FreeParam::K), Some(sc.params.k));
}

#[test]
fn impact_position_recovered_within_sensor_quantum() {
    let sc = scenario_2();
    let pr = problem(&sc, &[FreeParam::Xc], SENSOR_QUANTUM, 4);
    let cfg = FitConfig {
        starts: 3,
        max_evals: 400,
        ..FitConfig::default()
    };
    let res = ident::fit(&pr, &[sc.params.x_c + 5e-4], &cfg).unwrap();
    let x_c = res.value(FreeParam::Xc).unwrap();
    assert!((x_c - sc.params.x_c).abs() <= SENSOR_QUANTUM, "x_c = {x_c}");
}

#[test]
fn shifted_impact_position_scores_worse() {
    let sc = scenario_2();
    let pr = problem(&sc, &[FreeParam::Xc], 0.0, 0);
    let truth = ident::objective(&[sc.params.x_c], &pr);
    let shifted = ident::objective(&[sc.params.x_c + 1e-3], &pr);
    assert!(truth <= 1e-9);
    assert!(shifted > truth);
}

#[test]
fn fit_never_ends_worse_than_its_start() {
    let sc = scenario_1();
    let pr = problem(&sc, &[FreeParam::K, FreeParam::Alpha], 5e-4, 9);
    let init = [3.0 * sc.params.k, 2.0 * sc.params.alpha];
    let cfg = FitConfig {
        starts: 2,
        max_evals: 150,
        ..FitConfig::default()
    };
    let res = ident::fit(&pr, &init, &cfg).unwrap();
    assert!(res.objective <= ident::objective(&init, &pr));
    assert!(res.n_evals <= cfg.max_evals);
    for ((p, b), (q, v)) in pr.free().iter().zip(&res.params_hat) {
        assert_eq!(p, q);
        assert!(b.contains(*v));
    }
}

#[test]
fn seeded_fit_is_reproducible() {
    let sc = scenario_1();
    let pr = problem(&sc, &[FreeParam::K, FreeParam::Alpha], 5e-4, 2);
    let cfg = FitConfig {
        starts: 3,
        max_evals: 200,
        seed: 17,
        ..FitConfig::default()
    };
    let init = [2.0 * sc.params.k, sc.params.alpha];
    let a = ident::fit(&pr, &init, &cfg).unwrap();
    let b = ident::fit(&pr, &init, &cfg).unwrap();
    assert_eq!(a.params_hat, b.params_hat);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.n_evals, b.n_evals);
    assert_eq!(a.trace_hat, b.trace_hat);
}

#[test]
fn failing_candidates_get_finite_penalty() {
    let sc = scenario_1();
    let clean = hybrid::simulate(&sc, &ic()).unwrap();
    let trace = ident::synthetic_trace(&clean, 0.0, 0).unwrap();
    let tight = IntegratorConfig {
        max_events: 1,
        ..ic()
    };
    let free = vec![(FreeParam::K, Bound::new(1e3, 1e10))];
    let pr = FitProblem::new(trace, sc.clone(), free, Weights::default(), tight).unwrap();
    // a stiff frame squeezes impact, reversal and separation into one step
    let stiff = SystemParams {
        k: 1e9,
        ..sc.params
    };
    assert!(matches!(pr.simulate(&stiff), Err(Error::Chattering { .. })));
    let v = ident::objective(&[1e9], &pr);
    assert_eq!(v, PENALTY);
    assert!(v.is_finite());
    assert_eq!(ident::objective(&[1e11], &pr), PENALTY);
}

#[test]
fn coupling_surface_minimum_at_generating_cell() {
    let sc = scenario_1();
    let pr = problem(&sc, &[FreeParam::K, FreeParam::Alpha], 7.7e-4, 3);
    let (k0, a0) = (sc.params.k, sc.params.alpha);
    let factors = [0.55, 0.7, 0.85, 1.0, 1.1, 1.3, 1.6];
    let k_grid: Vec<f64> = factors.iter().map(|f| f * k0).collect();
    let a_grid: Vec<f64> = factors.iter().map(|f| f * a0).collect();
    let s = ident::profile_coupling(&pr, &k_grid, &a_grid).unwrap();
    let (i, j) = s.argmin();
    assert_eq!((k_grid[i], a_grid[j]), (k0, a0));
    assert_eq!(s.to_csv().lines().count(), 1 + factors.len() * factors.len());
}

#[test]
fn coupling_surface_flat_in_alpha_without_impacts() {
    let sc = Scenario::idle_impulse(SystemParams::steel(), 1.0, 1.0);
    let pr = problem(&sc, &[FreeParam::K, FreeParam::Alpha], 1e-4, 1);
    let s = ident::profile_coupling(&pr, &[5e3, 1e4, 2e4], &[0.0, 0.2, 0.7, 1.5]).unwrap();
    for row in &s.values {
        assert!(row.iter().all(|v| *v == row[0]), "{row:?}");
    }
}

#[test]
fn doubling_noise_does_not_lower_the_minimum() {
    let sc = scenario_1();
    let clean = hybrid::simulate(&sc, &ic()).unwrap();
    let sigma = ident::amplitude_noise(&clean, 0.005);
    let (k0, a0) = (sc.params.k, sc.params.alpha);
    let k_grid = [0.8 * k0, k0, 1.25 * k0];
    let a_grid = [0.8 * a0, a0, 1.25 * a0];
    let free = vec![
        (FreeParam::K, FreeParam::K.default_bound(k0)),
        (FreeParam::Alpha, FreeParam::Alpha.default_bound(a0)),
    ];
    let min_at = |noise: f64, seed: u64| {
        let trace = ident::synthetic_trace(&clean, noise, seed).unwrap();
        let pr = FitProblem::new(trace, sc.clone(), free.clone(), Weights::default(), ic()).unwrap();
        ident::profile_coupling(&pr, &k_grid, &a_grid).unwrap().min()
    };
    let seeds = 0..24u64;
    let n = seeds.clone().count() as f64;
    let single: f64 = seeds.clone().map(|s| min_at(sigma, s)).sum::<f64>() / n;
    let double: f64 = seeds.map(|s| min_at(2.0 * sigma, s + 1000)).sum::<f64>() / n;
    assert!(double >= single, "{double} < {single}");
}

#[test]
fn velocity_weight_uses_reconstructed_velocity() {
    let sc = scenario_1();
    let clean = hybrid::simulate(&sc, &ic()).unwrap();
    let trace = ident::synthetic_trace(&clean, 0.0, 0).unwrap();
    let free = vec![(FreeParam::Alpha, FreeParam::Alpha.default_bound(sc.params.alpha))];
    let weights = Weights {
        position: 1.0,
        velocity: Some(0.1),
    };
    let pr = FitProblem::new(trace, sc.clone(), free, weights, ic()).unwrap();
    // filtered velocity differs from the true one near impacts, so the truth no longer scores zero
    let at_truth = ident::objective(&[sc.params.alpha], &pr);
    assert!(at_truth > 0.0 && at_truth < PENALTY);
    assert!(ident::objective(&[0.6], &pr) > at_truth);
}
