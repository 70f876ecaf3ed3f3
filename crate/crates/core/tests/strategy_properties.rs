use std::sync::Arc;

use emberline_core::env::{EpisodeConfig, FireEnv, Movement, Scenario};
use emberline_core::firespread::{FireConfig, Ignition};
use emberline_core::strategy::{
    evaluate_policy, optimize_fireline, run_episode, CemParams, FirelinePlan, PolicySpec, RandomPolicy,
};
use emberline_core::terrain::LayerStack;
use emberline_core::wind::WindField;
use proptest::prelude::*;

fn scenario(n: usize, fuel: u16, ignition: Ignition) -> Scenario {
    let fire = FireConfig {
        ignition,
        max_fire_duration: 30,
        ..Default::default()
    };
    Scenario::new(
        Arc::new(LayerStack::uniform(n, n, fuel, 30.0).unwrap()),
        WindField::constant(2.0, 0.0).unwrap(),
        &fire,
    )
    .unwrap()
}

fn fast_agent(start: (usize, usize), seed: u64) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::new(start).with_seed(seed);
    cfg.agent_speed = 8;
    cfg
}

fn small_cem() -> CemParams {
    CemParams {
        population: 16,
        iterations: 6,
        elite_fraction: 0.25,
        panel: 2,
        ..Default::default()
    }
}

#[test]
fn random_policy_is_uniform() {
    // chi-square goodness of fit over 10,000 draws, 20 bins
    let bins = 20;
    let draws = 10_000;
    let p = RandomPolicy::new(0xfeed);
    let mut counts = vec![0usize; bins];
    for step in 0..draws {
        counts[p.index(step, bins)] += 1;
    }
    let expected = draws as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 19 degrees of freedom
    assert!(chi2 < 43.82, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn evaluation_means_lie_within_episode_range() {
    let sc = scenario(16, 1, Ignition::RANDOM);
    let cfg = fast_agent((8, 0), 5);
    let report = evaluate_policy(&PolicySpec::Random, &sc, &cfg, 6).unwrap();
    assert_eq!(report.episodes.len(), 6);
    let saved: Vec<f64> = report.episodes.iter().map(|m| m.area_saved as f64).collect();
    let lo = saved.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = saved.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= report.mean.area_saved && report.mean.area_saved <= hi);
    assert!(report.std.area_saved >= 0.0);
    let mean = saved.iter().sum::<f64>() / saved.len() as f64;
    assert!((report.mean.area_saved - mean).abs() < 1e-9);
}

#[test]
fn plan_policy_builds_exactly_the_plan() {
    let sc = scenario(16, 8, Ignition::at(14, 8));
    let cfg = fast_agent((0, 0), 1);
    let plan = FirelinePlan::rectangle((3, 3), (9, 12));
    let spec = PolicySpec::Plan { plan: plan.clone() };
    let run = || {
        let (mut env, _) = FireEnv::reset(&sc, &cfg).unwrap();
        let mut policy = spec.build(&cfg, sc.dims()).unwrap();
        let m = run_episode(&mut env, policy.as_mut(), |_, _, _| {}).unwrap();
        (m, env.state().clone())
    };
    let (m, state) = run();
    for cell in plan.cells() {
        assert!(state.status_at(cell).is_mitigated(), "{cell:?}");
    }
    assert_eq!((m, state), run());
}

#[test]
fn optimizer_is_reproducible_and_elitist() {
    let sc = scenario(20, 8, Ignition::at(10, 10));
    let cfg = fast_agent((10, 0), 9);
    let budget = 40;
    let a = optimize_fireline(&sc, &cfg, budget, &small_cem()).unwrap();
    let b = optimize_fireline(&sc, &cfg, budget, &small_cem()).unwrap();
    assert_eq!(a, b);

    assert!(a.plan.len() <= budget);
    a.plan.validate(sc.dims(), Some(budget)).unwrap();
    for w in a.history.windows(2) {
        assert!(w[1].best >= w[0].best);
        assert!(w[1].elite_mean >= w[0].elite_mean);
    }
    assert_eq!(a.report.mean.area_saved, a.history.last().unwrap().best);
    assert!(a.report.mean.area_saved > 0.0, "{:?}", a.history);

    // the incumbent does at least as well as a straight line run by the line policy
    let line = PolicySpec::Line { direction: Movement::Right, target: Some(8) };
    let panel = a.report.seeds.clone();
    let baseline = emberline_core::strategy::evaluate_on_seeds(&line, &sc, &cfg, &panel).unwrap();
    assert!(a.report.mean.area_saved >= baseline.mean.area_saved);
}

#[test]
fn optimizer_honours_a_one_cell_budget() {
    let sc = scenario(12, 8, Ignition::at(6, 6));
    let cfg = fast_agent((0, 0), 2);
    let params = CemParams { iterations: 2, ..small_cem() };
    let r = optimize_fireline(&sc, &cfg, 1, &params).unwrap();
    assert!(r.plan.len() <= 1);
    assert!(optimize_fireline(&sc, &cfg, 0, &params).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_cells_are_connected_and_in_bounds(
        vertices in proptest::collection::vec((0usize..30, 0usize..30), 1..6),
        closed in any::<bool>(),
    ) {
        let plan = if closed { FirelinePlan::closed(&vertices) } else { FirelinePlan::open(&vertices) };
        let cells = plan.cells();
        prop_assert!(cells.iter().all(|&(r, c)| r < 30 && c < 30));
        for v in &vertices {
            prop_assert!(cells.contains(v));
        }
        let mut seen = std::collections::HashSet::new();
        prop_assert!(cells.iter().all(|c| seen.insert(*c)));
        prop_assert_eq!(plan.len(), cells.len());
    }
}
