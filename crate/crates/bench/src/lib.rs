//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use emberline_core::env::{EpisodeConfig, Scenario};
use emberline_core::firespread::{FireConfig, FireState, Ignition};
use emberline_core::terrain::{generate_procedural, FuelCatalog, ProceduralParams};
use emberline_core::wind::WindField;

/// Procedural `n`x`n` scenario with a steady 5 mph breeze and a central ignition.
pub fn scenario(n: usize) -> Scenario {
    let stack = generate_procedural(
        7,
        n,
        n,
        30.0,
        None,
        &ProceduralParams::default(),
        Arc::new(FuelCatalog::standard()),
    )
    .expect("valid procedural params");
    let fire = FireConfig {
        ignition: Ignition::at(n / 2, n / 2),
        ..Default::default()
    };
    Scenario::new(Arc::new(stack), WindField::constant(5.0, 45.0).expect("valid wind"), &fire).expect("valid scenario")
}

/// A fire state advanced `steps` fire steps from the central ignition.
pub fn burning_state(scenario: &Scenario, steps: usize) -> FireState {
    let mut s = FireState::for_stack(scenario.stack());
    let (r, c) = scenario.dims();
    s.ignite((r / 2, c / 2)).expect("center is on the grid");
    for _ in 0..steps {
        scenario.engine().step(&mut s).expect("step");
    }
    s
}

pub fn episode_config(n: usize) -> EpisodeConfig {
    let mut cfg = EpisodeConfig::new((n / 2, 0)).with_seed(3);
    cfg.agent_speed = 4;
    cfg
}
