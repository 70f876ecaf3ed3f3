use std::sync::Arc;

use emberline_core::firespread::{CellStatus, FireConfig, FireEngine, FireState, Ignition, Mitigation};
use emberline_core::grid::{Cell, Grid};
use emberline_core::terrain::{FuelCatalog, FuelWeight, LayerStack, ProceduralParams, FEET_PER_METER};
use emberline_core::terrain::generate_procedural;
use emberline_core::wind::WindField;
use proptest::prelude::*;

fn burn_to_quiescence(engine: &FireEngine, state: &mut FireState) {
    let cap = engine.stack().area() * engine.config().max_fire_duration as usize + 1;
    for _ in 0..cap {
        if !state.is_active() {
            return;
        }
        engine.step(state).unwrap();
    }
    panic!("fire did not quiesce");
}

/// (north, south, west, east) reach of burned cells from `origin`.
fn extents(state: &FireState, (r0, c0): Cell) -> (usize, usize, usize, usize) {
    let mut e = (0, 0, 0, 0);
    for ((r, c), s) in state.status().indexed_iter() {
        if *s == CellStatus::Burned {
            e.0 = e.0.max(r0.saturating_sub(r));
            e.1 = e.1.max(r.saturating_sub(r0));
            e.2 = e.2.max(c0.saturating_sub(c));
            e.3 = e.3.max(c.saturating_sub(c0));
        }
    }
    e
}

fn engine(stack: LayerStack, wind: WindField, fire: FireConfig) -> FireEngine {
    FireEngine::new(Arc::new(stack), wind, &fire).unwrap()
}

#[test]
fn calm_flat_spread_is_symmetric() {
    let n = 21;
    let e = engine(
        LayerStack::uniform(n, n, 1, 30.0).unwrap(),
        WindField::constant(0.0, 0.0).unwrap(),
        FireConfig { max_fire_duration: 25, ..Default::default() },
    );
    let mut s = FireState::new(n, n);
    s.ignite((10, 10)).unwrap();
    for _ in 0..80 {
        e.step(&mut s).unwrap();
        let st = s.status();
        for r in 0..n {
            for c in 0..n {
                let v = st[(r, c)];
                assert_eq!(v, st[(n - 1 - r, c)]);
                assert_eq!(v, st[(r, n - 1 - c)]);
                assert_eq!(v, st[(c, r)]);
            }
        }
    }
}

#[test]
fn eastward_wind_pushes_fire_east() {
    let n = 64;
    let e = engine(
        LayerStack::uniform(n, n, 1, 30.0).unwrap(),
        WindField::constant(5.0, 90.0).unwrap(),
        FireConfig { max_fire_duration: 12, ..Default::default() },
    );
    let mut s = FireState::new(n, n);
    s.ignite((32, 32)).unwrap();
    burn_to_quiescence(&e, &mut s);
    let (_, _, west, east) = extents(&s, (32, 32));
    assert!(east > west, "east {east} west {west}");
}

#[test]
fn upslope_spread_outruns_downslope() {
    let n = 64;
    let rise = 0.5 * 30.0 * FEET_PER_METER;
    let stack = LayerStack::uniform(n, n, 1, 30.0)
        .unwrap()
        .with_elevation(Grid::from_fn(n, n, |_, c| rise * c as f64))
        .unwrap();
    let e = engine(stack, WindField::constant(0.0, 0.0).unwrap(), FireConfig { max_fire_duration: 12, ..Default::default() });
    let mut s = FireState::new(n, n);
    s.ignite((32, 32)).unwrap();
    burn_to_quiescence(&e, &mut s);
    let (_, _, west, east) = extents(&s, (32, 32));
    assert!(east > west, "east {east} west {west}");
}

#[test]
fn closed_ring_contains_fire() {
    let n = 32;
    let e = engine(
        LayerStack::uniform(n, n, 3, 30.0).unwrap(),
        WindField::constant(15.0, 45.0).unwrap(),
        FireConfig { max_fire_duration: 40, ..Default::default() },
    );
    let mut s = FireState::new(n, n);
    let (lo, hi) = (10, 20);
    for i in lo..=hi {
        for cell in [(lo, i), (hi, i), (i, lo), (i, hi)] {
            s.apply_mitigation(cell, Mitigation::Fireline).unwrap();
        }
    }
    s.ignite((15, 15)).unwrap();
    burn_to_quiescence(&e, &mut s);
    for ((r, c), st) in s.status().indexed_iter() {
        let inside = r > lo && r < hi && c > lo && c < hi;
        if !inside {
            assert!(matches!(st, CellStatus::Unburned | CellStatus::Fireline), "({r}, {c}) is {st:?}");
        }
    }
}

#[test]
fn scratchline_and_wetline_slow_but_do_not_stop() {
    let n = 9;
    let run = |kind: Option<Mitigation>| {
        let e = engine(
            LayerStack::uniform(n, n, 1, 30.0).unwrap(),
            WindField::constant(5.0, 90.0).unwrap(),
            FireConfig { max_fire_duration: 400, ..Default::default() },
        );
        let mut s = FireState::new(n, n);
        if let Some(k) = kind {
            for r in 0..n {
                s.apply_mitigation((r, 4), k).unwrap();
            }
        }
        s.ignite((4, 0)).unwrap();
        let mut steps = 0;
        while s.status_at((4, 8)) == CellStatus::Unburned {
            e.step(&mut s).unwrap();
            steps += 1;
            assert!(steps < 10_000);
        }
        steps
    };
    let open = run(None);
    let scratch = run(Some(Mitigation::Scratchline));
    let wet = run(Some(Mitigation::Wetline));
    assert!(open < scratch && scratch < wet, "{open} {scratch} {wet}");
}

fn arb_scenario() -> impl Strategy<Value = (FireEngine, Cell, Vec<Cell>)> {
    (
        any::<u64>(),
        8usize..20,
        0.0f64..15.0,
        0.0f64..360.0,
        1u32..15,
        proptest::collection::vec((0usize..20, 0usize..20), 0..30),
    )
        .prop_map(|(seed, n, speed, dir, dur, lines)| {
            let params = ProceduralParams {
                fuel_mix: vec![
                    FuelWeight { fuel: 1, weight: 0.5 },
                    FuelWeight { fuel: 8, weight: 0.3 },
                    FuelWeight { fuel: 0, weight: 0.2 },
                ],
                ..Default::default()
            };
            let stack = generate_procedural(seed, n, n, 30.0, None, &params, Arc::new(FuelCatalog::standard())).unwrap();
            let fire = FireConfig {
                max_fire_duration: dur,
                ignition: Ignition::RANDOM,
                ..Default::default()
            };
            let e = engine(stack, WindField::constant(speed, dir).unwrap(), fire);
            let lines = lines.into_iter().map(|(r, c)| (r % n, c % n)).collect();
            (e, ((seed as usize) % n, (seed as usize / 7) % n), lines)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spread_invariants((e, ignition, lines) in arb_scenario()) {
        let (rows, cols) = e.stack().dims();
        let mut s = FireState::new(rows, cols);
        for &cell in &lines {
            s.apply_mitigation(cell, Mitigation::Fireline).unwrap();
        }
        s.ignite(ignition).unwrap();
        let mut prev = s.clone();
        let mut steps = 0;
        while s.is_active() {
            e.step(&mut s).unwrap();
            steps += 1;
            prop_assert!(steps <= rows * cols * e.config().max_fire_duration as usize + 1);
            let d = s.damage_counts();
            prop_assert_eq!(d.burned + d.burning + d.mitigated + d.unburned, rows * cols);
            for ((cell, &before), &after) in prev.status().indexed_iter().zip(s.status().iter()) {
                // statuses only move forward; firelines and non-burnable cells never change
                match before {
                    CellStatus::Fireline => prop_assert_eq!(after, CellStatus::Fireline),
                    CellStatus::Burned => prop_assert_eq!(after, CellStatus::Burned),
                    CellStatus::Burning => prop_assert!(matches!(after, CellStatus::Burning | CellStatus::Burned)),
                    _ => {}
                }
                if !e.stack().is_burnable(cell) && cell != ignition {
                    prop_assert!(!matches!(after, CellStatus::Burning | CellStatus::Burned));
                }
            }
            prop_assert!(d.burned >= prev.damage_counts().burned);
            prev = s.clone();
        }
    }

    #[test]
    fn stepping_is_deterministic((e, ignition, lines) in arb_scenario()) {
        let (rows, cols) = e.stack().dims();
        let mut a = FireState::new(rows, cols);
        for &cell in &lines {
            a.apply_mitigation(cell, Mitigation::Fireline).unwrap();
        }
        a.ignite(ignition).unwrap();
        let mut b = a.clone();
        for _ in 0..30 {
            e.step(&mut a).unwrap();
            e.step(&mut b).unwrap();
        }
        prop_assert_eq!(a, b);
    }
}
