//! Benchmark-relative step reward and episode severity metrics.
//!
//! Damage in the live run counts burned, burning and mitigated cells;
//! benchmark damage counts burned and burning. A step's reward is the new
//! benchmark damage minus the new live damage, over the benchmark's final
//! burned area. Metrics are signed so that positive means the mitigated run
//! did better.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::BenchmarkTrace;
use crate::firespread::DamageCounts;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("burn rate needs at least one timestep")]
    ZeroTimesteps,
}

/// Live and benchmark damage at one fire step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DamageSnapshot {
    pub burned: usize,
    pub burning: usize,
    pub mitigated: usize,
    pub bench_burned: usize,
    pub bench_burning: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Cells.
    pub area_saved: i64,
    /// Fire steps.
    pub timesteps_saved: i64,
    /// Percent of the grid's cells per fire step.
    pub burn_rate_sim: f64,
    pub burn_rate_bench: f64,
    pub burn_rate_reduction: f64,
    pub episode_reward_sum: f64,
}

pub fn damaged_sim(s: &DamageSnapshot) -> usize {
    s.burned + s.burning + s.mitigated
}

pub fn damaged_bench_snapshot(s: &DamageSnapshot) -> usize {
    s.bench_burned + s.bench_burning
}

/// Benchmark damage at fire step `t`, held at its final value past the end.
pub fn damaged_bench(trace: &BenchmarkTrace, t: usize) -> usize {
    trace.damaged_at(t)
}

/// Reward between two snapshots. A zero `total_endangered` (the benchmark
/// burned nothing) yields 0.
pub fn step_reward(prev: &DamageSnapshot, now: &DamageSnapshot, total_endangered: usize) -> f64 {
    if total_endangered == 0 {
        return 0.0;
    }
    let new_bench = damaged_bench_snapshot(now) as f64 - damaged_bench_snapshot(prev) as f64;
    let new_sim = damaged_sim(now) as f64 - damaged_sim(prev) as f64;
    (new_bench - new_sim) / total_endangered as f64
}

/// Bonus for mitigating an unburned, unmitigated cell.
pub fn mitigation_bonus(area: usize) -> f64 {
    0.25 / area as f64
}

/// Benchmark burned minus live burned-or-mitigated.
pub fn area_saved(sim_final: &DamageCounts, bench_burned: usize) -> i64 {
    bench_burned as i64 - (sim_final.burned + sim_final.mitigated) as i64
}

pub fn timesteps_saved(sim_t: usize, bench_t: usize) -> i64 {
    bench_t as i64 - sim_t as i64
}

pub fn burn_rate(burned: usize, mitigated: usize, timesteps: usize) -> Result<f64, RewardError> {
    if timesteps == 0 {
        return Err(RewardError::ZeroTimesteps);
    }
    Ok((burned + mitigated) as f64 / timesteps as f64 * 100.0)
}

pub fn burn_rate_reduction(sim_rate: f64, bench_rate: f64) -> f64 {
    bench_rate - sim_rate
}

/// Metrics for a live run that has reached `sim_t` fire steps. A run cut off
/// before its first fire step is rated over one step.
pub fn summarize(sim: DamageCounts, sim_t: usize, trace: &BenchmarkTrace, reward_sum: f64) -> MetricSummary {
    let sim_rate = burn_rate(sim.burned, sim.mitigated, sim_t.max(1)).expect("nonzero");
    let bench_rate = burn_rate(trace.total_burned, 0, trace.total_timesteps.max(1)).expect("nonzero");
    MetricSummary {
        area_saved: area_saved(&sim, trace.total_burned),
        timesteps_saved: timesteps_saved(sim_t, trace.total_timesteps),
        burn_rate_sim: sim_rate,
        burn_rate_bench: bench_rate,
        burn_rate_reduction: burn_rate_reduction(sim_rate, bench_rate),
        episode_reward_sum: reward_sum,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(burned: usize, burning: usize, mitigated: usize, bb: usize, bn: usize) -> DamageSnapshot {
        DamageSnapshot {
            burned,
            burning,
            mitigated,
            bench_burned: bb,
            bench_burning: bn,
        }
    }

    #[test]
    fn damage_sums() {
        assert_eq!(damaged_sim(&snap(0, 1, 0, 0, 0)), 1);
        assert_eq!(damaged_sim(&snap(5, 2, 3, 0, 0)), 10);
        assert_eq!(damaged_sim(&DamageSnapshot::default()), 0);
    }

    #[test]
    fn step_reward_arithmetic() {
        let zero = DamageSnapshot::default();
        assert_eq!(step_reward(&zero, &snap(3, 0, 0, 3, 0), 50), 0.0);
        assert!((step_reward(&zero, &snap(10, 2, 0, 25, 5), 900) - 0.02).abs() < 1e-15);
        assert!((step_reward(&zero, &snap(9, 0, 0, 5, 0), 100) + 0.04).abs() < 1e-15);
        assert_eq!(step_reward(&zero, &snap(9, 0, 0, 5, 0), 0), 0.0);
    }

    #[test]
    fn bonus_values() {
        assert_eq!(mitigation_bonus(16384), 1.52587890625e-5);
        assert_eq!(mitigation_bonus(1), 0.25);
    }

    #[test]
    fn operational_metrics() {
        let sim = DamageCounts { burned: 250, burning: 0, mitigated: 30, unburned: 0 };
        assert_eq!(area_saved(&sim, 400), 120);
        assert_eq!(timesteps_saved(80, 100), 20);
        assert_eq!(timesteps_saved(120, 100), -20);
        assert_eq!(burn_rate(40, 10, 25).unwrap(), 200.0);
        assert_eq!(burn_rate(0, 0, 10).unwrap(), 0.0);
        assert_eq!(burn_rate(1, 0, 0), Err(RewardError::ZeroTimesteps));
        assert_eq!(burn_rate_reduction(150.0, 200.0), 50.0);
        assert_eq!(burn_rate_reduction(250.0, 200.0), -50.0);
    }
}
