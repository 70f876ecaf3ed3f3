//! Cross-entropy search over fireline polylines.
//!
//! A candidate is a list of vertices in continuous grid coordinates. It is
//! rounded, clamped to the grid and joined into a (by default closed)
//! polyline plan. The objective is the plan-following policy's mean
//! area_saved over a fixed panel of episode seeds.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_with_traces, EvalReport, FirelinePlan, PolicySpec, StrategyError};
use crate::env::{run_benchmark, BenchmarkTrace, EpisodeConfig, Scenario};
use crate::grid::Cell;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemParams {
    pub population: usize,
    pub iterations: usize,
    /// Fraction of the pool kept as elites (at least one).
    pub elite_fraction: f64,
    pub vertices: usize,
    pub closed: bool,
    /// Episode seeds every candidate is scored on.
    pub panel: usize,
    /// Initial per-coordinate standard deviation, cells.
    pub init_std: f64,
    pub min_std: f64,
    /// Weight of the new elite statistics in the update.
    pub smoothing: f64,
    /// Resamples of an over-budget candidate before shrinking it.
    pub max_resamples: usize,
}

impl Default for CemParams {
    fn default() -> Self {
        Self {
            population: 64,
            iterations: 20,
            elite_fraction: 0.125,
            vertices: 4,
            closed: true,
            panel: 8,
            init_std: 4.0,
            min_std: 0.5,
            smoothing: 0.7,
            max_resamples: 20,
        }
    }
}

impl CemParams {
    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |m: &str| Err(StrategyError::InvalidParams(m.to_string()));
        if self.population < 1 || self.iterations < 1 || self.panel < 1 || self.vertices < 1 {
            return bad("population, iterations, panel and vertices must be >= 1");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite_fraction must lie in (0, 1]");
        }
        if !(self.init_std >= 0.0 && self.min_std >= 0.0 && self.init_std.is_finite()) {
            return bad("standard deviations must be finite and >= 0");
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return bad("smoothing must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn n_elite(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub elite_mean: f64,
    pub best: f64,
    pub feasible_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub plan: FirelinePlan,
    pub report: EvalReport,
    pub history: Vec<IterationStats>,
}

#[derive(Debug, Clone)]
struct Candidate {
    params: Vec<f64>,
    plan: FirelinePlan,
    score: f64,
}

fn to_plan(params: &[f64], dims: (usize, usize), closed: bool) -> FirelinePlan {
    let clamp = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
    let vertices: Vec<Cell> = params
        .chunks_exact(2)
        .map(|p| (clamp(p[0], dims.0), clamp(p[1], dims.1)))
        .collect();
    if closed {
        FirelinePlan::closed(&vertices)
    } else {
        FirelinePlan::open(&vertices)
    }
}

/// Pulls vertices toward their centroid until the plan fits the budget.
fn shrink_to_budget(params: &[f64], dims: (usize, usize), closed: bool, budget: usize) -> Vec<f64> {
    let k = params.len() / 2;
    let cr = params.iter().step_by(2).sum::<f64>() / k as f64;
    let cc = params.iter().skip(1).step_by(2).sum::<f64>() / k as f64;
    let mut scale = 1.0;
    loop {
        let p: Vec<f64> = params
            .chunks_exact(2)
            .flat_map(|v| [cr + (v[0] - cr) * scale, cc + (v[1] - cc) * scale])
            .collect();
        if scale == 0.0 || to_plan(&p, dims, closed).len() <= budget {
            return p;
        }
        scale = if scale < 1e-3 { 0.0 } else { scale * 0.8 };
    }
}

/// Centroid of every cell the panel's benchmarks burned; grid center if none.
fn burned_centroid(traces: &[Arc<BenchmarkTrace>], dims: (usize, usize)) -> (f64, f64) {
    let (mut n, mut sr, mut sc) = (0usize, 0.0, 0.0);
    for t in traces {
        for ((r, c), s) in t.final_map.indexed_iter() {
            if *s == crate::firespread::CellStatus::Burned {
                n += 1;
                sr += r as f64;
                sc += c as f64;
            }
        }
    }
    if n == 0 {
        ((dims.0 as f64 - 1.0) / 2.0, (dims.1 as f64 - 1.0) / 2.0)
    } else {
        (sr / n as f64, sc / n as f64)
    }
}

/// Searches for the fireline plan with the best mean area_saved.
pub fn optimize_fireline(
    scenario: &Scenario,
    config: &EpisodeConfig,
    budget: usize,
    params: &CemParams,
) -> Result<OptimizeResult, StrategyError> {
    params.validate()?;
    if budget < 1 {
        return Err(StrategyError::InvalidParams("budget must be >= 1 cell".into()));
    }
    let dims = scenario.dims();
    let seeds = super::episode_seeds(seed::derive(config.seed, "panel"), params.panel);
    let traces = seeds
        .par_iter()
        .map(|&s| Ok(Arc::new(run_benchmark(scenario, scenario.ignition_cell(s)?)?)))
        .collect::<Result<Vec<_>, crate::env::EnvError>>()?;

    let score = |plan: &FirelinePlan| -> Result<f64, StrategyError> {
        let spec = PolicySpec::Plan { plan: plan.clone() };
        Ok(evaluate_with_traces(&spec, scenario, config, &seeds, &traces)?.mean.area_saved)
    };

    // start from a ring around where the benchmark fire burns
    let k = params.vertices;
    let (cr, cc) = burned_centroid(&traces, dims);
    let radius = (budget as f64 / 8.0).min(dims.0.min(dims.1) as f64 / 2.0).max(0.0);
    let mut mean: Vec<f64> = (0..k)
        .flat_map(|i| {
            let a = std::f64::consts::TAU * (i as f64 + 0.5) / k as f64;
            [cr - radius * a.cos(), cc + radius * a.sin()]
        })
        .collect();
    let mut std = vec![params.init_std; 2 * k];
    let mut rng = seed::rng(seed::derive(config.seed, seed::OPTIMIZER));
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let n_elite = params.n_elite();

    let mut elites: Vec<Candidate> = Vec::new();
    let mut history = Vec::with_capacity(params.iterations);

    for iteration in 0..params.iterations {
        let mut feasible = 0;
        let samples: Vec<(Vec<f64>, FirelinePlan)> = (0..params.population)
            .map(|_| {
                for _ in 0..=params.max_resamples {
                    let x: Vec<f64> = mean
                        .iter()
                        .zip(&std)
                        .map(|(m, s)| m + s * unit.sample(&mut rng))
                        .collect();
                    let plan = to_plan(&x, dims, params.closed);
                    if plan.len() <= budget {
                        feasible += 1;
                        return (x, plan);
                    }
                }
                // keep the draw sequence fixed regardless of the fallback
                let _: u64 = rng.random();
                let x = shrink_to_budget(&mean, dims, params.closed, budget);
                let plan = to_plan(&x, dims, params.closed);
                (x, plan)
            })
            .collect();

        let scores = samples
            .par_iter()
            .map(|(_, plan)| score(plan))
            .collect::<Result<Vec<_>, _>>()?;

        // previous elites come first so ties keep the incumbent
        let mut pool = std::mem::take(&mut elites);
        pool.extend(
            samples
                .into_iter()
                .zip(scores)
                .map(|((params, plan), score)| Candidate { params, plan, score }),
        );
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| pool[b].score.total_cmp(&pool[a].score).then(a.cmp(&b)));
        elites = order.iter().take(n_elite).map(|&i| pool[i].clone()).collect();

        let m = elites.len() as f64;
        for d in 0..2 * k {
            let mu = elites.iter().map(|e| e.params[d]).sum::<f64>() / m;
            let var = elites.iter().map(|e| (e.params[d] - mu).powi(2)).sum::<f64>() / m;
            mean[d] = params.smoothing * mu + (1.0 - params.smoothing) * mean[d];
            std[d] = (params.smoothing * var.sqrt() + (1.0 - params.smoothing) * std[d]).max(params.min_std);
        }
        history.push(IterationStats {
            iteration,
            elite_mean: elites.iter().map(|e| e.score).sum::<f64>() / m,
            best: elites[0].score,
            feasible_samples: feasible,
        });
    }

    let best = elites.into_iter().next().expect("at least one elite");
    let report = evaluate_with_traces(&PolicySpec::Plan { plan: best.plan.clone() }, scenario, config, &seeds, &traces)?;
    Ok(OptimizeResult {
        plan: best.plan,
        report,
        history,
    })
}
