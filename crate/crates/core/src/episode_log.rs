//! JSON-lines episode log: a header with the resolved config, one record per
//! agent action, and a final record with the episode metrics.

use std::io::{self, Write};

use serde::Serialize;

use crate::env::{Action, EpisodeConfig, FireEnv, Transition};
use crate::grid::Cell;
use crate::reward::{DamageSnapshot, MetricSummary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionNames {
    pub movement: &'static str,
    pub interaction: &'static str,
}

impl ActionNames {
    pub fn of(config: &EpisodeConfig, action: Action) -> Self {
        Self {
            movement: config.movements[action.movement].name(),
            interaction: config.interactions[action.interaction].name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record<C: Serialize> {
    Header {
        command: String,
        policy: String,
        episode_seed: u64,
        ignition: Option<Cell>,
        config: C,
    },
    Step {
        /// Actions taken, including this one.
        n: usize,
        /// Fire steps taken.
        t: usize,
        agent: Cell,
        action: ActionNames,
        reward: f64,
        fire_advanced: bool,
        damage: DamageSnapshot,
    },
    Final {
        actions: usize,
        terminated: bool,
        truncated: bool,
        degenerate: bool,
        metrics: MetricSummary,
    },
}

impl<C: Serialize> Record<C> {
    pub fn step(env: &FireEnv, action: Action, tr: &Transition) -> Self {
        Record::Step {
            n: env.n_actions(),
            t: tr.info.t,
            agent: tr.info.agent,
            action: ActionNames::of(env.config(), action),
            reward: tr.reward,
            fire_advanced: tr.info.fire_advanced,
            damage: tr.info.damage,
        }
    }

    pub fn finish(env: &FireEnv, metrics: MetricSummary) -> Self {
        Record::Final {
            actions: env.n_actions(),
            terminated: env.terminated(),
            truncated: env.truncated(),
            degenerate: env.is_degenerate(),
            metrics,
        }
    }
}

/// Writes one record as a single JSON line.
pub fn write_record<C: Serialize>(out: &mut impl Write, record: &Record<C>) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}
