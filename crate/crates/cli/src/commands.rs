//! The batch subcommands. Each writes `<out>/<command>.jsonl`, whose first
//! line carries the fully resolved config, next to its other artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emberline_core::env::{run_benchmark, FireEnv, Movement};
use emberline_core::episode_log::{write_record, Record};
use emberline_core::grid::Grid;
use emberline_core::gridfile;
use emberline_core::service::{Command as SessionCommand, Session};
use emberline_core::strategy::{evaluate_policy, optimize_fireline, run_episode, FirelinePlan, PolicySpec};
use emberline_core::RunConfig;
use serde::Serialize;
use serde_json::json;

use crate::args::{CommonArgs, RunArgs};

/// Merges the config files and applies flag overrides.
pub fn resolve_config(common: &CommonArgs, run: Option<&RunArgs>) -> Result<RunConfig> {
    if common.configs.is_empty() {
        bail!("at least one --config file is required");
    }
    let mut config = emberline_core::load_config(&common.configs)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(run) = run {
        if let Some(k) = run.frames_every {
            config.output.frames_every = k;
        }
        if let Some(p) = &run.policy {
            config.strategy.policy = parse_policy(p)?;
        }
        if let Some(n) = run.episodes {
            config.strategy.episodes = n;
        }
    }
    config.validate()?;
    Ok(config)
}

/// `noop`, `random`, `line`, `line:DIR`, `line:DIR:ROW_OR_COL` or `plan:FILE`.
pub fn parse_policy(text: &str) -> Result<PolicySpec> {
    let mut parts = text.splitn(3, ':');
    let kind = parts.next().unwrap_or_default();
    let spec = match kind {
        "noop" => PolicySpec::Noop,
        "random" => PolicySpec::Random,
        "line" => {
            let direction = match parts.next() {
                None => Movement::Right,
                Some(d) => serde_json::from_value(json!(d)).with_context(|| format!("unknown line direction '{d}'"))?,
            };
            let target = parts
                .next()
                .map(|t| t.parse::<usize>().with_context(|| format!("bad line target '{t}'")))
                .transpose()?;
            PolicySpec::Line { direction, target }
        }
        "plan" => {
            let path = text.strip_prefix("plan:").filter(|p| !p.is_empty()).context("plan policy needs a file: plan:FILE")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading plan {path}"))?;
            let plan: FirelinePlan = serde_json::from_str(&text).with_context(|| format!("parsing plan {path}"))?;
            PolicySpec::Plan { plan }
        }
        other => bail!("unknown policy '{other}'; expected noop, random, line[:DIR[:N]] or plan:FILE"),
    };
    Ok(spec)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_line(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn header(command: &str, config: &RunConfig) -> serde_json::Value {
    json!({ "type": "header", "command": command, "config": config })
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("t{t:06}.grid"))
}

fn write_frame(dir: &Path, t: usize, codes: &Grid<i32>) -> Result<()> {
    let path = frame_path(dir, t);
    gridfile::write_i32(&path, codes).with_context(|| format!("writing {}", path.display()))
}

fn frames_dir(out: &Path, name: &str) -> Result<PathBuf> {
    let dir = out.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn simulate(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let scenario = config.build_scenario()?;
    let ep = config.episode_config();
    let (mut env, _) = FireEnv::reset(&scenario, &ep)?;
    let spec = &config.strategy.policy;
    let mut policy = spec.build(&ep, scenario.dims())?;

    let mut log = create(&out.join("simulate.jsonl"))?;
    write_record(
        &mut log,
        &Record::Header {
            command: "simulate".into(),
            policy: spec.name().into(),
            episode_seed: ep.seed,
            ignition: env.trace().ignition,
            config,
        },
    )?;

    let every = config.output.frames_every;
    let frames = if every > 0 { Some(frames_dir(&out, "frames")?) } else { None };
    if let Some(dir) = &frames {
        write_frame(dir, 0, &env.state().status_codes())?;
    }
    let mut io_result = Ok(());
    let metrics = run_episode(&mut env, policy.as_mut(), |env, action, tr| {
        if io_result.is_err() {
            return;
        }
        io_result = write_record(&mut log, &Record::<&RunConfig>::step(env, action, tr)).map_err(anyhow::Error::from);
        if let (Some(dir), true) = (&frames, tr.info.fire_advanced) {
            if tr.info.t % every == 0 && io_result.is_ok() {
                io_result = write_frame(dir, tr.info.t, &env.state().status_codes());
            }
        }
    })?;
    io_result?;
    write_record(&mut log, &Record::<&RunConfig>::finish(&env, metrics))?;
    log.flush()?;
    gridfile::write_i32(&out.join("final.grid"), &env.state().status_codes())?;
    println!(
        "simulate: policy {} area_saved {} timesteps_saved {} reward_sum {:.6} ({} actions)",
        spec.name(),
        metrics.area_saved,
        metrics.timesteps_saved,
        metrics.episode_reward_sum,
        env.n_actions()
    );
    Ok(())
}

pub fn benchmark(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let scenario = config.build_scenario()?;
    let ignition = scenario.ignition_cell(config.seed)?;
    let trace = run_benchmark(&scenario, ignition)?;

    let mut log = create(&out.join("benchmark.jsonl"))?;
    write_line(&mut log, &header("benchmark", config))?;
    write_line(
        &mut log,
        &json!({
            "type": "summary",
            "ignition": trace.ignition,
            "total_timesteps": trace.total_timesteps,
            "total_burned": trace.total_burned,
        }),
    )?;
    log.flush()?;
    write_json(&out.join("trace.json"), &trace)?;

    let codes = |t: usize| trace.map_at(t).map(|s| i32::from(s.code()));
    let every = config.output.frames_every;
    if every > 0 {
        let dir = frames_dir(&out, "benchmark_frames")?;
        for t in (0..=trace.total_timesteps).step_by(every) {
            write_frame(&dir, t, &codes(t))?;
        }
    }
    gridfile::write_i32(&out.join("benchmark_final.grid"), &trace.final_map.map(|s| i32::from(s.code())))?;
    println!(
        "benchmark: ignition {:?} burned {} cells over {} steps",
        trace.ignition, trace.total_burned, trace.total_timesteps
    );
    Ok(())
}

pub fn evaluate(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let scenario = config.build_scenario()?;
    let ep = config.episode_config();
    let spec = &config.strategy.policy;
    let report = evaluate_policy(spec, &scenario, &ep, config.strategy.episodes)?;
    let mut log = create(&out.join("evaluate.jsonl"))?;
    write_line(&mut log, &header("evaluate", config))?;
    for (seed, m) in report.seeds.iter().zip(&report.episodes) {
        write_line(&mut log, &json!({ "type": "episode", "episode_seed": seed, "metrics": m }))?;
    }
    log.flush()?;
    write_json(&out.join("report.json"), &report)?;
    println!(
        "evaluate: policy {} over {} episodes: area_saved {:.3} ± {:.3}, reward_sum {:.6}",
        report.policy,
        report.episodes.len(),
        report.mean.area_saved,
        report.std.area_saved,
        report.mean.episode_reward_sum
    );
    Ok(())
}

pub fn optimize(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let scenario = config.build_scenario()?;
    let ep = config.episode_config();
    let result = optimize_fireline(&scenario, &ep, config.strategy.budget, &config.strategy.cem)?;
    let mut log = create(&out.join("optimize.jsonl"))?;
    write_line(&mut log, &header("optimize", config))?;
    for it in &result.history {
        log::info!("iteration {}: elite mean {:.3}, best {:.3}", it.iteration, it.elite_mean, it.best);
        write_line(&mut log, &json!({ "type": "iteration", "stats": it }))?;
    }
    log.flush()?;
    write_json(&out.join("plan.json"), &result.plan)?;
    write_json(&out.join("report.json"), &result.report)?;
    println!(
        "optimize: {} cells, mean area_saved {:.3} over {} panel episodes",
        result.plan.len(),
        result.report.mean.area_saved,
        result.report.episodes.len()
    );
    Ok(())
}

/// Rebuilds a session from a command log written by the server and returns
/// its final full state.
pub fn replay_log(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: serde_json::Value = serde_json::from_str(lines.next().context("empty session log")?)?;
    let config = RunConfig::from_json_str(&head["config"].to_string())?;
    let commands = lines
        .map(|l| serde_json::from_str::<SessionCommand>(l).with_context(|| format!("bad log line: {l}")))
        .collect::<Result<Vec<_>>>()?;
    let session = Session::replay(config, &commands)?;
    Ok(serde_json::to_value(session.full_state())?)
}
