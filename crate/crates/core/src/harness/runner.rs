//! The interaction loop: observe, act, perform, reward, remember, and
//! periodically evaluate greedily on an independent stream.

use std::time::{Duration, Instant};

use super::metrics::{Confusion, Metrics, MetricsRow};
use super::HarnessError;
use crate::agent::{epsilon, transition, DqnAgent, Mode};
use crate::world::{reward, Environment, RewardConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub episodes: u64,
    pub avg_reward: f64,
}

/// Runs `steps` greedy decisions without learning. An episode is one sample
/// served until advancement; a trailing unfinished episode is discarded
/// unless no episode finished at all.
pub fn evaluate(
    agent: &DqnAgent,
    env: &mut Environment,
    steps: u64,
    rewards: &RewardConfig,
) -> Result<EvalReport, HarnessError> {
    let mut confusion = Confusion::default();
    let (mut episodes, mut total, mut running) = (0u64, 0i64, 0i64);
    for _ in 0..steps {
        let action = agent.greedy(env.observe())?;
        let expected = env.expected();
        confusion.record(expected, action);
        running += reward(expected, action, rewards) as i64;
        if env.step(action)? {
            episodes += 1;
            total += running;
            running = 0;
        }
    }
    let avg_reward = if episodes > 0 { total as f64 / episodes as f64 } else { running as f64 };
    Ok(EvalReport { metrics: confusion.metrics(), confusion, episodes, avg_reward })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopPlan {
    pub label: String,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_steps: u64,
    pub rewards: RewardConfig,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub rows: Vec<MetricsRow>,
    pub last_eval: Option<EvalReport>,
    pub wall: Duration,
    pub learn_calls: u64,
    pub learn_time: Duration,
}

pub fn row_from(label: &str, step: u64, report: &EvalReport, eps: f64, wall_ms: u64) -> MetricsRow {
    MetricsRow {
        phase: label.to_string(),
        step,
        episodes: report.episodes,
        avg_reward_per_episode: report.avg_reward,
        precision: report.metrics.macro_precision,
        recall: report.metrics.macro_recall,
        f1_micro: report.metrics.f1_micro,
        f1_macro: report.metrics.f1_macro,
        epsilon: eps,
        wall_ms,
    }
}

/// Trains for `plan.total_steps` interactions. Exploration follows the
/// agent's schedule indexed by the phase-local step. Every `eval_every`
/// steps, `make_eval(k)` builds the k-th evaluation environment.
pub fn run_loop(
    agent: &mut DqnAgent,
    train: &mut Environment,
    make_eval: &mut dyn FnMut(u64) -> Result<Environment, HarnessError>,
    plan: &LoopPlan,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<LoopOutcome, HarnessError> {
    let started = Instant::now();
    let calls_before = agent.counters().learn_calls;
    let time_before = agent.learn_time();
    let cfg = *agent.config();
    let mut rows = Vec::new();
    let mut last_eval = None;
    for step in 1..=plan.total_steps {
        let eps = epsilon(&cfg, step - 1, Mode::Train);
        let s = train.observe().clone();
        let action = agent.get_action(&s, eps)?;
        let expected = train.expected();
        train.step(action)?;
        let r = reward(expected, action, &plan.rewards);
        agent.observe(transition(&s, action, r, train.observe()))?;
        if step % plan.eval_every == 0 {
            let mut env = make_eval(step / plan.eval_every)?;
            let report = evaluate(agent, &mut env, plan.eval_steps, &plan.rewards)?;
            let wall_ms = if plan.deterministic { 0 } else { started.elapsed().as_millis() as u64 };
            let row = row_from(&plan.label, step, &report, epsilon(&cfg, step, Mode::Train), wall_ms);
            on_row(&row);
            rows.push(row);
            last_eval = Some(report);
        }
    }
    Ok(LoopOutcome {
        rows,
        last_eval,
        wall: started.elapsed(),
        learn_calls: agent.counters().learn_calls - calls_before,
        learn_time: agent.learn_time() - time_before,
    })
}
