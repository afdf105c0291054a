//! Phases and experiments built on the interaction loop: a single phase,
//! leave-one-participant-out adaptation, sensor masking, hyperparameter
//! sweeps and feature export.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use homedqn_nn::FeatureTap;

use super::metrics::MetricsRow;
use super::runner::{evaluate, row_from, run_loop, EvalReport, LoopOutcome, LoopPlan};
use super::{DataSource, HarnessError, Phase, PhaseConfig};
use crate::agent::{network_spec, AgentConfig, DqnAgent};
use crate::corpus::{align_corpus, load_corpus, losocv_folds};
use crate::render::{Renderer, SensorMask};
use crate::world::{
    CyclicSource, Environment, RewardMode, Sample, SampleSource, SyntheticSource, SyntheticWorld, WINDOW_LEN,
};

/// Stream id of the training stream; evaluation `k` uses `EVAL_STREAM + k`.
const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 1 << 32;

/// Independent seed for stream `stream` of a run seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(base ^ mix(stream))
}

fn plan(cfg: &PhaseConfig, label: &str) -> LoopPlan {
    LoopPlan {
        label: label.to_string(),
        total_steps: cfg.total_steps,
        eval_every: cfg.eval_every,
        eval_steps: cfg.eval_steps,
        rewards: cfg.reward,
        deterministic: cfg.deterministic,
    }
}

fn windowed(cfg: &PhaseConfig) -> bool {
    cfg.reward.mode == RewardMode::Windowed
}

/// Data and rendering shared by the environments of one run.
struct Streams {
    cfg: PhaseConfig,
    renderer: Arc<Renderer>,
    mask: SensorMask,
    world: Arc<SyntheticWorld>,
    /// Aligned corpus samples when the phase reads a corpus.
    corpus: Option<Arc<Vec<Sample>>>,
}

impl Streams {
    fn new(cfg: &PhaseConfig) -> Result<Self, HarnessError> {
        let renderer = Renderer::reference(cfg.render);
        let mask = SensorMask::from_tokens(&cfg.mask, renderer.manifest());
        let world = Arc::new(SyntheticWorld::reference(cfg.generator)?);
        let corpus = match cfg.data {
            DataSource::Synthetic => None,
            DataSource::Corpus => {
                let dir = cfg.corpus.as_ref().ok_or_else(|| HarnessError::Config("no corpus directory".into()))?;
                let corpus = load_corpus(dir, renderer.manifest())?;
                let samples = align_corpus(&corpus, renderer.manifest());
                if samples.is_empty() {
                    return Err(HarnessError::Config(format!("{}: no aligned samples", dir.display())));
                }
                Some(Arc::new(samples))
            }
        };
        Ok(Streams { cfg: cfg.clone(), renderer, mask, world, corpus })
    }

    fn env(&self, source: Box<dyn SampleSource>, mask: &SensorMask) -> Result<Environment, HarnessError> {
        Ok(Environment::new(source, self.cfg.tries_threshold, self.renderer.clone(), mask.clone())?)
    }

    fn train_env(&self, mask: &SensorMask) -> Result<Environment, HarnessError> {
        let seed = derive_seed(self.cfg.seed, TRAIN_STREAM);
        match &self.corpus {
            Some(s) => self.env(Box::new(CyclicSource::new(s.clone(), WINDOW_LEN, Some(seed))), mask),
            None => self.env(Box::new(SyntheticSource::new(self.world.clone(), seed, windowed(&self.cfg))), mask),
        }
    }

    /// Evaluation stream `k`. Synthetic streams use fresh seeds; a corpus is
    /// replayed in recorded order.
    fn eval_env(&self, k: u64, mask: &SensorMask) -> Result<Environment, HarnessError> {
        match &self.corpus {
            Some(s) => self.env(Box::new(CyclicSource::new(s.clone(), WINDOW_LEN, None)), mask),
            None => {
                let seed = derive_seed(self.cfg.seed, EVAL_STREAM + k);
                self.env(Box::new(SyntheticSource::new(self.world.clone(), seed, windowed(&self.cfg))), mask)
            }
        }
    }
}

pub struct PhaseOutcome {
    pub agent: DqnAgent,
    pub outcome: LoopOutcome,
}

/// The starting agent of a phase. Pretraining may start fresh; adaptation
/// continues from `start` with the phase's agent settings.
pub fn starting_agent(cfg: &PhaseConfig, start: Option<DqnAgent>) -> Result<DqnAgent, HarnessError> {
    match (cfg.phase, start) {
        (Phase::Pretrain, None) => Ok(DqnAgent::new(cfg.agent, network_spec(cfg.render), cfg.seed)?),
        (Phase::Adapt, None) => Err(HarnessError::Config("the adapt phase needs a starting checkpoint".into())),
        (_, Some(agent)) => {
            if agent.profile() != Some(cfg.render) {
                return Err(HarnessError::Config(format!(
                    "starting network does not match the {} render profile",
                    cfg.render
                )));
            }
            if cfg.phase == Phase::Adapt {
                Ok(agent.fork(cfg.agent, cfg.seed)?)
            } else {
                Ok(agent)
            }
        }
    }
}

pub fn run_phase(
    cfg: &PhaseConfig,
    start: Option<DqnAgent>,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<PhaseOutcome, HarnessError> {
    cfg.validate()?;
    let streams = Streams::new(cfg)?;
    let mut agent = starting_agent(cfg, start)?;
    let mut train = streams.train_env(&streams.mask)?;
    let mut make_eval = |k: u64| streams.eval_env(k, &streams.mask);
    let outcome = run_loop(&mut agent, &mut train, &mut make_eval, &plan(cfg, cfg.phase.token()), on_row)?;
    Ok(PhaseOutcome { agent, outcome })
}

/// Greedy evaluation of `agent` on evaluation stream `k` of `cfg`.
pub fn evaluate_config(agent: &DqnAgent, cfg: &PhaseConfig, k: u64) -> Result<EvalReport, HarnessError> {
    let streams = Streams::new(cfg)?;
    let mut env = streams.eval_env(k, &streams.mask)?;
    evaluate(agent, &mut env, cfg.eval_steps, &cfg.reward)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub held_out: String,
    pub rows: Vec<MetricsRow>,
    pub final_eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosocvReport {
    pub folds: Vec<FoldReport>,
    /// Mean of the per-fold final micro F1.
    pub aggregate_f1: f64,
}

/// Adapts a copy of `base` on all participants but one and evaluates on the
/// held-out participant, for every participant. Rows are labelled
/// `fold:<participant>`.
pub fn run_losocv(
    base: &DqnAgent,
    samples: &[Sample],
    cfg: &PhaseConfig,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<LosocvReport, HarnessError> {
    cfg.validate()?;
    let renderer = Renderer::reference(cfg.render);
    let mask = SensorMask::from_tokens(&cfg.mask, renderer.manifest());
    let env = |samples: Arc<Vec<Sample>>, shuffle: Option<u64>| {
        Environment::new(
            Box::new(CyclicSource::new(samples, WINDOW_LEN, shuffle)),
            cfg.tries_threshold,
            renderer.clone(),
            mask.clone(),
        )
    };
    let mut folds = Vec::new();
    for (i, fold) in losocv_folds(samples)?.into_iter().enumerate() {
        let fold_cfg = PhaseConfig { seed: derive_seed(cfg.seed, i as u64), ..cfg.clone() };
        if base.profile() != Some(cfg.render) {
            return Err(HarnessError::Config(format!("base network does not match the {} render profile", cfg.render)));
        }
        let mut agent = base.fork(cfg.agent, fold_cfg.seed)?;
        let test = Arc::new(fold.test);
        let mut train = env(Arc::new(fold.adaptation), Some(derive_seed(fold_cfg.seed, TRAIN_STREAM)))?;
        let mut make_eval = |_k: u64| Ok(env(test.clone(), None)?);
        let label = format!("fold:{}", fold.held_out);
        let out = run_loop(&mut agent, &mut train, &mut make_eval, &plan(&fold_cfg, &label), on_row)?;
        let final_eval = out.last_eval.expect("eval_every <= total_steps guarantees an evaluation");
        folds.push(FoldReport { held_out: fold.held_out, rows: out.rows, final_eval });
    }
    let aggregate_f1 = folds.iter().map(|f| f.final_eval.metrics.f1_micro).sum::<f64>() / folds.len() as f64;
    Ok(LosocvReport { folds, aggregate_f1 })
}

/// Loads, aligns and cross-validates a corpus directory.
pub fn run_losocv_dir(
    base: &DqnAgent,
    cfg: &PhaseConfig,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<LosocvReport, HarnessError> {
    let dir = cfg.corpus.as_ref().ok_or_else(|| HarnessError::Config("no corpus directory".into()))?;
    let renderer = Renderer::reference(cfg.render);
    let corpus = load_corpus(dir, renderer.manifest())?;
    run_losocv(base, &align_corpus(&corpus, renderer.manifest()), cfg, on_row)
}

pub struct MaskReport {
    /// Unmasked greedy evaluation before adaptation.
    pub baseline: EvalReport,
    /// Masked greedy evaluation before adaptation.
    pub masked: EvalReport,
    /// Step-0 masked row followed by the adaptation rows.
    pub rows: Vec<MetricsRow>,
    pub agent: DqnAgent,
}

impl MaskReport {
    pub fn drop(&self) -> f64 {
        self.baseline.metrics.f1_micro - self.masked.metrics.f1_micro
    }

    /// First adaptation step at which micro F1 came within `tol` of the
    /// unmasked baseline.
    pub fn recovered_at(&self, tol: f64) -> Option<u64> {
        let target = self.baseline.metrics.f1_micro - tol;
        self.rows.iter().skip(1).find(|r| r.f1_micro >= target).map(|r| r.step)
    }
}

/// Evaluates `base` with and without `cfg.mask`, then adapts it with the
/// mask applied to every rendered state.
pub fn run_mask_experiment(
    base: &DqnAgent,
    cfg: &PhaseConfig,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<MaskReport, HarnessError> {
    let cfg = PhaseConfig { phase: Phase::Adapt, ..cfg.clone() };
    cfg.validate()?;
    let streams = Streams::new(&cfg)?;
    if base.profile() != Some(cfg.render) {
        return Err(HarnessError::Config(format!("base network does not match the {} render profile", cfg.render)));
    }
    let mut agent = base.fork(cfg.agent, cfg.seed)?;
    let baseline = evaluate(&agent, &mut streams.eval_env(0, &SensorMask::none())?, cfg.eval_steps, &cfg.reward)?;
    let masked = evaluate(&agent, &mut streams.eval_env(0, &streams.mask)?, cfg.eval_steps, &cfg.reward)?;
    let label = "mask";
    let first = row_from(label, 0, &masked, cfg.agent.epsilon_start, 0);
    on_row(&first);
    let mut train = streams.train_env(&streams.mask)?;
    let mut make_eval = |k: u64| streams.eval_env(k, &streams.mask);
    let out = run_loop(&mut agent, &mut train, &mut make_eval, &plan(&cfg, label), on_row)?;
    let mut rows = vec![first];
    rows.extend(out.rows);
    Ok(MaskReport { baseline, masked, rows, agent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCell {
    pub target_q: u64,
    pub minibatch_size: usize,
    pub update_freq: u64,
}

impl SweepCell {
    /// Parses `target_q,minibatch_size,update_freq`.
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Config(format!("sweep cell `{s}` is not target_q,minibatch,update_freq"));
        let v: Vec<&str> = s.split(',').map(str::trim).collect();
        if v.len() != 3 {
            return Err(bad());
        }
        Ok(SweepCell {
            target_q: v[0].parse().map_err(|_| bad())?,
            minibatch_size: v[1].parse().map_err(|_| bad())?,
            update_freq: v[2].parse().map_err(|_| bad())?,
        })
    }

    pub fn apply(&self, agent: &AgentConfig) -> AgentConfig {
        AgentConfig {
            target_q: self.target_q,
            minibatch_size: self.minibatch_size,
            update_freq: self.update_freq,
            ..*agent
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub seed: u64,
    pub total_steps: u64,
    pub learn_calls: u64,
    pub mean_learn_ms: f64,
    pub wall_ms: f64,
    pub f1_micro: f64,
    pub avg_reward: f64,
    /// Final micro F1 per millisecond of wall-clock.
    pub score_time_ratio: f64,
}

pub const SWEEP_HEADER: &str =
    "target_q;minibatch_size;update_freq;seed;total_steps;learn_calls;mean_learn_ms;wall_ms;f1_micro;avg_reward;score_time_ratio";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{};{};{};{};{};{};{:.6};{:.3};{:.6};{:.6};{:.9}",
            r.cell.target_q,
            r.cell.minibatch_size,
            r.cell.update_freq,
            r.seed,
            r.total_steps,
            r.learn_calls,
            r.mean_learn_ms,
            r.wall_ms,
            r.f1_micro,
            r.avg_reward,
            r.score_time_ratio
        );
    }
    out
}

/// Runs one pretraining phase per cell and seed. Timings are measured
/// even in deterministic mode.
pub fn run_sweep(
    cells: &[SweepCell],
    seeds: &[u64],
    cfg: &PhaseConfig,
    on_row: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>, HarnessError> {
    let mut rows = Vec::new();
    for cell in cells {
        for &seed in seeds {
            let cell_cfg = PhaseConfig { phase: Phase::Pretrain, seed, agent: cell.apply(&cfg.agent), ..cfg.clone() };
            let out = run_phase(&cell_cfg, None, &mut |_| {})?.outcome;
            let last = out.last_eval.expect("at least one evaluation");
            let wall_ms = out.wall.as_secs_f64() * 1e3;
            let mean = |d: Duration, n: u64| if n == 0 { 0.0 } else { d.as_secs_f64() * 1e3 / n as f64 };
            let row = SweepRow {
                cell: *cell,
                seed,
                total_steps: cell_cfg.total_steps,
                learn_calls: out.learn_calls,
                mean_learn_ms: mean(out.learn_time, out.learn_calls),
                wall_ms,
                f1_micro: last.metrics.f1_micro,
                avg_reward: last.avg_reward,
                score_time_ratio: if wall_ms > 0.0 { last.metrics.f1_micro / wall_ms } else { 0.0 },
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn tap_token(tap: FeatureTap) -> &'static str {
    match tap {
        FeatureTap::PostConv => "post_conv",
        FeatureTap::PreOutput => "pre_output",
    }
}

pub fn parse_tap(s: &str) -> Option<FeatureTap> {
    match s {
        "post_conv" => Some(FeatureTap::PostConv),
        "pre_output" => Some(FeatureTap::PreOutput),
        _ => None,
    }
}

/// CSV `tap;location;activity;command;expected_action;v0;v1;...`, one line
/// per sample. Location and activity are empty for unannotated samples.
pub fn features_csv(
    agent: &DqnAgent,
    renderer: &Renderer,
    samples: &[Sample],
    mask: &SensorMask,
    tap: FeatureTap,
) -> Result<String, HarnessError> {
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        let v = agent.features(&renderer.render(&s.state, mask)?, tap)?;
        if i == 0 {
            out.push_str("tap;location;activity;command;expected_action");
            for k in 0..v.len() {
                let _ = write!(out, ";v{k}");
            }
            out.push('\n');
        }
        let (loc, act) =
            s.annotation.as_ref().map(|a| (a.location.to_string(), a.activity.to_string())).unwrap_or_default();
        let _ = write!(out, "{};{loc};{act};{};{}", tap_token(tap), s.state.command, s.expected);
        for x in v {
            let _ = write!(out, ";{x}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(phase: Phase) -> PhaseConfig {
        let mut cfg = PhaseConfig::defaults(phase);
        cfg.total_steps = 240;
        cfg.eval_every = 120;
        cfg.eval_steps = 50;
        cfg.agent.minibatch_size = 4;
        cfg
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::BTreeSet::new();
        for base in 0..20 {
            for stream in [TRAIN_STREAM, EVAL_STREAM, EVAL_STREAM + 1, 0, 2] {
                assert!(seen.insert(derive_seed(base, stream)));
            }
        }
    }

    #[test]
    fn phase_rows_and_cadence() {
        let cfg = tiny(Phase::Pretrain);
        let mut seen = 0;
        let out = run_phase(&cfg, None, &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(out.outcome.rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![120, 240]);
        assert_eq!(out.outcome.learn_calls, 240 / 12);
        assert!(out.outcome.rows.iter().all(|r| r.avg_reward_per_episode <= 1.0 && r.wall_ms == 0));
    }

    #[test]
    fn adapt_requires_a_matching_start() {
        let mut cfg = tiny(Phase::Adapt);
        cfg.data = DataSource::Synthetic;
        assert!(run_phase(&cfg, None, &mut |_| {}).is_err());
        let full = DqnAgent::new(cfg.agent, network_spec(crate::render::ProfileName::Full), 0).unwrap();
        assert!(starting_agent(&cfg, Some(full)).is_err());
        let desk = DqnAgent::new(cfg.agent, network_spec(cfg.render), 0).unwrap();
        let out = run_phase(&cfg, Some(desk), &mut |_| {}).unwrap();
        assert_eq!(out.agent.config().epsilon_start, 0.5);
    }

    #[test]
    fn sweep_cells_and_csv() {
        assert_eq!(
            SweepCell::parse("4096, 32,12").unwrap(),
            SweepCell { target_q: 4096, minibatch_size: 32, update_freq: 12 }
        );
        assert!(SweepCell::parse("1,2").is_err());
        let cfg = tiny(Phase::Pretrain);
        let cells = [SweepCell { target_q: 64, minibatch_size: 2, update_freq: 3 }];
        let rows = run_sweep(&cells, &[1], &cfg, &mut |_| {}).unwrap();
        assert_eq!(rows[0].learn_calls, 80);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().nth(1).unwrap().split(';').count(), 11);
    }

    #[test]
    fn feature_rows() {
        let cfg = tiny(Phase::Pretrain);
        let agent = DqnAgent::new(cfg.agent, network_spec(cfg.render), 3).unwrap();
        let world = SyntheticWorld::reference(cfg.generator).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let samples: Vec<Sample> = (0..3).map(|t| world.sample(t, &mut rng)).collect();
        let r = Renderer::reference(cfg.render);
        let csv = features_csv(&agent, &r, &samples, &SensorMask::none(), FeatureTap::PreOutput).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        let width = lines[0].split(';').count();
        assert!(lines.iter().all(|l| l.split(';').count() == width));
        assert!(lines[1].starts_with("pre_output;"));
        assert_eq!(parse_tap(tap_token(FeatureTap::PostConv)), Some(FeatureTap::PostConv));
    }
}
