//! Synthetic home: annotated sample generation, sensor realization, the
//! retry-or-advance environment rule, rewards and command windowing.

mod rules;

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::{
    action_by_index, action_catalog, Activity, AnnotatedState, EnvState, Room, SensorKind, SensorManifest,
    VoiceCommand, DO_NOTHING,
};
use crate::render::{RenderError, Renderer, SensorMask, StateImage};

pub use rules::{RuleError, RuleTable, ValueSpec};

/// Probability that a non-deterministic generator swaps the expected action
/// for another device answering the same command.
pub const PREFERENCE_NOISE: f64 = 0.1;
/// Seconds between the states of a command window.
pub const WINDOW_STEP: i64 = 1;
pub const WINDOW_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub deterministic: bool,
    pub restricted: bool,
    pub adjacency_presence_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { deterministic: true, restricted: false, adjacency_presence_prob: 0.0, seed: 0 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(0.0..=1.0).contains(&self.adjacency_presence_prob) {
            return Err(WorldError::Config(format!(
                "adjacency_presence_prob {} is not a probability",
                self.adjacency_presence_prob
            )));
        }
        Ok(())
    }
}

/// One served observation and the action it calls for.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: EnvState,
    pub expected: usize,
    pub annotation: Option<AnnotatedState>,
    pub participant: Option<String>,
}

/// Rule-driven generator over a sensor manifest.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    manifest: Arc<SensorManifest>,
    rules: Arc<RuleTable>,
    cfg: GeneratorConfig,
    constraints: HashMap<(Room, Activity), Vec<Option<ValueSpec>>>,
    alternatives: Vec<Vec<usize>>,
}

impl SyntheticWorld {
    pub fn new(manifest: Arc<SensorManifest>, rules: Arc<RuleTable>, cfg: GeneratorConfig) -> Result<Self, WorldError> {
        cfg.validate()?;
        rules.check_against(&manifest)?;
        let mut constraints = HashMap::new();
        for &room in Room::ALL {
            for &act in room.activities() {
                let row = manifest.sensors().iter().map(|s| rules.constraint(room, act, &s.id)).collect();
                constraints.insert((room, act), row);
            }
        }
        let alternatives = action_catalog()
            .iter()
            .map(|a| {
                action_catalog()
                    .iter()
                    .filter(|b| b.index != a.index && b.verb == a.verb && b.object == a.object)
                    .map(|b| b.index)
                    .collect()
            })
            .collect();
        Ok(SyntheticWorld { manifest, rules, cfg, constraints, alternatives })
    }

    pub fn reference(cfg: GeneratorConfig) -> Result<Self, WorldError> {
        Self::new(SensorManifest::reference(), RuleTable::reference(), cfg)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &Arc<SensorManifest> {
        &self.manifest
    }

    pub fn rules(&self) -> &Arc<RuleTable> {
        &self.rules
    }

    /// Location uniform over rooms, then activity uniform over the room's
    /// activities, then command uniform over the vocabulary.
    pub fn generate_annotated<R: Rng + ?Sized>(&self, rng: &mut R) -> AnnotatedState {
        let location = *Room::ALL.choose(rng).expect("rooms exist");
        let activity = *location.activities().choose(rng).expect("rooms have activities");
        let command = *VoiceCommand::vocabulary().choose(rng).expect("vocabulary is non-empty");
        let mut expected_action = self.rules.resolve(location, activity, command).expect("rule table covers the space");
        if !self.cfg.deterministic && rng.gen_bool(PREFERENCE_NOISE) {
            if let Some(&alt) = self.alternatives[expected_action].choose(rng) {
                expected_action = alt;
            }
        }
        AnnotatedState { location, activity, command, expected_action }
    }

    pub fn realize_sensors<R: Rng + ?Sized>(&self, a: &AnnotatedState, timestamp: i64, rng: &mut R) -> EnvState {
        let row = &self.constraints[&(a.location, a.activity)];
        let mut state = EnvState::new(timestamp);
        state.command = a.command;
        for (spec, constraint) in self.manifest.sensors().iter().zip(row) {
            let value = if spec.is_presence() {
                let here = spec.room == a.location;
                if here || (spec.room.is_adjacent(a.location) && rng.gen_bool(self.cfg.adjacency_presence_prob)) {
                    1.0
                } else {
                    0.0
                }
            } else if let Some(c) = constraint {
                match *c {
                    ValueSpec::Fixed(v) => v,
                    ValueSpec::Range(lo, hi) => rng.gen_range(lo..=hi),
                }
            } else if self.cfg.restricted {
                spec.midpoint()
            } else {
                match spec.kind {
                    SensorKind::Binary => rng.gen_bool(0.5) as u8 as f64,
                    _ => rng.gen_range(spec.lo..=spec.hi),
                }
            };
            state.readings.insert(spec.id.clone(), value);
        }
        state
    }

    pub fn sample<R: Rng + ?Sized>(&self, timestamp: i64, rng: &mut R) -> Sample {
        let a = self.generate_annotated(rng);
        let state = self.realize_sensors(&a, timestamp, rng);
        Sample { state, expected: a.expected_action, annotation: Some(a), participant: None }
    }
}

/// The states at t−2, t−1 and t around a command uttered at t. Only the last
/// carries the command and a non-trivial expected action.
pub fn window_samples(sample: &Sample) -> [Sample; WINDOW_LEN] {
    let t = sample.state.timestamp;
    let quiet = |dt: i64| {
        let mut s = sample.clone();
        s.state.timestamp = t - dt;
        s.state.command = VoiceCommand::NONE;
        s.expected = DO_NOTHING;
        if let Some(a) = s.annotation.as_mut() {
            a.command = VoiceCommand::NONE;
            a.expected_action = DO_NOTHING;
        }
        s
    };
    [quiet(2 * WINDOW_STEP), quiet(WINDOW_STEP), sample.clone()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Plain,
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub correct: i32,
    pub wrong: i32,
    pub wrong_nothing: i32,
    pub mode: RewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { correct: 1, wrong: -1, wrong_nothing: -192, mode: RewardMode::Plain }
    }
}

impl RewardConfig {
    pub fn windowed() -> Self {
        RewardConfig { mode: RewardMode::Windowed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.correct > 0 && 0 > self.wrong && self.wrong >= self.wrong_nothing {
            Ok(())
        } else {
            Err(WorldError::Config("rewards must satisfy correct > 0 > wrong >= wrong_nothing".into()))
        }
    }
}

pub fn reward(expected: usize, predicted: usize, cfg: &RewardConfig) -> i32 {
    if expected == predicted {
        cfg.correct
    } else if cfg.mode == RewardMode::Windowed && predicted == DO_NOTHING {
        cfg.wrong_nothing
    } else {
        cfg.wrong
    }
}

/// The retry-or-advance rule: returns (advanced, tries afterwards).
pub fn advance_rule(tries: u32, threshold: u32, matched: bool) -> (bool, u32) {
    if matched || tries > threshold {
        (true, 0)
    } else {
        (false, tries + 1)
    }
}

pub const DEFAULT_TRIES_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub current: Sample,
    pub tries: u32,
    pub threshold: u32,
}

impl WorldState {
    pub fn new(first: Sample, threshold: u32) -> Self {
        WorldState { current: first, tries: 0, threshold }
    }

    /// Applies the advance rule; `next` is drawn only on advancement.
    pub fn perform_action(&mut self, predicted: usize, next: impl FnOnce() -> Sample) -> bool {
        let (advanced, tries) = advance_rule(self.tries, self.threshold, predicted == self.current.expected);
        self.tries = tries;
        if advanced {
            self.current = next();
        }
        advanced
    }
}

/// An endless supply of samples.
pub trait SampleSource: Send {
    fn next_sample(&mut self) -> Sample;
}

/// Generator-backed stream, optionally expanded into command windows.
pub struct SyntheticSource {
    world: Arc<SyntheticWorld>,
    rng: ChaCha8Rng,
    windowed: bool,
    queue: VecDeque<Sample>,
    clock: i64,
}

impl SyntheticSource {
    pub fn new(world: Arc<SyntheticWorld>, seed: u64, windowed: bool) -> Self {
        SyntheticSource { world, rng: ChaCha8Rng::seed_from_u64(seed), windowed, queue: VecDeque::new(), clock: 0 }
    }
}

impl SampleSource for SyntheticSource {
    fn next_sample(&mut self) -> Sample {
        if let Some(s) = self.queue.pop_front() {
            return s;
        }
        if self.windowed {
            self.clock += WINDOW_LEN as i64 * WINDOW_STEP;
            let sample = self.world.sample(self.clock, &mut self.rng);
            let [a, b, c] = window_samples(&sample);
            self.queue.extend([b, c]);
            a
        } else {
            self.clock += 1;
            self.world.sample(self.clock, &mut self.rng)
        }
    }
}

/// Replays a finite sample list forever. With a shuffle seed, the order of
/// consecutive groups of `group` samples is reshuffled on every pass.
pub struct CyclicSource {
    samples: Arc<Vec<Sample>>,
    group: usize,
    order: Vec<usize>,
    pos: usize,
    rng: Option<ChaCha8Rng>,
}

impl CyclicSource {
    pub fn new(samples: Arc<Vec<Sample>>, group: usize, shuffle_seed: Option<u64>) -> Self {
        assert!(!samples.is_empty(), "a cyclic source needs samples");
        let group = group.max(1);
        let groups = samples.len().div_ceil(group);
        let mut src = CyclicSource {
            samples,
            group,
            order: (0..groups).collect(),
            pos: 0,
            rng: shuffle_seed.map(ChaCha8Rng::seed_from_u64),
        };
        src.reshuffle();
        src
    }

    fn reshuffle(&mut self) {
        if let Some(rng) = self.rng.as_mut() {
            self.order.shuffle(rng);
        }
    }
}

impl SampleSource for CyclicSource {
    fn next_sample(&mut self) -> Sample {
        loop {
            let g = self.pos / self.group;
            if g >= self.order.len() {
                self.pos = 0;
                self.reshuffle();
                continue;
            }
            let idx = self.order[g] * self.group + self.pos % self.group;
            self.pos += 1;
            if let Some(s) = self.samples.get(idx) {
                return s.clone();
            }
        }
    }
}

/// Couples a sample source with the advance rule and the renderer. The
/// image of the current sample is rendered once per advancement.
pub struct Environment {
    source: Box<dyn SampleSource>,
    world: WorldState,
    renderer: Arc<Renderer>,
    mask: SensorMask,
    image: Arc<StateImage>,
}

impl Environment {
    pub fn new(
        mut source: Box<dyn SampleSource>,
        threshold: u32,
        renderer: Arc<Renderer>,
        mask: SensorMask,
    ) -> Result<Self, RenderError> {
        let first = source.next_sample();
        let image = Arc::new(renderer.render(&first.state, &mask)?);
        Ok(Environment { source, world: WorldState::new(first, threshold), renderer, mask, image })
    }

    pub fn observe(&self) -> &Arc<StateImage> {
        &self.image
    }

    pub fn current(&self) -> &Sample {
        &self.world.current
    }

    pub fn expected(&self) -> usize {
        self.world.current.expected
    }

    pub fn tries(&self) -> u32 {
        self.world.tries
    }

    pub fn mask(&self) -> &SensorMask {
        &self.mask
    }

    /// Applies `action`; returns whether the environment advanced.
    pub fn step(&mut self, action: usize) -> Result<bool, RenderError> {
        debug_assert!(action_by_index(action).is_ok());
        let source = &mut self.source;
        let advanced = self.world.perform_action(action, || source.next_sample());
        if advanced {
            self.image = Arc::new(self.renderer.render(&self.world.current.state, &self.mask)?);
        }
        Ok(advanced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{Object, Verb};
    use crate::render::ProfileName;
    use proptest::prelude::*;

    fn world(cfg: GeneratorConfig) -> SyntheticWorld {
        SyntheticWorld::reference(cfg).unwrap()
    }

    fn kitchen(activity: Activity) -> AnnotatedState {
        AnnotatedState {
            location: Room::Kitchen,
            activity,
            command: VoiceCommand::new(Verb::TurnOn, Object::Light),
            expected_action: 1,
        }
    }

    #[test]
    fn presence_follows_location() {
        let m = SensorManifest::reference();
        for (p, bedroom_expected) in [(0.0, 0.0), (1.0, 1.0)] {
            let w = world(GeneratorConfig { adjacency_presence_prob: p, ..Default::default() });
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let s = w.realize_sensors(&kitchen(Activity::Cook), 0, &mut rng);
                for spec in m.presence_sensors(Room::Kitchen) {
                    assert_eq!(s.readings[&spec.id], 1.0);
                }
                for spec in m.presence_sensors(Room::Bedroom) {
                    assert_eq!(s.readings[&spec.id], bedroom_expected);
                }
                for spec in m.presence_sensors(Room::Study) {
                    assert_eq!(s.readings[&spec.id], 0.0);
                }
                assert_eq!(crate::home::validate_state(&s, &m), Ok(()));
            }
        }
    }

    #[test]
    fn activity_sensors_follow_rules() {
        let w = world(GeneratorConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cook = w.realize_sensors(&kitchen(Activity::Cook), 0, &mut rng);
        let wash = w.realize_sensors(&kitchen(Activity::WashDishes), 0, &mut rng);
        assert_eq!((cook.readings["kitchen_hob_on"], wash.readings["kitchen_hob_on"]), (1.0, 0.0));
        assert!(wash.readings["kitchen_water_hot_gauge"] >= 50.0);
        assert!(cook.readings["kitchen_water_hot_gauge"] <= 10.0);
    }

    #[test]
    fn restricted_mode_holds_irrelevant_sensors() {
        let w = world(GeneratorConfig { restricted: true, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = w.realize_sensors(&kitchen(Activity::Eat), 0, &mut rng);
        let b = w.realize_sensors(&kitchen(Activity::Eat), 0, &mut rng);
        assert_eq!(a.readings["kitchen_window"], 0.0);
        assert_eq!(a.readings["kitchen_temperature"], 20.0);
        for (id, v) in &a.readings {
            let free =
                w.rules.constraint(Room::Kitchen, Activity::Eat, id).is_none_or(|c| matches!(c, ValueSpec::Fixed(_)));
            if free {
                assert_eq!(b.readings[id], *v, "{id}");
            }
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let w = Arc::new(world(GeneratorConfig {
            deterministic: false,
            adjacency_presence_prob: 0.5,
            ..Default::default()
        }));
        let mut a = SyntheticSource::new(w.clone(), 9, true);
        let mut b = SyntheticSource::new(w, 9, true);
        for _ in 0..30 {
            assert_eq!(a.next_sample(), b.next_sample());
        }
    }

    #[test]
    fn deterministic_mapping_is_a_function() {
        let w = world(GeneratorConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut seen = HashMap::new();
        for _ in 0..5000 {
            let a = w.generate_annotated(&mut rng);
            let prev = seen.insert(a.key(), a.expected_action);
            assert!(prev.is_none_or(|p| p == a.expected_action));
        }
        assert_eq!(seen.len(), crate::home::annotated_space().len());
    }

    #[test]
    fn preference_noise_stays_on_command() {
        let w = world(GeneratorConfig { deterministic: false, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut swapped = 0;
        for _ in 0..4000 {
            let a = w.generate_annotated(&mut rng);
            let rule = w.rules.resolve(a.location, a.activity, a.command).unwrap();
            if rule != a.expected_action {
                swapped += 1;
                let (x, y) = (action_by_index(rule).unwrap(), action_by_index(a.expected_action).unwrap());
                assert_eq!((x.verb, x.object), (y.verb, y.object));
            }
        }
        assert!(swapped > 100 && swapped < 400, "{swapped}");
    }

    #[test]
    fn advance_rule_exhaustive() {
        for threshold in 1..6u32 {
            for tries in 0..=threshold + 1 {
                for matched in [false, true] {
                    let (adv, next) = advance_rule(tries, threshold, matched);
                    let expect_adv = matched || tries > threshold;
                    assert_eq!(adv, expect_adv);
                    assert_eq!(next, if expect_adv { 0 } else { tries + 1 });
                    assert!(next <= threshold + 1);
                }
            }
        }
        assert_eq!(advance_rule(0, 3, false), (false, 1));
        assert_eq!(advance_rule(4, 3, false), (true, 0));
    }

    #[test]
    fn failed_sample_is_served_five_times() {
        let w = Arc::new(world(GeneratorConfig::default()));
        let mut src = SyntheticSource::new(w, 1, false);
        let first = src.next_sample();
        let wrong = (first.expected + 1) % 33;
        let mut ws = WorldState::new(first, DEFAULT_TRIES_THRESHOLD);
        let mut served = 1;
        while !ws.perform_action(wrong, || src.next_sample()) {
            served += 1;
        }
        assert_eq!(served, 5);
    }

    #[test]
    fn rewards() {
        let plain = RewardConfig::default();
        let win = RewardConfig::windowed();
        assert_eq!(reward(5, 5, &plain), 1);
        assert_eq!(reward(DO_NOTHING, DO_NOTHING, &win), 1);
        assert_eq!(reward(1, 2, &plain), -1);
        assert_eq!(reward(18, DO_NOTHING, &win), -192);
        assert_eq!(reward(18, DO_NOTHING, &plain), -1);
        assert_eq!(reward(DO_NOTHING, 3, &win), -1);
        assert!(RewardConfig { wrong_nothing: 0, ..plain }.validate().is_err());
        plain.validate().unwrap();
    }

    #[test]
    fn windows_have_two_quiet_states() {
        let w = world(GeneratorConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = w.sample(100, &mut rng);
        let win = window_samples(&s);
        assert_eq!(win.iter().map(|x| x.state.timestamp).collect::<Vec<_>>(), vec![98, 99, 100]);
        assert_eq!(win.iter().filter(|x| x.expected == DO_NOTHING).count(), 2 + (s.expected == DO_NOTHING) as usize);
        assert!(win[0].state.command.is_none() && win[1].state.command.is_none());
        assert_eq!(win[2], s);
    }

    #[test]
    fn cyclic_source_visits_everything() {
        let w = world(GeneratorConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<_> = (0..9).map(|t| w.sample(t, &mut rng)).collect();
        let mut src = CyclicSource::new(Arc::new(samples.clone()), 3, Some(1));
        let drawn: Vec<_> = (0..9).map(|_| src.next_sample().state.timestamp).collect();
        let mut sorted = drawn.clone();
        sorted.sort();
        assert_eq!(sorted, (0..9).collect::<Vec<_>>());
        for chunk in drawn.chunks(3) {
            assert_eq!(chunk[0] % 3, 0);
            assert_eq!((chunk[1] - chunk[0], chunk[2] - chunk[0]), (1, 2));
        }
        let mut plain = CyclicSource::new(Arc::new(samples), 1, None);
        assert_eq!(plain.next_sample().state.timestamp, 0);
    }

    #[test]
    fn environment_rerenders_on_advance() {
        let w = Arc::new(world(GeneratorConfig::default()));
        let src = Box::new(SyntheticSource::new(w, 11, false));
        let mut env = Environment::new(src, 3, Renderer::reference(ProfileName::Desk), SensorMask::none()).unwrap();
        let img = env.observe().clone();
        let wrong = (env.expected() + 1) % 33;
        assert!(!env.step(wrong).unwrap());
        assert!(Arc::ptr_eq(&img, env.observe()));
        let right = env.expected();
        assert!(env.step(right).unwrap());
        assert_eq!(env.tries(), 0);
    }

    proptest! {
        #[test]
        fn realized_states_are_valid(seed in any::<u64>(), det in any::<bool>(), restricted in any::<bool>(), p in 0.0f64..=1.0) {
            let w = world(GeneratorConfig { deterministic: det, restricted, adjacency_presence_prob: p, seed });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = w.sample(0, &mut rng);
            prop_assert_eq!(crate::home::validate_state(&s.state, w.manifest()), Ok(()));
            prop_assert!(s.expected < 33);
        }

        #[test]
        fn reward_range(e in 0usize..33, p in 0usize..33, windowed in any::<bool>()) {
            let cfg = if windowed { RewardConfig::windowed() } else { RewardConfig::default() };
            prop_assert!([1, -1, -192].contains(&reward(e, p, &cfg)));
        }
    }
}
