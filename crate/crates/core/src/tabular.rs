//! Classical Q-learning over annotated (location, activity, command) states.
//! Consumes the annotations directly, no images.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::harness::Confusion;
use crate::home::{annotated_space, Activity, Room, VoiceCommand, ACTION_COUNT};
use crate::world::{reward, RewardConfig, Sample, SyntheticWorld, WorldState};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum TabularError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("gamma must lie in [0, 1), got {0}")]
    Gamma(f64),
    #[error("sample carries no annotation")]
    Unannotated,
}

/// Rows are created on first write; unseen rows read as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<K: Ord> {
    rows: BTreeMap<K, Vec<f64>>,
    actions: usize,
}

pub type AnnotatedKey = (Room, Activity, VoiceCommand);

impl<K: Ord + Clone> QTable<K> {
    pub fn new(actions: usize) -> Self {
        QTable { rows: BTreeMap::new(), actions }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, s: &K, a: usize) -> f64 {
        self.rows.get(s).map_or(0.0, |r| r[a])
    }

    pub fn set(&mut self, s: &K, a: usize, v: f64) {
        let n = self.actions;
        self.rows.entry(s.clone()).or_insert_with(|| vec![0.0; n])[a] = v;
    }

    pub fn row(&self, s: &K) -> Vec<f64> {
        self.rows.get(s).cloned().unwrap_or_else(|| vec![0.0; self.actions])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&K, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn max(&self, s: &K) -> f64 {
        self.rows.get(s).map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Lowest index wins ties.
    pub fn greedy(&self, s: &K) -> usize {
        let Some(row) = self.rows.get(s) else { return 0 };
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    /// `Q(s,a) ← α(r + γ·max_a' Q(s',a')) + (1−α)·Q(s,a)`; a terminal
    /// transition (`s_next = None`) bootstraps from zero.
    pub fn q_update(
        &mut self,
        s: &K,
        a: usize,
        r: f64,
        s_next: Option<&K>,
        alpha: f64,
        gamma: f64,
    ) -> Result<(), TabularError> {
        check(alpha, gamma)?;
        let next = s_next.map_or(0.0, |n| self.max(n));
        let v = alpha * (r + gamma * next) + (1.0 - alpha) * self.get(s, a);
        self.set(s, a, v);
        Ok(())
    }
}

fn check(alpha: f64, gamma: f64) -> Result<(), TabularError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TabularError::Alpha(alpha));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(TabularError::Gamma(gamma));
    }
    Ok(())
}

impl QTable<AnnotatedKey> {
    /// CSV `location;activity;verb;object;action_index;q_value`, one line per
    /// stored entry.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("location;activity;verb;object;action_index;q_value\n");
        for ((room, act, cmd), row) in &self.rows {
            for (a, q) in row.iter().enumerate() {
                let _ = writeln!(out, "{room};{act};{};{};{a};{q}", cmd.verb, cmd.object);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub tries_threshold: u32,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            alpha: DEFAULT_ALPHA,
            gamma: 0.9,
            epsilon_start: 0.99,
            epsilon_end: 0.5,
            epsilon_anneal_steps: 200_000,
            tries_threshold: crate::world::DEFAULT_TRIES_THRESHOLD,
        }
    }
}

impl TabularConfig {
    pub fn epsilon(&self, step: u64) -> f64 {
        if step >= self.epsilon_anneal_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_anneal_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

fn key_of(s: &Sample) -> Result<AnnotatedKey, TabularError> {
    s.annotation.as_ref().map(|a| a.key()).ok_or(TabularError::Unannotated)
}

/// Runs `steps` interactions: ε-greedy choice, retry/advance on the served
/// sample, then one update toward the state served next.
pub fn train(
    table: &mut QTable<AnnotatedKey>,
    next_sample: &mut dyn FnMut() -> Sample,
    steps: u64,
    cfg: &TabularConfig,
    rewards: &RewardConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), TabularError> {
    check(cfg.alpha, cfg.gamma)?;
    let mut world = WorldState::new(next_sample(), cfg.tries_threshold);
    for step in 0..steps {
        let s = key_of(&world.current)?;
        let expected = world.current.expected;
        let a = if rng.gen::<f64>() < cfg.epsilon(step) { rng.gen_range(0..ACTION_COUNT) } else { table.greedy(&s) };
        world.perform_action(a, &mut *next_sample);
        let s_next = key_of(&world.current)?;
        table.q_update(&s, a, reward(expected, a, rewards) as f64, Some(&s_next), cfg.alpha, cfg.gamma)?;
    }
    Ok(())
}

/// Greedy decisions on `samples`, one per sample.
pub fn evaluate(table: &QTable<AnnotatedKey>, samples: &[Sample]) -> Result<Confusion, TabularError> {
    let mut c = Confusion::default();
    for s in samples {
        c.record(s.expected, table.greedy(&key_of(s)?));
    }
    Ok(c)
}

/// Trains on the synthetic generator seeded with `seed`.
pub fn train_synthetic(
    world: &SyntheticWorld,
    steps: u64,
    cfg: &TabularConfig,
    seed: u64,
) -> Result<QTable<AnnotatedKey>, TabularError> {
    let mut table = QTable::new(ACTION_COUNT);
    let mut gen_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut act_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut ts = 0i64;
    let mut next = || {
        ts += 1;
        world.sample(ts, &mut gen_rng)
    };
    train(&mut table, &mut next, steps, cfg, &RewardConfig::default(), &mut act_rng)?;
    debug_assert!(table.len() <= annotated_space().len());
    Ok(table)
}

/// A deterministic MDP given by `next[s][a]` and `reward[s][a]`; a `None`
/// successor ends the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub next: Vec<Vec<Option<usize>>>,
    pub reward: Vec<Vec<f64>>,
}

impl FiniteMdp {
    /// States 0 → 1 → 2 → exit. Action 0 moves right for +1, action 1
    /// stays put for 0.
    pub fn chain3() -> Self {
        FiniteMdp {
            next: vec![vec![Some(1), Some(0)], vec![Some(2), Some(1)], vec![None, Some(2)]],
            reward: vec![vec![1.0, 0.0]; 3],
        }
    }

    pub fn states(&self) -> usize {
        self.next.len()
    }

    pub fn actions(&self) -> usize {
        self.next[0].len()
    }

    /// Optimal Q by value iteration to a sup-norm change below `tol`.
    #[allow(clippy::needless_range_loop)]
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.actions()]; self.states()];
        loop {
            let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let mut delta: f64 = 0.0;
            for s in 0..self.states() {
                for a in 0..self.actions() {
                    let new = self.reward[s][a] + self.next[s][a].map_or(0.0, |n| gamma * v[n]);
                    delta = delta.max((new - q[s][a]).abs());
                    q[s][a] = new;
                }
            }
            if delta < tol {
                return q;
            }
        }
    }

    /// Q-learning with a uniformly random behaviour policy; episodes restart
    /// at a uniformly random state.
    pub fn q_learning(&self, steps: u64, alpha: f64, gamma: f64, seed: u64) -> Result<QTable<usize>, TabularError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = QTable::new(self.actions());
        let mut s = 0;
        for _ in 0..steps {
            let a = rng.gen_range(0..self.actions());
            let next = self.next[s][a];
            table.q_update(&s, a, self.reward[s][a], next.as_ref(), alpha, gamma)?;
            s = next.unwrap_or_else(|| rng.gen_range(0..self.states()));
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{Object, Verb};
    use crate::world::GeneratorConfig;
    use proptest::prelude::*;

    #[test]
    fn update_examples() {
        let mut t: QTable<usize> = QTable::new(2);
        t.set(&0, 0, 7.0);
        t.set(&1, 1, 2.0);
        t.q_update(&0, 0, 1.0, Some(&1), 1.0, 0.5).unwrap();
        assert_eq!(t.get(&0, 0), 2.0);
        let mut t: QTable<usize> = QTable::new(2);
        t.q_update(&0, 0, 1.0, Some(&1), 0.5, 0.9).unwrap();
        assert_eq!(t.get(&0, 0), 0.5);
        let mut t: QTable<usize> = QTable::new(2);
        t.set(&1, 0, 4.0);
        t.set(&0, 1, 1.0 + 0.5 * 4.0);
        t.q_update(&0, 1, 1.0, Some(&1), 0.3, 0.5).unwrap();
        assert!((t.get(&0, 1) - 3.0).abs() < 1e-12);
        assert_eq!(t.q_update(&0, 0, 1.0, None, 0.0, 0.5), Err(TabularError::Alpha(0.0)));
        assert_eq!(t.q_update(&0, 0, 1.0, None, 0.5, 1.0), Err(TabularError::Gamma(1.0)));
    }

    #[test]
    fn greedy_ties_and_max() {
        let mut t: QTable<usize> = QTable::new(ACTION_COUNT);
        assert_eq!(t.greedy(&3), 0);
        t.set(&3, 12, 0.4);
        assert_eq!(t.greedy(&3), 12);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn chain_oracle() {
        let mdp = FiniteMdp::chain3();
        let oracle = mdp.value_iteration(0.9, 1e-12);
        // Moving right three times collects 1, 0.9, 0.81.
        assert!((oracle[0][0] - 2.71).abs() < 1e-9);
        assert!((oracle[2][0] - 1.0).abs() < 1e-9);
        let t = mdp.q_learning(200_000, 0.1, 0.9, 4).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((t.get(&s, a) - oracle[s][a]).abs() < 1e-3, "Q({s},{a})");
            }
            assert_eq!(t.greedy(&s), 0);
        }
    }

    #[test]
    fn learns_the_rule_table_and_dumps() {
        let world = SyntheticWorld::reference(GeneratorConfig::default()).unwrap();
        let cfg = TabularConfig { epsilon_anneal_steps: 50_000, ..TabularConfig::default() };
        let table = train_synthetic(&world, 100_000, &cfg, 9).unwrap();
        assert!(table.len() <= annotated_space().len());
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let held: Vec<Sample> = (0..2000).map(|t| world.sample(t, &mut rng)).collect();
        let acc = evaluate(&table, &held).unwrap().metrics().f1_micro;
        assert!(acc >= 0.95, "accuracy {acc}");
        let key = (Room::Kitchen, Activity::Cook, VoiceCommand::new(Verb::TurnOn, Object::Light));
        assert_eq!(crate::home::action_by_index(table.greedy(&key)).unwrap().device, "light_sink");
        let csv = table.dump_csv();
        assert_eq!(csv.lines().count(), 1 + table.len() * ACTION_COUNT);
        let line = csv.lines().find(|l| l.starts_with("kitchen;cook;turn_on;light;")).unwrap();
        assert!(line.split(';').count() == 6);
    }

    #[test]
    fn converges_without_exploration() {
        let world = SyntheticWorld::reference(GeneratorConfig::default()).unwrap();
        let cfg = TabularConfig { epsilon_start: 0.0, epsilon_end: 0.0, ..TabularConfig::default() };
        let table = train_synthetic(&world, 100_000, &cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let held: Vec<Sample> = (0..1000).map(|t| world.sample(t, &mut rng)).collect();
        assert!(evaluate(&table, &held).unwrap().metrics().f1_micro >= 0.95);
    }

    proptest! {
        #[test]
        fn greedy_shift_invariant(row in proptest::collection::vec(-40i32..40, ACTION_COUNT), c in -100i32..100) {
            let mut t: QTable<u8> = QTable::new(ACTION_COUNT);
            let mut u: QTable<u8> = QTable::new(ACTION_COUNT);
            for (a, v) in row.iter().enumerate() {
                // Quarter steps keep every sum exact.
                t.set(&0, a, *v as f64 * 0.25);
                u.set(&0, a, *v as f64 * 0.25 + c as f64);
            }
            prop_assert_eq!(t.greedy(&0), u.greedy(&0));
        }
    }
}
