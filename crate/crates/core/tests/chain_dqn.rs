//! The DQN learns the optimal policy of a small deterministic MDP whose
//! states are rendered as distinct images, matching value iteration.

use std::sync::Arc;

use homedqn_core::agent::{network_spec, transition, AgentConfig, DqnAgent};
use homedqn_core::home::ACTION_COUNT;
use homedqn_core::render::{ProfileName, StateImage};
use homedqn_core::tabular::FiniteMdp;

const GOOD: [usize; 3] = [5, 17, 29];

/// A cycle of three states: the state's own good action moves on for +1,
/// anything else stays put for −1.
fn cyclic_chain() -> FiniteMdp {
    let next =
        (0..3).map(|s| (0..ACTION_COUNT).map(|a| Some(if a == GOOD[s] { (s + 1) % 3 } else { s })).collect()).collect();
    let reward = (0..3).map(|s| (0..ACTION_COUNT).map(|a| if a == GOOD[s] { 1.0 } else { -1.0 }).collect()).collect();
    FiniteMdp { next, reward }
}

/// A bright 16×16 square in a different place for each state.
fn image(s: usize) -> Arc<StateImage> {
    let mut img = StateImage::filled(64, 0);
    for y in 0..16 {
        for x in 0..16 {
            img.pixels[(8 + 16 * s + y) * 64 + 8 + x] = 255;
        }
    }
    Arc::new(img)
}

fn greedy(q: &[f64]) -> usize {
    (0..q.len()).fold(0, |b, a| if q[a] > q[b] { a } else { b })
}

#[test]
fn dqn_policy_matches_value_iteration() {
    let mdp = cyclic_chain();
    let gamma = 0.9;
    let oracle = mdp.value_iteration(gamma, 1e-9);
    let images: Vec<_> = (0..3).map(image).collect();

    let cfg = AgentConfig {
        gamma,
        minibatch_size: 16,
        update_freq: 1_000_000,
        target_q: 1_000_000,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(cfg, network_spec(ProfileName::Desk), 7).unwrap();
    for s in 0..3 {
        for a in 0..ACTION_COUNT {
            let n = mdp.next[s][a].unwrap();
            agent.observe(transition(&images[s], a, mdp.reward[s][a] as i32, &images[n])).unwrap();
        }
    }
    for i in 1..=1500 {
        agent.learn().unwrap();
        if i % 50 == 0 {
            agent.sync_target();
        }
    }

    for s in 0..3 {
        let q = agent.q_values(&images[s]).unwrap();
        assert_eq!(agent.greedy(&images[s]).unwrap(), greedy(&oracle[s]), "state {s}: {q:?}");
        assert_eq!(greedy(&oracle[s]), GOOD[s]);
    }
}
