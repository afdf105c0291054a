//! Decision metrics over the 33-way action classification.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::home::{ACTION_COUNT, DO_NOTHING};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    counts: Vec<u64>,
    total: u64,
}

impl Default for Confusion {
    fn default() -> Self {
        Confusion { counts: vec![0; ACTION_COUNT * ACTION_COUNT], total: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub decisions: u64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub f1_micro: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f1_macro: f64,
}

impl Confusion {
    pub fn record(&mut self, expected: usize, predicted: usize) {
        self.counts[expected * ACTION_COUNT + predicted] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, expected: usize, predicted: usize) -> u64 {
        self.counts[expected * ACTION_COUNT + predicted]
    }

    fn row_sum(&self, c: usize) -> u64 {
        (0..ACTION_COUNT).map(|p| self.count(c, p)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..ACTION_COUNT).map(|e| self.count(e, c)).sum()
    }

    fn correct(&self) -> u64 {
        (0..ACTION_COUNT).map(|c| self.count(c, c)).sum()
    }

    /// Labels that occur as expected or predicted.
    pub fn active_labels(&self) -> Vec<usize> {
        (0..ACTION_COUNT).filter(|&c| self.row_sum(c) + self.col_sum(c) > 0).collect()
    }

    pub fn class(&self, c: usize) -> ClassStats {
        let tp = self.count(c, c) as f64;
        let support = self.row_sum(c);
        let predicted = self.col_sum(c) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        ClassStats { precision, recall, f1: f1(precision, recall), support }
    }

    /// Macro F1 over the active labels accepted by `keep`.
    pub fn macro_f1_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let labels: Vec<_> = self.active_labels().into_iter().filter(|&c| keep(c)).collect();
        if labels.is_empty() {
            return 0.0;
        }
        labels.iter().map(|&c| self.class(c).f1).sum::<f64>() / labels.len() as f64
    }

    /// Macro F1 over every active label except do-nothing.
    pub fn action_macro_f1(&self) -> f64 {
        self.macro_f1_where(|c| c != DO_NOTHING)
    }

    pub fn metrics(&self) -> Metrics {
        if self.total == 0 {
            return Metrics::default();
        }
        // Every decision is one prediction and one ground-truth label, so
        // micro precision and micro recall coincide with accuracy.
        let acc = self.correct() as f64 / self.total as f64;
        let labels = self.active_labels();
        let n = labels.len() as f64;
        let stats: Vec<_> = labels.iter().map(|&c| self.class(c)).collect();
        Metrics {
            decisions: self.total,
            micro_precision: acc,
            micro_recall: acc,
            f1_micro: acc,
            macro_precision: stats.iter().map(|s| s.precision).sum::<f64>() / n,
            macro_recall: stats.iter().map(|s| s.recall).sum::<f64>() / n,
            f1_macro: stats.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One evaluation checkpoint of a phase. `precision` and `recall` are
/// macro-averaged; their micro averages equal `f1_micro`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub phase: String,
    pub step: u64,
    pub episodes: u64,
    pub avg_reward_per_episode: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub epsilon: f64,
    pub wall_ms: u64,
}

pub const METRICS_HEADER: &str =
    "phase;step;episodes;avg_reward_per_episode;precision;recall;f1_micro;f1_macro;epsilon;wall_ms";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{};{};{};{:.6};{:.6};{:.6};{:.6};{:.6};{:.6};{}",
            self.phase,
            self.step,
            self.episodes,
            self.avg_reward_per_episode,
            self.precision,
            self.recall,
            self.f1_micro,
            self.f1_macro,
            self.epsilon,
            self.wall_ms
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}
