//! Wire messages: one JSON object per frame, discriminated by `type`, each
//! stamped with the protocol version.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const PROTO: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub steps: u64,
    pub rewards_positive: u64,
    pub rewards_negative: u64,
    pub learn_calls: u64,
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    /// Client: open a session (or resume one by id). Server: the session
    /// that is now attached.
    Hello {
        proto: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<String>,
        /// File name inside the server's checkpoint directory.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// The perceived state as a base64 PGM.
    State {
        proto: u32,
        step: u64,
        side: usize,
        image: String,
    },
    Command {
        proto: u32,
        verb: String,
        object: String,
        /// Sensor id to value; kept for the rest of the session.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        overrides: BTreeMap<String, f64>,
    },
    Decision {
        proto: u32,
        step: u64,
        action_index: usize,
        label: String,
        q_values: Vec<f32>,
    },
    Reward {
        proto: u32,
        value: i32,
    },
    Ack {
        proto: u32,
        step: u64,
        learned: bool,
        metrics: MetricsSnapshot,
    },
    /// Client: request a snapshot (omit `metrics`). Server: the snapshot.
    Metrics {
        proto: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metrics: Option<MetricsSnapshot>,
    },
    Error {
        proto: u32,
        message: String,
    },
}

impl Message {
    pub fn proto(&self) -> u32 {
        match self {
            Message::Hello { proto, .. }
            | Message::State { proto, .. }
            | Message::Command { proto, .. }
            | Message::Decision { proto, .. }
            | Message::Reward { proto, .. }
            | Message::Ack { proto, .. }
            | Message::Metrics { proto, .. }
            | Message::Error { proto, .. } => *proto,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error { proto: PROTO, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}
