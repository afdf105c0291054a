//! Checkpoint = weights file plus a JSON sidecar holding counters.

use std::path::{Path, PathBuf};

use homedqn_nn::{load_weights, save_weights, QNetwork};
use serde::{Deserialize, Serialize};

use super::{network_spec, AgentConfig, AgentError, Counters, DqnAgent, Result};
use crate::render::ProfileName;

pub const META_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub profile: ProfileName,
    pub counters: Counters,
    pub pool_len: usize,
    pub pool_inserted: u64,
}

pub fn meta_path(weights: &Path) -> PathBuf {
    let mut name = weights.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn save_checkpoint(agent: &DqnAgent, path: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = path.as_ref();
    let profile = agent.profile().ok_or_else(|| AgentError::Checkpoint("network matches no render profile".into()))?;
    let meta = CheckpointMeta {
        format: META_FORMAT,
        profile,
        counters: agent.counters(),
        pool_len: agent.pool().len(),
        pool_inserted: agent.pool().inserted(),
    };
    save_weights(agent.online(), path)?;
    let json = serde_json::to_string_pretty(&meta).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    std::fs::write(meta_path(path), json + "\n")?;
    Ok(meta)
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let mp = meta_path(path.as_ref());
    let text = std::fs::read_to_string(&mp).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", mp.display())))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", mp.display())))?;
    if meta.format != META_FORMAT {
        return Err(AgentError::Checkpoint(format!("sidecar format {} unsupported", meta.format)));
    }
    Ok(meta)
}

/// Loads weights into a fresh agent. The replay pool starts empty; counters
/// are restored from the sidecar. `expect` rejects a checkpoint trained for
/// another render profile.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    cfg: AgentConfig,
    seed: u64,
    expect: Option<ProfileName>,
) -> Result<(DqnAgent, CheckpointMeta)> {
    let path = path.as_ref();
    let meta = read_meta(path)?;
    if let Some(p) = expect {
        if p != meta.profile {
            return Err(AgentError::Checkpoint(format!(
                "checkpoint was trained on the {} profile, {} requested",
                meta.profile, p
            )));
        }
    }
    let mut net = QNetwork::zeros(network_spec(meta.profile))?;
    load_weights(path, &mut net)?;
    let mut agent = DqnAgent::from_network(cfg, net, seed)?;
    agent.restore_counters(meta.counters);
    Ok((agent, meta))
}
