//! Phase configuration: TOML with dotted `key=value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use super::HarnessError;
use crate::agent::AgentConfig;
use crate::render::ProfileName;
use crate::world::{GeneratorConfig, RewardConfig, DEFAULT_TRIES_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adapt,
}

impl Phase {
    pub fn token(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Adapt => "adapt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub data: DataSource,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_steps: u64,
    pub render: ProfileName,
    /// Sensor ids plus `@command`, `@presence`, `@presence:<room>`.
    #[serde(deserialize_with = "list_or_csv")]
    pub mask: Vec<String>,
    pub seed: u64,
    /// Zeroes wall-clock columns so repeated runs write identical files.
    pub deterministic: bool,
    pub tries_threshold: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub agent: AgentConfig,
    pub reward: RewardConfig,
    pub generator: GeneratorConfig,
}

fn list_or_csv<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        List(Vec<String>),
        Csv(String),
    }
    Ok(match Either::deserialize(d)? {
        Either::List(v) => v,
        Either::Csv(s) => s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect(),
    })
}

impl PhaseConfig {
    /// Defaults for a phase. Adaptation starts from a trained agent, so its
    /// exploration rate is held at the annealed floor.
    pub fn defaults(phase: Phase) -> Self {
        let mut agent = AgentConfig::default();
        let (total_steps, eval_every, eval_steps, data) = match phase {
            Phase::Pretrain => (200_000, 20_000, 2_000, DataSource::Synthetic),
            Phase::Adapt => (40_000, 4_000, 2_000, DataSource::Corpus),
        };
        if phase == Phase::Adapt {
            agent.epsilon_start = agent.epsilon_end;
        }
        PhaseConfig {
            phase,
            data,
            total_steps,
            eval_every,
            eval_steps,
            render: ProfileName::Desk,
            mask: Vec::new(),
            seed: 1,
            deterministic: true,
            tries_threshold: DEFAULT_TRIES_THRESHOLD,
            corpus: None,
            checkpoint: None,
            agent,
            reward: RewardConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }

    /// Layers `file` (TOML text, may be empty) and `overrides` (`key=value`,
    /// dotted keys for nested tables) over the phase defaults.
    pub fn load(phase: Phase, file: Option<&str>, overrides: &[String]) -> Result<Self, HarnessError> {
        let base = toml::Table::try_from(Self::defaults(phase)).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut table = base;
        if let Some(text) = file {
            let file: toml::Table = text.parse().map_err(|e| HarnessError::Config(format!("config file: {e}")))?;
            merge(&mut table, file);
        }
        for ov in overrides {
            let (key, value) = ov
                .trim_start_matches("--")
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override `{ov}` is not key=value")))?;
            set_dotted(&mut table, key.trim(), parse_scalar(value.trim()))?;
        }
        let cfg: PhaseConfig = toml::Value::Table(table).try_into().map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.total_steps == 0 || self.eval_every == 0 || self.eval_steps == 0 {
            return bad("total_steps, eval_every and eval_steps must be at least 1".into());
        }
        if self.eval_every > self.total_steps {
            return bad(format!("eval_every {} exceeds total_steps {}", self.eval_every, self.total_steps));
        }
        if self.tries_threshold == 0 {
            return bad("tries_threshold must be at least 1".into());
        }
        if self.data == DataSource::Corpus && self.corpus.is_none() {
            return bad("data = \"corpus\" needs a corpus directory".into());
        }
        self.agent.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.reward.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.generator.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| HarnessError::Config("empty key".into()))?;
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return Err(HarnessError::Config(format!("`{p}` in `{key}` is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::RewardMode;

    #[test]
    fn defaults_validate() {
        PhaseConfig::defaults(Phase::Pretrain).validate().unwrap();
        let cfg = PhaseConfig::load(Phase::Pretrain, None, &[]).unwrap();
        assert_eq!(cfg, PhaseConfig::defaults(Phase::Pretrain));
        assert!(PhaseConfig::load(Phase::Adapt, None, &[]).is_err());
    }

    #[test]
    fn file_and_overrides() {
        let file = "total_steps = 5000\neval_every = 500\n[agent]\ngamma = 0.5\n";
        let ov = vec![
            "--agent.minibatch_size=16".to_string(),
            "reward.mode=windowed".to_string(),
            "--mask=@presence,kitchen_co2".to_string(),
            "--render=full".to_string(),
        ];
        let cfg = PhaseConfig::load(Phase::Pretrain, Some(file), &ov).unwrap();
        assert_eq!(cfg.total_steps, 5000);
        assert_eq!(cfg.agent.gamma, 0.5);
        assert_eq!(cfg.agent.minibatch_size, 16);
        assert_eq!(cfg.agent.update_freq, 12);
        assert_eq!(cfg.reward.mode, RewardMode::Windowed);
        assert_eq!(cfg.mask, vec!["@presence", "kitchen_co2"]);
        assert_eq!(cfg.render, ProfileName::Full);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PhaseConfig::load(Phase::Pretrain, None, &["eval_every=300000".into()]).is_err());
        assert!(PhaseConfig::load(Phase::Pretrain, None, &["nonsense=1".into()]).is_err());
        assert!(PhaseConfig::load(Phase::Pretrain, None, &["agent.gamma=2".into()]).is_err());
        assert!(PhaseConfig::load(Phase::Pretrain, Some("total_steps = ["), &[]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = PhaseConfig::defaults(Phase::Adapt);
        cfg.corpus = Some("fixtures".into());
        let text = cfg.to_toml();
        assert_eq!(PhaseConfig::load(Phase::Adapt, Some(&text), &[]).unwrap(), cfg);
    }
}
