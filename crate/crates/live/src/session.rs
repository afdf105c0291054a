//! Sessions and the per-connection message handler, independent of the
//! transport.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use homedqn_core::agent::{argmax, load_checkpoint, network_spec, transition, AgentConfig, DqnAgent};
use homedqn_core::home::{action_by_index, EnvState, Object, Verb, VoiceCommand};
use homedqn_core::render::{ProfileName, Renderer, SensorMask, StateImage};
use homedqn_core::world::{GeneratorConfig, SyntheticWorld};

use crate::protocol::{Message, MetricsSnapshot, PROTO};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("reward required: the previous decision has not been rewarded")]
    RewardRequired,
    #[error("no decision is awaiting a reward")]
    NothingPending,
    #[error("reward must be +1 or -1, got {0}")]
    RewardValue(i32),
    #[error("protocol version {0} is not supported (expected {PROTO})")]
    Proto(u32),
    #[error("send hello first")]
    NoSession,
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown render profile `{0}`")]
    Profile(String),
    #[error("checkpoint `{0}` is not a plain file name")]
    CheckpointName(String),
    #[error("no checkpoint directory is configured")]
    NoCheckpointDir,
    #[error("unexpected `{0}` message")]
    Unexpected(&'static str),
    #[error("sensor override: {0}")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Agent(#[from] homedqn_core::agent::AgentError),
    #[error(transparent)]
    Render(#[from] homedqn_core::render::RenderError),
}

struct Pending {
    image: Arc<StateImage>,
    action: usize,
}

/// One inhabitant's session: its own agent, world state and step counter.
pub struct Session {
    id: String,
    agent: DqnAgent,
    renderer: Arc<Renderer>,
    /// Sensor readings between commands; the command slot stays empty.
    base: EnvState,
    step: u64,
    pending: Option<Pending>,
    positive: u64,
    negative: u64,
}

impl Session {
    pub fn new(id: String, agent: DqnAgent, profile: ProfileName, seed: u64) -> Result<Self, SessionError> {
        let world = SyntheticWorld::reference(GeneratorConfig { seed, ..GeneratorConfig::default() })
            .map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base = world.sample(0, &mut rng).state;
        base.command = VoiceCommand::NONE;
        Ok(Session {
            id,
            agent,
            renderer: Renderer::reference(profile),
            base,
            step: 0,
            pending: None,
            positive: 0,
            negative: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn agent(&self) -> &DqnAgent {
        &self.agent
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    fn render(&self, command: VoiceCommand) -> Result<StateImage, SessionError> {
        let mut s = self.base.clone();
        s.command = command;
        Ok(self.renderer.render(&s, &SensorMask::none())?)
    }

    fn state_message(&self, img: &StateImage) -> Message {
        Message::State {
            proto: PROTO,
            step: self.step,
            side: img.side,
            image: base64::engine::general_purpose::STANDARD.encode(img.to_pgm()),
        }
    }

    pub fn current_state(&self) -> Result<Message, SessionError> {
        Ok(self.state_message(&self.render(VoiceCommand::NONE)?))
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            steps: self.step,
            rewards_positive: self.positive,
            rewards_negative: self.negative,
            learn_calls: self.agent.counters().learn_calls,
            pool_size: self.agent.pool().len(),
        }
    }

    /// Applies `overrides`, renders the commanded state and holds the greedy
    /// decision until it is rewarded. Returns the state and the decision.
    pub fn command(
        &mut self,
        verb: &str,
        object: &str,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<[Message; 2], SessionError> {
        if self.pending.is_some() {
            return Err(SessionError::RewardRequired);
        }
        let verb = Verb::parse(verb).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let object = Object::parse(object).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let manifest = self.renderer.manifest().clone();
        for (id, &v) in overrides {
            let spec = manifest.get(id).ok_or_else(|| SessionError::Override(format!("unknown sensor `{id}`")))?;
            if !spec.accepts(v) {
                return Err(SessionError::Override(format!("{v} is outside the domain of `{id}`")));
            }
        }
        for (id, &v) in overrides {
            self.base.readings.insert(id.clone(), v);
        }
        let img = Arc::new(self.render(VoiceCommand::new(verb, object))?);
        let q = self.agent.q_values(&img)?;
        let action = argmax(&q);
        self.step += 1;
        let state = self.state_message(&img);
        let label = action_by_index(action).map(|a| a.to_string()).unwrap_or_default();
        self.pending = Some(Pending { image: img, action });
        Ok([state, Message::Decision { proto: PROTO, step: self.step, action_index: action, label, q_values: q }])
    }

    /// Stores the rewarded transition (the next state is the same home with
    /// the command gone) and lets the agent learn on its cadence.
    pub fn reward(&mut self, value: i32) -> Result<Message, SessionError> {
        if value != 1 && value != -1 {
            return Err(SessionError::RewardValue(value));
        }
        let pending = self.pending.take().ok_or(SessionError::NothingPending)?;
        let next = Arc::new(self.render(VoiceCommand::NONE)?);
        let outcome = self.agent.observe(transition(&pending.image, pending.action, value, &next))?;
        if value > 0 {
            self.positive += 1;
        } else {
            self.negative += 1;
        }
        Ok(Message::Ack { proto: PROTO, step: self.step, learned: outcome.learned.is_some(), metrics: self.metrics() })
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory that `hello.checkpoint` names are resolved in.
    pub checkpoint_dir: Option<PathBuf>,
    pub agent: AgentConfig,
    pub profile: ProfileName,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { checkpoint_dir: None, agent: AgentConfig::default(), profile: ProfileName::Desk }
    }
}

/// All live sessions. Sessions outlive connections so a client can resume.
pub struct Service {
    cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    created: Mutex<u64>,
}

impl Service {
    pub fn new(cfg: ServiceConfig) -> Self {
        Service { cfg, sessions: Mutex::new(HashMap::new()), created: Mutex::new(0) }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    fn checkpoint_path(&self, name: &str) -> Result<PathBuf, SessionError> {
        let dir = self.cfg.checkpoint_dir.as_ref().ok_or(SessionError::NoCheckpointDir)?;
        let plain = Path::new(name).file_name().is_some_and(|f| f == name) && name != "..";
        if !plain {
            return Err(SessionError::CheckpointName(name.to_string()));
        }
        Ok(dir.join(name))
    }

    /// Creates a session; nothing is registered if the agent cannot be built.
    pub fn start_session(
        &self,
        profile: Option<&str>,
        checkpoint: Option<&str>,
        seed: u64,
    ) -> Result<Arc<Mutex<Session>>, SessionError> {
        let profile = match profile {
            Some(p) => ProfileName::parse(p).ok_or_else(|| SessionError::Profile(p.to_string()))?,
            None => self.cfg.profile,
        };
        let agent = match checkpoint {
            Some(name) => load_checkpoint(self.checkpoint_path(name)?, self.cfg.agent, seed, Some(profile))?.0,
            None => DqnAgent::new(self.cfg.agent, network_spec(profile), seed)?,
        };
        let id = {
            let mut n = self.created.lock().expect("session counter");
            *n += 1;
            format!("s{:04}-{seed:x}", *n)
        };
        let session = Arc::new(Mutex::new(Session::new(id.clone(), agent, profile, seed)?));
        self.sessions.lock().expect("session map").insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }
}

/// One client connection, attached to at most one session at a time.
pub struct Connection {
    service: Arc<Service>,
    session: Option<Arc<Mutex<Session>>>,
}

impl Connection {
    pub fn new(service: Arc<Service>) -> Self {
        Connection { service, session: None }
    }

    /// Handles one frame. Failures become `error` messages; the session is
    /// left as it was.
    pub fn handle_text(&mut self, text: &str) -> Vec<Message> {
        match serde_json::from_str::<Message>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![Message::error(format!("malformed message: {e}"))],
        }
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Message> {
        self.dispatch(msg).unwrap_or_else(|e| vec![Message::error(e.to_string())])
    }

    fn dispatch(&mut self, msg: Message) -> Result<Vec<Message>, SessionError> {
        if msg.proto() != PROTO {
            return Err(SessionError::Proto(msg.proto()));
        }
        match msg {
            Message::Hello { session: Some(id), .. } => {
                let s = self.service.session(&id).ok_or_else(|| SessionError::UnknownSession(id.clone()))?;
                self.session = Some(s.clone());
                let s = s.lock().expect("session");
                Ok(vec![hello(&s), s.current_state()?])
            }
            Message::Hello { session: None, profile, checkpoint, seed, .. } => {
                let s = self.service.start_session(profile.as_deref(), checkpoint.as_deref(), seed.unwrap_or(0))?;
                self.session = Some(s.clone());
                let s = s.lock().expect("session");
                Ok(vec![hello(&s), s.current_state()?])
            }
            Message::Command { verb, object, overrides, .. } => {
                let s = self.session.as_ref().ok_or(SessionError::NoSession)?;
                Ok(s.lock().expect("session").command(&verb, &object, &overrides)?.to_vec())
            }
            Message::Reward { value, .. } => {
                let s = self.session.as_ref().ok_or(SessionError::NoSession)?;
                Ok(vec![s.lock().expect("session").reward(value)?])
            }
            Message::Metrics { metrics: None, .. } => {
                let s = self.session.as_ref().ok_or(SessionError::NoSession)?;
                Ok(vec![Message::Metrics { proto: PROTO, metrics: Some(s.lock().expect("session").metrics()) }])
            }
            Message::Metrics { .. } => Err(SessionError::Unexpected("metrics")),
            Message::State { .. } => Err(SessionError::Unexpected("state")),
            Message::Decision { .. } => Err(SessionError::Unexpected("decision")),
            Message::Ack { .. } => Err(SessionError::Unexpected("ack")),
            Message::Error { .. } => Err(SessionError::Unexpected("error")),
        }
    }
}

fn hello(s: &Session) -> Message {
    Message::Hello {
        proto: PROTO,
        session: Some(s.id().to_string()),
        profile: s.agent().profile().map(|p| p.token().to_string()),
        checkpoint: None,
        seed: None,
    }
}
