//! Live sessions: an inhabitant sends voice commands, sees the perceived
//! state and the agent's decision, and rewards it; rewards feed on-line
//! learning.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{Message, MetricsSnapshot, PROTO};
pub use server::{router, serve};
pub use session::{Connection, Service, ServiceConfig, Session, SessionError};
