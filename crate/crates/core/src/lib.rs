//! Smart-home decision agent: the home vocabulary, the state renderer, a
//! synthetic world, corpus ingestion, deep and tabular Q-learners and the
//! experiment harness.

pub mod agent;
pub mod corpus;
pub mod harness;
pub mod home;
pub mod render;
pub mod tabular;
pub mod world;
