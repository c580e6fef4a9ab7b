//! Plan-and-execute orchestration for agents that work across web
//! applications and APIs.

pub mod api_agent;
pub mod browser;
pub mod context;
pub mod fixtures;
pub mod orchestrator;
pub mod plan;
pub mod program;
pub mod reasoner;
pub mod session;
pub mod registry;
pub mod trajectory;
pub mod value;
pub mod variables;
