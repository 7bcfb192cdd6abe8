//! Network services: the key server, the blob file server, the localhost
//! agent, and blocking clients for the first two.

pub mod agent;
pub mod client;
pub mod error;
pub mod fileserver;
pub mod keyserver;
pub mod serve;

pub use agent::{Agent, AgentConfig};
pub use client::{FileServerClient, KeyServerClient};
pub use error::{ApiError, ErrorBody};
pub use fileserver::{FileServer, FileServerConfig};
pub use keyserver::{KeyServer, KeyServerConfig};
pub use serve::BackgroundServer;
