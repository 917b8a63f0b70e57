//! Multimodal routing simulator in which a system operator designs private
//! congestion signals for individual travelers.
//!
//! Travelers move over a layered network (one layer per transport mode,
//! connected by switch edges) and pick full paths by logit response to their
//! perceived costs. The operator cannot dictate routes; it can only shape
//! each traveler's belief about edge occupancies through a per-edge
//! signaling matrix, chosen to minimize an expected system cost. The crate
//! also ships a shortest-path baseline policy and benchmark harnesses that
//! compare the two on identical demand.

pub mod config;
pub mod cost;
pub mod error;
pub mod graph;
pub mod harness;
pub mod optimizer;
pub mod qre;
pub mod signal;
pub mod sim;
pub mod sssp;
pub mod state;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
