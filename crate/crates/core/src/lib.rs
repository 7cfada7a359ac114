//! Decentralized expectation propagation for semi-blind channel estimation
//! in cell-free massive MIMO.
//!
//! Each access point runs EP on its own observations and exchanges symbol
//! messages with its neighbors; channel estimates never leave the AP.

pub mod config;
pub mod consensus;
pub mod ep;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use config::RunConfig;
pub use session::Session;
