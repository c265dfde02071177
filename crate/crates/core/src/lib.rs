//! Uplink link-level simulator comparing a dynamic metasurface antenna receiver
//! against partially-connected hybrid and fully digital arrays.

pub mod channel;
pub mod channel_file;
pub mod config;
pub mod dma;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod power;
pub mod rival;
pub mod summary;

pub use error::{Error, Result};
