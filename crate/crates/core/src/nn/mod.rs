//! Dense-network substrate: fully connected layers, ReLU, GDN/IGDN,
//! residual blocks, reverse-mode gradients and Adam.
//!
//! Everything runs in f64 on single vectors; a batch is a loop.

pub mod adam;
pub mod dense;
pub mod gdn;
pub mod gradcheck;
pub mod network;
pub(crate) mod serial;

pub use adam::{AdamConfig, AdamState};
pub use dense::Dense;
pub use gdn::Gdn;
pub use network::{Layer, Network, Residual, Trace};
