pub mod boxes;
pub mod error;
pub mod gw;
pub mod halfline;
pub mod ipc;
pub mod pointset;
pub mod rng;
pub mod samplers;
pub mod stationary;
pub mod statkit;
pub mod tree;

pub use error::{Error, Result};
