pub mod conformal;
pub mod config;
pub mod error;
pub mod eval;
pub mod filter;
pub mod grid;
pub mod hj_rl;
pub mod latent;
pub mod nn;
pub mod pipeline;
pub mod sim;
pub mod teleop;

pub use error::{Error, Result};
