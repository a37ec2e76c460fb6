pub mod acord_trainer;
pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod discriminator;
pub mod envs;
pub mod error;
pub mod funcapprox;
pub mod kspace;
pub mod metrics;
pub mod sac;
pub mod session;

pub use error::{Error, Result};
