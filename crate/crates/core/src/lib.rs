pub mod baselines;
pub mod bench;
pub mod building;
pub mod chiller;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod mpc;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod textio;

pub use error::{Error, Result};
