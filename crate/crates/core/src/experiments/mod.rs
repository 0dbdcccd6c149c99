//! Experiment configuration and drivers.

pub mod config;
pub mod reference;
pub mod run;
pub mod sweep;
pub mod verify;
