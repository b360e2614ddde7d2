//! Sampling, simulation and analysis harness for parallel scaling of
//! LLM-generated Verilog.

pub mod config;
pub mod digest;
pub mod dispersion;
pub mod fmt;
pub mod gateway;
pub mod metrics;
pub mod orchestrator;
pub mod sim;
pub mod suite;
pub mod sweep;
pub mod types;
