//! Library surface of the experiment runner, shared by the binary, the
//! integration tests and the benchmarks.

pub mod config;
pub mod criteria;
pub mod experiments;
pub mod runner;
pub mod validate;
