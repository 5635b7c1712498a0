pub mod ising;
pub mod rng;
pub mod topology;
pub mod generators;
pub mod solvers;
pub mod metrics;
pub mod par;
pub mod harness;
