pub mod branching;
pub mod learning;
pub mod nn;
pub mod replay;
pub mod envs;
pub mod agents;
pub mod harness;
