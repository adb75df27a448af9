pub mod error;
pub mod exec;
pub mod laplace;
pub mod levy_models;
pub mod numerics;
pub mod quad;
pub mod rng;
pub mod mc_stats;
pub mod path_sim;
pub mod azema_yor;
pub mod penalization;
pub mod runner;
