//! Primal heuristics for mixed-integer quadratically constrained quadratic
//! programs.

pub mod convexify;
pub mod corpus;
pub mod heuristics;
pub mod instance;
pub mod localbranch;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod spectral;
