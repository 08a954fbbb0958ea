//! Counterfactual explanations for trained predictive models, computed by
//! embedding the model into a mixed-integer linear program and solving it
//! with a built-in simplex and branch-and-bound solver.

pub mod data;
pub mod learners;
pub mod milp;
pub mod solver;
pub mod embed;
pub mod builder;
pub mod evaluate;
pub mod demo;

/// Engine version reported by the CLI and the HTTP service.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
