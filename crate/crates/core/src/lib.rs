//! Constraint-based traffic scenario orchestration.
//!
//! Scenario programs declare actor routes, piecewise motion-profile skeletons and
//! relational constraints. The engine lowers them onto symbolic profile
//! expressions, solves for the free variables with an SMT solver, and executes
//! the result open-loop or closed-loop against an uncontrolled ego policy.

pub mod dsl;
pub mod eval;
pub mod expr;
pub mod lane_map;
pub mod motion;
pub mod orchestrator;
pub mod scenario;
pub mod solver;
