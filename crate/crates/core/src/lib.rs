//! Verification toolkit for Rashomon sets of sequential decision policies.
//!
//! The pipeline synthesizes an optimal policy for an explicit MDP, clones it
//! into neural policies, groups those policies by the DTMCs they induce and
//! separates behaviorally equivalent ones by their saliency rankings.

pub mod attribution;
pub mod checker;
pub mod cloning;
pub mod error;
pub mod explicit;
pub mod model;
pub mod nn;
pub mod prop;
pub mod rashomon;
pub mod taxi;
