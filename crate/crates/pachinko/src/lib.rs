//! Topic modeling with pachinko allocation.
//!
//! The core model organizes topics in a four-level hierarchy (root, super-topics,
//! sub-topics, words) and learns the number of super-topics, the number of
//! sub-topics, and their connectivity with a five-level Chinese restaurant
//! process sampler. A fixed-structure variant with collapsed Gibbs inference
//! serves as the baseline, and the crate ships synthetic grid benchmarks,
//! structure-recovery scoring, and held-out likelihood evaluation.

pub mod cli;
pub mod corpus;
pub mod crp;
pub mod eval;
pub mod exec;
pub mod npam;
pub mod pam;
pub mod seating;
pub mod synthetic;
