//! Deep Q-learning for integrating compressed contexts into a knowledge
//! graph.
//!
//! The graph is the environment: each state encodes the current graph and a
//! pending context (a small set of candidate triples derived from a held-out
//! fact), each action inserts one candidate or rejects the context, and the
//! reward scores the decision against the held-out truth. A DQN learns the
//! integration policy; a rule-based and a supervised baseline are provided
//! for comparison, together with an evaluation harness.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI uses.

pub mod agent;
pub mod baselines;
pub mod cli;
pub mod context;
pub mod encoder;
pub mod env;
pub mod error;
pub mod eval;
pub mod kg;
pub mod qnet;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type QNetworkF64 = qnet::QNetwork<f64>;
pub type QNetworkF32 = qnet::QNetwork<f32>;
pub type TargetParamsF64 = qnet::TargetParams<f64>;
pub type GradientSetF64 = qnet::GradientSet<f64>;
pub type StateVectorF64 = encoder::StateVector<f64>;
pub type TransitionF64 = env::Transition<f64>;
pub type ExperienceF64 = agent::Experience<f64>;
pub type ReplayBufferF64 = agent::ReplayBuffer<f64>;
pub type TrainingLogF64 = agent::TrainingLog<f64>;
pub type TabularQF64<S> = agent::TabularQ<S, f64>;
pub type LinearModelF64 = baselines::LinearModel<f64>;
