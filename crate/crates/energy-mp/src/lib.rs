//! Almost-sure Energy-MeanPayoff analysis for finite MDPs.

pub mod analysis;
pub mod benchgen;
pub mod chain;
pub mod cli;
pub mod decision;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod product;
pub mod rational;
pub mod simulator;
pub mod strategy;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{Mdp, Owner};
pub use rational::Rational;
pub use strategy::FiniteMemoryStrategy;
