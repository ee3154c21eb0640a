//! Program synthesis for imitating grid-world agents.
//!
//! The crate is organised around the pipeline: a typed DSL ([`dsl`]), a probabilistic
//! grammar over it ([`grammar`]), best-first enumeration ([`enumerate`]), simulated
//! environments with scripted oracles ([`envs`]), imitation datasets and the accuracy
//! metric ([`data`]), abstraction learning by compression ([`library`]), the curriculum
//! driver ([`curriculum`]) and call-graph explanations ([`explain`]).

pub mod cli;
pub mod config;
pub mod curriculum;
pub mod dsl;
pub mod enumerate;
pub mod envs;
pub mod error;
pub mod explain;
pub mod data;
pub mod grammar;
pub mod library;

pub use error::{Error, Result};
