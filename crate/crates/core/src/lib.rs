//! Adaptive bubble-enriched Morley finite elements for distributed optimal
//! control with integral state constraints and integral or pointwise control
//! constraints.

pub mod adaptive;
pub mod assembly;
pub mod cli;
pub mod element;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod problems;
pub mod vi_solver;

pub use error::{Error, Result};
