//! Simulation and verification workbench for an in-domain actuated
//! vibrating string under energy-Casimir control with an observer in the loop.

pub mod audit;
pub mod config;
pub mod control;
pub mod engine;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod io;
pub mod model;
pub mod observer;
pub mod precise;

pub use error::{Error, Result};
pub use grid::{Bc, Field, Grid};
