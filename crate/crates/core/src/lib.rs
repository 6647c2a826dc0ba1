//! Stochastic gradient descent in continuous time: simulation of the coupled
//! data/parameter system, Poisson-equation solvers for the averaged
//! quantities, Malliavin derivative propagation, and the statistics used to
//! measure convergence to the Gaussian limit.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod malliavin;
pub mod models;
pub mod parallel;
pub mod poisson;
pub mod quadrature;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
