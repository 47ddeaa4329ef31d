//! Bursty gene-expression models with feedback: stationary densities, a
//! well-balanced finite-volume solver for the one- and multi-gene
//! integro-differential equations, relative entropy diagnostics and an
//! exact stochastic simulator.

// NaN must fail validation, so `!(x > 0.0)` is preferred over `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod commands;
pub mod config;
pub mod discrete;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod invariants;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod solver1d;
pub mod solvernd;
pub mod ssa;
pub mod stationary;

pub use error::{Error, Result};
