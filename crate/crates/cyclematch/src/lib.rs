//! Unsupervised graph matching at desk scale: pluggable LAP/QAP solvers in
//! integer-linear form, black-box differentiation through them, a discrete
//! cycle-consistency loss over matching triples, and a lightweight
//! differentiable cost head trained against synthetic ground truth.
//!
//! The crate is organized along the pipeline:
//!
//! - [`instance`]: matching problems, matchings, lifted solutions.
//! - [`solver`]: Hungarian LAP, exact branch-and-bound QAP, local search.
//! - [`blackbox`]: cost perturbation and piecewise-linear solver gradients.
//! - [`cycle`]: the cycle-consistency loss, its gradient, and verification.
//! - [`cost`]: feature projections, cost construction, backward pass, Adam.
//! - [`data`]: synthetic datasets, Delaunay edges, metrics, serialization.
//! - [`train`]: the batched training loop and evaluation.

pub mod blackbox;
pub mod config;
pub mod cost;
pub mod cycle;
pub mod data;
pub mod error;
pub mod fileio;
pub mod hexfloat;
pub mod instance;
pub mod solver;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
