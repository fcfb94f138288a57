//! Metastable distributions for non-linear random perturbations of
//! one-dimensional gradient-like systems.
//!
//! The pipeline runs from a [`system::SystemSpec`] (or a tabulated rate
//! model) through quasi-potentials and the hierarchy of cycles to the limit
//! profiles `c_i(lambda)` of the quasi-linear Cauchy problem, and checks
//! them against a PDE solver and a coupled SDE ensemble.

pub mod config;
pub mod curves;
pub mod error;
pub mod expr;
pub mod hierarchy;
pub mod interp;
pub mod mcurve;
pub mod pipeline;
pub mod profile;
pub mod quad;
pub mod quasipotential;
pub mod rates;
pub mod roots;
pub mod scenario;
pub mod stability;
pub mod system;
pub mod verification;

pub use error::{Error, Result};
