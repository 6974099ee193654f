//! Construction and verification of multi-bubble concentration profiles for
//! a coupled critical elliptic system on a strip that is periodic in its
//! first coordinates.
//!
//! The crate is organized bottom-up:
//! special functions and quadrature, the concentrating profile and its
//! synchronized two-component version, periodic Green's function sums with
//! certified truncation tails, the projected ansatz and its error field,
//! weighted norms, and finally the finite-dimensional reduced system whose
//! root picks the concentration scale.

pub mod ansatz;
pub mod bubble;
pub mod cli;
pub mod config;
pub mod error;
pub mod lattice;
pub mod mc;
pub mod moments;
pub mod norm;
pub mod profile;
pub mod quad;
pub mod reduction;
pub mod report;
pub mod special;

pub use error::{Error, Result};
