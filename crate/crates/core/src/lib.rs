//! Simulation and verification toolkit for double skew products
//! `T(ω,ξ,y) = (θω, g_ω(ξ), h_{ω,ξ}(y))`: random bases, circle drivings,
//! fibre cocycles, pullback attractors and semiuniform bounds.

pub mod attractor;
pub mod base;
pub mod driving;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod par;
pub mod rng;
pub mod semiuniform;
pub mod skew;

pub use error::{Error, Result};
