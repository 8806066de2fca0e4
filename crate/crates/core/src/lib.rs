//! Abresch-Rosenberg Codazzi pairs on constant mean curvature surfaces in the
//! homogeneous 3-manifolds E(kappa, tau), with numerical verification of the
//! identities and estimates built on them.

pub mod ambient;
pub mod arpair;
pub mod catalog;
pub mod cli;
pub mod defaults;
pub mod error;
pub mod pinching;
pub mod simons;
pub mod spectral;
pub mod surface;

pub use error::{GeomError, Result};
