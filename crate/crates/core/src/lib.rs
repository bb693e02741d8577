//! Complete electrode model for 2-D electrical impedance tomography.

pub mod cem;
pub mod cli;
pub mod conformal;
pub mod config;
pub mod error;
pub mod geometry;
pub mod inverse;
pub mod jacobian;
pub mod mesh;
pub mod render;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
