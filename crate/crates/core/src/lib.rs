//! Encoded-aperture ISAR imaging simulator.
//!
//! Space-object scenes are measured through random spot-beam apertures and
//! recovered with L1, TV, SL0 or SBL sparse recovery.

pub mod encoding;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod signal_model;
pub mod solvers;

pub use error::{Error, Result};
pub use image::Image;
