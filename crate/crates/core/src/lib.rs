//! Numerical laboratory for the Stokes-transport system on the periodic
//! channel `T × (0, 1)`.

pub mod analysis;
pub mod blprofiles;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod rearrange;
pub mod scenario;
pub mod stokes;

pub use error::{Error, Result};
