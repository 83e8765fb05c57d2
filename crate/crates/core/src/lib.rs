//! Bilinear (w') discretization of continuous-time linear parameter-varying
//! state-space models, evaluated with the original continuous-time matrices.

pub mod analyze;
pub mod cli;
pub mod discretize;
pub mod error;
pub mod model;
pub mod simulate;

pub use error::{Error, Result};
