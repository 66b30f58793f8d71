pub mod calibrate;
pub mod elnn;
pub mod error;
pub mod io;
pub mod levy_models;
pub mod market;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
