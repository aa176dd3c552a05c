//! Linguistic OWA pooling for convolutional networks, with the data
//! preparation, training and evaluation pipeline used for sliding-window
//! fault diagnosis of multivariate plant monitoring data.

pub mod dataprep;
pub mod error;
pub mod harness;
pub mod layouts;
pub mod nn;
pub mod quantifiers;
pub mod synthplant;

pub use error::{Error, Result};
