pub mod channel;
pub mod cli;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod montecarlo;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
pub mod ser;
pub mod special;

pub use error::{Error, Result};
