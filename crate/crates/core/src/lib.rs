pub mod config;
pub mod crone;
pub mod elements;
pub mod error;
pub mod hosidf;
pub mod linalg;
pub mod sim;
pub mod lti;
pub mod stability;
pub mod study;
pub mod tuner;

pub use error::{Error, Result};
pub use lti::{Factor, RationalFilter, StateSpaceSystem};
