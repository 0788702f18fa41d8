//! Stabilizing control from a basis of pre-trained NAF Q-functions.
//!
//! Stage one trains one NAF Q-network per simulated "virtual system" (the
//! plant model at an assumed parameter vector). Stage two represents the real
//! system's Q-function as a simplex-weighted combination of those frozen
//! networks and adapts the weights online.

pub mod config;
pub mod diffnet;
pub mod ensemble;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod model_io;
pub mod naf;
pub mod noise;
pub mod plant;
pub mod replay;
pub mod stage1;

pub use error::{Error, Result};
