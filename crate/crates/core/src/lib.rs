pub mod affinity;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod minibatch;
pub mod ot;
pub mod pipeline;
pub mod registration;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use nalgebra;
