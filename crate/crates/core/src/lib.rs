//! Numerical laboratory for extension theory of second-order elliptic
//! boundary problems on rough strip domains.

pub mod blocktri;
pub mod dirichlet;
pub mod dtn;
pub mod elliptic;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod grid;
pub mod handle;
pub mod linalg;
pub mod psdo;

pub use error::{Error, Result};
pub use grid::{Component, DyadicPartition, FourierMultiplier, GridSpec, Location, SpectralField};
pub use linalg::{CMat, CVec, C64};
