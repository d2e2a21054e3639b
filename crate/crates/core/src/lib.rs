//! Simulation core for a forestry crane loading logs with a grapple.

pub mod camera;
pub mod codec;
pub mod crane;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ik;
pub mod logs;
pub mod protocol;
pub mod records;
pub mod scene;
pub mod server;
pub mod terrain;

pub use error::{Result, SimError};
