//! Proxy-geometry scene tooling: layouts, rendering, trajectory planning,
//! scale alignment, point fusion and reconstruction losses.

pub mod align;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod pipeline;
pub mod plan;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
