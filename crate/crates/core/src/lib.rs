//! Planar pose estimation from a rate gyro and a magnetometer array.

pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod loopclosure;
pub mod magnetostatics;
pub mod metrics;
pub mod pipeline;
pub mod residuals;
pub mod sensors;
pub mod simulate;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
