//! Free-form pipe routing in the Frenet frame.
//!
//! A pipe axis is described by piecewise cubic Hermite curvature and torsion
//! profiles and reconstructed by integrating the Frenet–Serret equations. A
//! PPO agent chooses the profile knots one segment at a time under a staged
//! reward, and the finished profiles are mapped to die poses for a six-axis
//! free-bending machine.
//!
//! Units are millimeters, radians and 1/mm throughout.

pub mod env;
pub mod error;
pub mod frenet;
pub mod io;
pub mod machine;
pub mod metrics;
pub mod policy;
pub mod profile;
pub mod reward;
pub mod runner;
pub mod scene;

pub use error::{Error, Result};

/// 3-vector used for positions and directions.
pub type Vec3 = nalgebra::Vector3<f64>;
