//! Deterministic biomechanical kinematics at desk scale: skeleton models with
//! anatomical joint limits, forward kinematics and analytic Jacobians,
//! marker-based inverse kinematics and scale calibration, body-mesh skinning
//! with virtual markers, multi-scale deformable attention, a spatio-temporal
//! marker-to-pose network with its loss stack, 2D-informed pose refinement,
//! and the pose-estimation metric suite.
//!
//! Start with the runnable programs under `examples/`; the `biokin` binary
//! wraps the same library behind batch subcommands (`gen`, `scale`, `ik`,
//! `refine`, `eval`, `attn-demo`, `neurik-forward`).

pub mod assets;
pub mod attention;
pub mod cli;
pub mod error;
pub mod ik;
pub mod io;
pub mod kinematics;
pub mod mesh;
pub mod metrics;
pub mod neurik;
pub mod refine;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
