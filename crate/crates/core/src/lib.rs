//! Desk-scale testbed for hierarchical in-hand object reorientation.
//!
//! A planner picks one of six canonical rotation skills (or STOP) and adds a
//! small residual joint correction; scripted skills rotate the object with
//! slip and randomized physics; a recursive estimator tracks the object pose
//! from proprioception and skill feedback; a point-splat renderer produces
//! depth frames for the skill observation pipeline.

pub mod env;
pub mod estimator;
pub mod eval;
pub mod error;
pub mod nn;
pub mod planner;
pub mod render;
pub mod seeds;
pub mod so3;

pub use error::{Error, Result};
