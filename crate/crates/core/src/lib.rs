//! Kinematics toolkit for markerless motion capture: skeletal models with
//! forward kinematics and analytic Jacobians, two-view geometry, scale and
//! inverse-kinematics fitting, biomechanics-aware losses with gradients,
//! evaluation metrics and a synthetic clip generator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod io;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod synthgen;
pub mod tracks;
pub mod viewgeom;

pub use error::{Error, Result};
