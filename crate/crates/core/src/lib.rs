//! Kinematics of a 6R robot extended by a virtual prismatic joint, and
//! optimal placement of a grid of workpieces inside its workspace.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod ik;
pub mod placement;
pub mod robot;
pub mod scene;
pub mod solver;
pub mod virtual_ik;

pub use error::{Error, Result};
