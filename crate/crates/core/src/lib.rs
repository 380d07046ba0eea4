//! Square root normal fields of sampled surfaces.
//!
//! The crate samples immersed surfaces on patch grids, computes their square
//! root normal field `q = sqrt(a) n`, and measures the L² distance between such
//! fields. It also builds pairs of non-congruent surfaces whose fields agree
//! (cylinders, paraboloids, closed surfaces with a flat place, a flip), the
//! area-preserving rearrangement of discs that the closed examples need, and
//! curvature harnesses for the cases where the field does determine the shape.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod counterexamples;
pub mod curvature;
pub mod error;
pub mod geom;
pub mod io;
pub mod metric;
pub mod moser;
pub mod shapes;
pub mod verify;

pub use error::{Error, Result};
pub use geom::{
    area_factor, srnf, unit_normal, Orientation, ParamPatch, Patch, RigidMotion, SrnfField,
    SurfaceImmersion, Vec3,
};
pub use metric::{l2_inner, l2_norm, srnf_distance};
