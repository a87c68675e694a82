//! Heteroclinic connections between wells of a nonnegative potential `W` on R^n.
//!
//! The action `int (|gamma'|^2 / 2 + W(gamma)) dt` is bounded below by the weighted length
//! `int K(gamma) |gamma'|` with `K = sqrt(2W)`, with equality for equipartitioned curves. The
//! pipeline therefore computes a weighted geodesic between two wells (grid shortest path,
//! then local refinement) and reparametrizes it in time so that `|gamma'| = K(gamma)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod error;
pub mod expr;
pub mod geodesic;
pub mod metric;
pub mod pipeline;
pub mod potential;
pub mod problem;
pub mod reparam;
pub mod sti;

pub use curve::Curve;
pub use error::{Error, Result};
pub use metric::{curve_length_k, dk_bounds, DkEstimate, GridGraph, Sampler};
pub use potential::{CheckedWell, ConfinementBound, PotentialSpec};
