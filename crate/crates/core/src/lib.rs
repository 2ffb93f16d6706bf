//! Graph-geometry toolkit for joint Euclidean/hyperbolic graph learning.
//!
//! The crate has two halves. The geometric half measures how tree-like each
//! node's neighborhood is:
//!
//! - [`graph`]: weighted graphs, shortest-path metrics, k-hop subgraphs,
//!   synthetic generators and data splits.
//! - [`hyperbolicity`]: Gromov four-point hyperbolicity (worst-case and
//!   average), per-node local profiles and their empirical distributions.
//!
//! The learning half trains a two-branch graph attention network whose
//! per-node space-selection weights are aligned to that profile:
//!
//! - [`poincare`]: Poincaré ball kernel on plain vectors.
//! - [`autodiff`]: a small reverse-mode tape over dense matrices.
//! - [`layers`]: Euclidean GAT, hyperbolic GAT and the space-selection fusion.
//! - [`objectives`]: Wasserstein alignment, non-uniformity and task losses.
//! - [`train`]: configuration, training loop, metrics, grids and diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod hyperbolicity;
pub mod layers;
pub mod objectives;
pub mod poincare;
pub mod train;

pub use error::{Error, Result};
