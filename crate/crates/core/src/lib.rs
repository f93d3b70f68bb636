//! Structure learning for tree-shaped discrete graphical models observed
//! through an unknown k-ary symmetric noise channel.
//!
//! The pipeline: build or load a [`TreeModel`], obtain pairwise joints either
//! exactly ([`oracle`]) or from samples ([`sampler`]), turn them into
//! information distances ([`metric`]), and run [`recovery::find_tree`]. The
//! [`quadtest`] module holds the per-triplet noise test that decides which
//! members of a leaf cluster can act as the parent; [`evalkit`] scores results
//! against the truth and provides the Chow-Liu baseline.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod oracle;
pub mod quadtest;
pub mod recovery;
pub mod sampler;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metric::DistanceTable;
pub use model::{AlgoParams, NoiseSpec, Tree, TreeModel};
pub use oracle::PairwisePmfSet;
pub use quadtest::{MatrixQuadratic, RootResult};
pub use recovery::{QuartetVerdict, RecoveredStructure};
pub use sampler::SampleMatrix;
