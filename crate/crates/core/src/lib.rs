//! Diffusion ranking over sparse mutual-kNN region graphs.
//!
//! The pipeline: load unit-norm region descriptors, build a mutual-kNN
//! affinity graph (exactly or with NN-descent), normalize it, then for every
//! query build a sparse similarity vector from the query regions' nearest
//! neighbors and solve `(I - αS) f = (1 - α) y` by conjugate gradient.
//! Region scores are pooled into item scores with sum or generalized max
//! pooling. Large collections can be compacted per item with a Gaussian
//! mixture or re-ranked on a truncated shortlist.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod compact;
pub mod descriptors;
pub mod diffuse;
pub mod error;
pub mod eval;
pub mod graph;
pub mod solver;

pub use descriptors::{kernel_similarity, DescriptorSet, KernelParams};
pub use error::{Error, Result};
