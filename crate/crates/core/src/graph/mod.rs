//! Graph construction: kNN lists, mutual affinity, normalization, truncation.

mod affinity;
mod csr;
mod knn;
mod normalize;

pub use affinity::{build_affinity, truncate, SparseAffinity, Truncated};
pub use csr::CsrMatrix;
pub use knn::{
    exact_knn, neighbor_order, nn_descent_knn, nn_descent_knn_with_stats, KnnLists, Neighbor,
    NnDescentParams, NnDescentStats,
};
pub(crate) use knn::top_k_for;
pub use normalize::{check_alpha, normalize, NormalizedGraph};
