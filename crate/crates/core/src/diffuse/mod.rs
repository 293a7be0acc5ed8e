//! Query vectors, diffusion ranking, pooling and re-ranking.

mod aqe;
mod pooling;
mod query;
mod rank;

pub use aqe::{aqe_baseline, expanded_query};
pub use pooling::{gmp_weights, region_weights, PoolingMode, PoolingSpec};
pub use query::{build_query_vector, QueryVector};
pub use rank::{knn_ranking, order_items, pool_scores, rank, rank_with_weights, rerank_truncated, RankingResult};
