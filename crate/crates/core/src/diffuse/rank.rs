use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::descriptors::{dot, DescriptorSet, KernelParams};
use crate::diffuse::pooling::{region_weights, PoolingSpec};
use crate::diffuse::query::QueryVector;
use crate::error::{Error, Result};
use crate::graph::{normalize, truncate, NormalizedGraph, SparseAffinity};
use crate::solver::{solve, SolveOptions, SolveReport};

/// Per-point scores, pooled item scores and the induced item order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub point_scores: Vec<f64>,
    pub item_scores: BTreeMap<u32, f64>,
    /// Item ids, best first.
    pub order: Vec<u32>,
    /// Absent for rankings that involve no diffusion solve.
    pub solve_report: Option<SolveReport>,
}

impl RankingResult {
    /// Item scores aligned with `order`.
    pub fn ordered_scores(&self) -> Vec<f64> {
        self.order.iter().map(|id| self.item_scores[id]).collect()
    }
}

/// Weighted sum of region scores per item.
pub fn pool_scores(ds: &DescriptorSet, point_scores: &[f64], weights: &[f64]) -> BTreeMap<u32, f64> {
    ds.items()
        .iter()
        .map(|item| {
            let s = item.rows.iter().map(|&r| weights[r] * point_scores[r]).sum();
            (item.id, s)
        })
        .collect()
}

/// Sorts items by descending signed score with ties to the lower id. Items
/// whose regions all scored exactly zero go last, by id.
pub fn order_items(ds: &DescriptorSet, point_scores: &[f64], item_scores: &BTreeMap<u32, f64>) -> Vec<u32> {
    let mut scored = Vec::new();
    let mut silent = Vec::new();
    for item in ds.items() {
        if item.rows.iter().all(|&r| point_scores[r] == 0.0) {
            silent.push(item.id);
        } else {
            scored.push((item.id, item_scores[&item.id]));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(id, _)| id).chain(silent).collect()
}

/// Diffuses `y` over `g` and pools region scores into item scores.
pub fn rank(
    g: &NormalizedGraph,
    ds: &DescriptorSet,
    y: &QueryVector,
    pooling: &PoolingSpec,
    opts: &SolveOptions,
) -> Result<RankingResult> {
    let weights = region_weights(ds, pooling)?;
    rank_with_weights(g, ds, y, &weights, opts)
}

/// As [`rank`] with precomputed per-row pooling weights.
pub fn rank_with_weights(
    g: &NormalizedGraph,
    ds: &DescriptorSet,
    y: &QueryVector,
    weights: &[f64],
    opts: &SolveOptions,
) -> Result<RankingResult> {
    if g.n() != ds.len() || y.n() != ds.len() || weights.len() != ds.len() {
        return Err(Error::input(format!(
            "size mismatch: graph {}, descriptors {}, query vector {}, weights {}",
            g.n(),
            ds.len(),
            y.n(),
            weights.len()
        )));
    }
    let report = solve(g, &y.to_dense(), opts)?;
    let point_scores = report.solution.clone();
    let item_scores = pool_scores(ds, &point_scores, weights);
    let order = order_items(ds, &point_scores, &item_scores);
    Ok(RankingResult { point_scores, item_scores, order, solve_report: Some(report) })
}

/// Diffusion restricted to the regions of the first `shortlist_size` items of
/// `initial_order`. The induced affinity sub-matrix is re-normalized; items
/// outside the shortlist follow in their initial order with score zero.
#[allow(clippy::too_many_arguments)]
pub fn rerank_truncated(
    g_full: &SparseAffinity,
    ds: &DescriptorSet,
    initial_order: &[u32],
    shortlist_size: usize,
    y: &QueryVector,
    weights: &[f64],
    alpha: f64,
    opts: &SolveOptions,
) -> Result<RankingResult> {
    if g_full.n() != ds.len() {
        return Err(Error::input("affinity and descriptor sizes differ"));
    }
    if shortlist_size == 0 {
        return Err(Error::input("shortlist size must be positive"));
    }
    let mut seen: Vec<u32> = initial_order.to_vec();
    seen.sort_unstable();
    seen.dedup();
    let all: Vec<u32> = ds.items().iter().map(|it| it.id).collect();
    if seen != all || initial_order.len() != all.len() {
        return Err(Error::input("initial order must list every item exactly once"));
    }
    if shortlist_size >= all.len() {
        let g = normalize(g_full, alpha)?;
        return rank_with_weights(&g, ds, y, weights, opts);
    }

    let shortlist = &initial_order[..shortlist_size];
    let mut keep = Vec::new();
    for &id in shortlist {
        keep.extend_from_slice(&ds.item(id).expect("validated id").rows);
    }
    let sub = truncate(g_full, &keep)?;
    let g = normalize(&sub.affinity, alpha)?;
    let y_sub = y.restrict(&sub.original);
    let report = solve(&g, &y_sub.to_dense(), opts)?;

    let mut point_scores = vec![0.0; ds.len()];
    for (i, &orig) in sub.original.iter().enumerate() {
        point_scores[orig] = report.solution[i];
    }
    let mut pooled: Vec<(u32, f64, bool)> = shortlist
        .iter()
        .map(|&id| {
            let rows = &ds.item(id).expect("validated id").rows;
            let s = rows.iter().map(|&r| weights[r] * point_scores[r]).sum();
            (id, s, rows.iter().all(|&r| point_scores[r] == 0.0))
        })
        .collect();
    pooled.sort_by(|a, b| match (a.2, b.2) {
        (false, true) => Ordering::Less,
        (true, false) => Ordering::Greater,
        (true, true) => a.0.cmp(&b.0),
        (false, false) => b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)),
    });

    let mut item_scores: BTreeMap<u32, f64> = all.iter().map(|&id| (id, 0.0)).collect();
    for &(id, s, _) in &pooled {
        item_scores.insert(id, s);
    }
    let order = pooled
        .iter()
        .map(|p| p.0)
        .chain(initial_order[shortlist_size..].iter().copied())
        .collect();
    Ok(RankingResult { point_scores, item_scores, order, solve_report: Some(report) })
}

/// Items ranked by kernel similarity of their single descriptor to `query`.
pub fn knn_ranking(ds: &DescriptorSet, query: &[f64], params: KernelParams) -> Result<RankingResult> {
    if ds.items().len() != ds.len() {
        return Err(Error::input("kNN ranking needs one descriptor per item"));
    }
    if query.len() != ds.dim() {
        return Err(Error::input("query dimension does not match the dataset"));
    }
    let point_scores: Vec<f64> = ds.rows().map(|x| params.apply(dot(x, query))).collect();
    let item_scores: BTreeMap<u32, f64> = (0..ds.len()).map(|r| (ds.item_of(r), point_scores[r])).collect();
    let mut order: Vec<(u32, f64)> = item_scores.iter().map(|(&id, &s)| (id, s)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RankingResult {
        point_scores,
        item_scores,
        order: order.into_iter().map(|p| p.0).collect(),
        solve_report: None,
    })
}
