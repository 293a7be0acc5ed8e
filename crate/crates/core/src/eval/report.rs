use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::metrics::{filtered_ranking, GroundTruth};

pub const DEFAULT_SIZE_EDGES: [f64; 6] = [0.0, 0.1, 0.2, 0.4, 0.7, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub lower: f64,
    pub upper: f64,
    pub baseline_precision: f64,
    pub improved_precision: f64,
    pub count: usize,
}

impl BucketRow {
    pub fn label(&self) -> String {
        format!("{:.2}-{:.2}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub rows: Vec<BucketRow>,
    /// Positives skipped because their size was unknown.
    pub missing_sizes: usize,
}

impl GainReport {
    /// CSV with header `bucket,baseline_precision,improved_precision,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bucket,baseline_precision,improved_precision,count")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{}",
                row.label(),
                row.baseline_precision,
                row.improved_precision,
                row.count
            )?;
        }
        Ok(())
    }
}

/// Precision at the position of every positive (0 when not retrieved),
/// ignored items removed.
fn precision_at_positives(order: &[u32], positives: &[u32], truth: &crate::eval::QueryTruth) -> Result<BTreeMap<u32, f64>> {
    let ranking = filtered_ranking(order, truth)?;
    let wanted: HashSet<u32> = positives.iter().copied().collect();
    let mut out: BTreeMap<u32, f64> = positives.iter().map(|&p| (p, 0.0)).collect();
    let mut hits = 0usize;
    for (pos, item) in ranking.iter().enumerate() {
        if wanted.contains(item) {
            hits += 1;
            out.insert(**item, hits as f64 / (pos + 1) as f64);
        }
    }
    Ok(out)
}

/// Mean precision-at-retrieval-position of positives, bucketed by relative
/// object size, for two rankings of the same queries. Bucket `i` covers
/// `(edges[i], edges[i+1]]`; the first bucket also includes its lower edge.
pub fn rank_gain_report(
    baseline: &BTreeMap<u32, Vec<u32>>,
    improved: &BTreeMap<u32, Vec<u32>>,
    gt: &GroundTruth,
    size_of: &BTreeMap<u32, f64>,
    edges: &[f64],
) -> Result<GainReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("bucket edges must be strictly increasing with at least two entries"));
    }
    if baseline.keys().ne(improved.keys()) {
        return Err(Error::input("baseline and improved rankings cover different queries"));
    }
    let buckets = edges.len() - 1;
    let mut sums = vec![(0.0, 0.0, 0usize); buckets];
    let mut missing = 0;
    for (qid, base_order) in baseline {
        let truth = gt
            .get(*qid)
            .ok_or_else(|| Error::input(format!("no ground truth for query {qid}")))?;
        let base = precision_at_positives(base_order, &truth.positives, truth)?;
        let impr = precision_at_positives(&improved[qid], &truth.positives, truth)?;
        for p in &truth.positives {
            let Some(&size) = size_of.get(p) else {
                missing += 1;
                continue;
            };
            let bucket = (0..buckets).find(|&b| size <= edges[b + 1] && (size > edges[b] || b == 0 && size >= edges[0]));
            let Some(b) = bucket else {
                missing += 1;
                continue;
            };
            sums[b].0 += base[p];
            sums[b].1 += impr[p];
            sums[b].2 += 1;
        }
    }
    let rows = sums
        .into_iter()
        .enumerate()
        .map(|(b, (bs, is, c))| BucketRow {
            lower: edges[b],
            upper: edges[b + 1],
            baseline_precision: if c > 0 { bs / c as f64 } else { 0.0 },
            improved_precision: if c > 0 { is / c as f64 } else { 0.0 },
            count: c,
        })
        .collect();
    Ok(GainReport { rows, missing_sizes: missing })
}
