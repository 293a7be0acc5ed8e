use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevance judgments for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTruth {
    pub id: u32,
    pub positives: Vec<u32>,
    #[serde(default)]
    pub ignored: Vec<u32>,
}

impl QueryTruth {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::input(format!("query {} has no positives", self.id)));
        }
        let pos: HashSet<u32> = self.positives.iter().copied().collect();
        if let Some(x) = self.ignored.iter().find(|x| pos.contains(x)) {
            return Err(Error::input(format!("query {}: item {x} is both positive and ignored", self.id)));
        }
        Ok(())
    }
}

/// Ground-truth file: `{"queries": [{"id", "positives", "ignored"}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub queries: Vec<QueryTruth>,
}

impl GroundTruth {
    pub fn get(&self, id: u32) -> Option<&QueryTruth> {
        self.queries.iter().find(|q| q.id == id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let gt: GroundTruth = serde_json::from_str(&text).map_err(|e| Error::format(format!("ground truth: {e}")))?;
        for q in &gt.queries {
            q.validate().map_err(|e| Error::format(e.to_string()))?;
        }
        Ok(gt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Ranking with ignored items removed; errors on repeated items.
pub(crate) fn filtered_ranking<'a>(ranked: &'a [u32], truth: &QueryTruth) -> Result<Vec<&'a u32>> {
    let mut seen = HashSet::with_capacity(ranked.len());
    if let Some(dup) = ranked.iter().find(|x| !seen.insert(**x)) {
        return Err(Error::input(format!("item {dup} appears twice in the ranking of query {}", truth.id)));
    }
    let ignored: HashSet<u32> = truth.ignored.iter().copied().collect();
    Ok(ranked.iter().filter(|x| !ignored.contains(x)).collect())
}

/// Mean over positives of the precision at each positive's rank; positives
/// never retrieved contribute zero. Ignored items are removed first.
pub fn average_precision(ranked: &[u32], truth: &QueryTruth) -> Result<f64> {
    truth.validate()?;
    let ranking = filtered_ranking(ranked, truth)?;
    let positives: HashSet<u32> = truth.positives.iter().copied().collect();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, item) in ranking.iter().enumerate() {
        if positives.contains(item) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / positives.len() as f64)
}

pub fn mean_average_precision(per_query_ap: &[f64]) -> Result<f64> {
    if per_query_ap.is_empty() {
        return Err(Error::input("mAP of an empty query set is undefined"));
    }
    Ok(per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64)
}

/// AP for every ranked query, in ascending query id order. Every ranked
/// query needs ground truth.
pub fn evaluate_rankings(rankings: &BTreeMap<u32, Vec<u32>>, gt: &GroundTruth) -> Result<Vec<(u32, f64)>> {
    let missing: Vec<String> = rankings
        .keys()
        .filter(|id| gt.get(**id).is_none())
        .map(u32::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::input(format!("no ground truth for queries: {}", missing.join(", "))));
    }
    rankings
        .iter()
        .map(|(&id, order)| Ok((id, average_precision(order, gt.get(id).expect("checked"))?)))
        .collect()
}
