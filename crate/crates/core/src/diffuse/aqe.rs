use crate::descriptors::{normalize_in_place, DescriptorSet, KernelParams};
use crate::diffuse::rank::{knn_ranking, RankingResult};
use crate::error::{Error, Result};

/// Average query expansion: re-query with the normalized mean of the query
/// and its `top_n` best kNN results. `top_n = 0` is plain kNN ranking.
pub fn aqe_baseline(ds: &DescriptorSet, query: &[f64], top_n: usize, params: KernelParams) -> Result<RankingResult> {
    if top_n >= ds.len() {
        return Err(Error::input(format!("top_n={top_n} must be smaller than n={}", ds.len())));
    }
    let initial = knn_ranking(ds, query, params)?;
    if top_n == 0 {
        return Ok(initial);
    }
    let expanded = expanded_query(ds, query, &initial.order[..top_n])?;
    knn_ranking(ds, &expanded, params)
}

/// Normalized sum of the query and the descriptors of `items`.
pub fn expanded_query(ds: &DescriptorSet, query: &[f64], items: &[u32]) -> Result<Vec<f64>> {
    let mut acc = query.to_vec();
    for &id in items {
        let item = ds.item(id).ok_or_else(|| Error::input(format!("unknown item {id}")))?;
        for &r in &item.rows {
            acc.iter_mut().zip(ds.row(r)).for_each(|(a, x)| *a += x);
        }
    }
    if !normalize_in_place(&mut acc) {
        return Err(Error::input("expanded query is the zero vector"));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_expansion_is_knn() {
        let ds = DescriptorSet::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap();
        let r = aqe_baseline(&ds, &[0.0, 1.0], 0, KernelParams::default()).unwrap();
        assert_eq!(r.order, vec![2, 1, 0]);
        assert!(r.solve_report.is_none());
    }

    #[test]
    fn identical_results_leave_query_unchanged() {
        let v = vec![0.6, 0.8];
        let ds = DescriptorSet::from_rows(&[v.clone(), v.clone(), v.clone(), vec![1.0, 0.0]]).unwrap();
        let q = expanded_query(&ds, &v, &[0, 1, 2]).unwrap();
        assert!((q[0] - 0.6).abs() < 1e-15 && (q[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn top_n_bound() {
        let ds = DescriptorSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(aqe_baseline(&ds, &[1.0, 0.0], 2, KernelParams::default()).is_err());
    }
}
