use crate::descriptors::{norm, DescriptorSet, KernelParams, UNIT_NORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::graph::{neighbor_order, top_k_for, Neighbor};

/// Sparse nonnegative similarity vector of dataset points to a query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    n: usize,
    k_query: usize,
    /// Strictly positive entries sorted by node index.
    entries: Vec<(usize, f64)>,
}

impl QueryVector {
    /// Builds from explicit entries; zeros are dropped, negatives rejected.
    pub fn from_entries(n: usize, k_query: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::input("duplicate query vector index"));
        }
        if let Some(&(i, v)) = entries.iter().find(|&&(i, v)| i >= n || !(v > 0.0) || !v.is_finite()) {
            return Err(Error::input(format!("invalid query vector entry ({i}, {v})")));
        }
        Ok(Self { n, k_query, entries })
    }

    pub fn from_dense(y: &[f64], k_query: usize) -> Result<Self> {
        Self::from_entries(y.len(), k_query, y.iter().copied().enumerate().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_query(&self) -> usize {
        self.k_query
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&i, |&(j, _)| j)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, v) in &self.entries {
            y[i] = v;
        }
        y
    }

    /// Re-indexes onto a sub-graph given by `original` (sorted node ids).
    pub fn restrict(&self, original: &[usize]) -> Self {
        let entries = original
            .iter()
            .enumerate()
            .filter_map(|(new, &old)| {
                let v = self.get(old);
                (v > 0.0).then_some((new, v))
            })
            .collect();
        Self { n: original.len(), k_query: self.k_query, entries }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::input("scale factor must be positive"));
        }
        let entries = self.entries.iter().map(|&(i, v)| (i, v * c)).collect();
        Ok(Self { n: self.n, k_query: self.k_query, entries })
    }
}

/// Sums, over all query regions, the kernel similarities to each region's
/// `k_query` nearest dataset points, then keeps only the `global_top_k`
/// largest entries. Ties at either cut go to the lower node index.
pub fn build_query_vector(
    ds: &DescriptorSet,
    queries: &[&[f64]],
    k_query: usize,
    params: KernelParams,
    global_top_k: usize,
) -> Result<QueryVector> {
    if queries.is_empty() {
        return Err(Error::input("query has no regions"));
    }
    if k_query == 0 || k_query > ds.len() {
        return Err(Error::input(format!("k_query={k_query} must lie in 1..={}", ds.len())));
    }
    if global_top_k == 0 {
        return Err(Error::input("global_top_k must be positive"));
    }
    for (r, q) in queries.iter().enumerate() {
        if q.len() != ds.dim() {
            return Err(Error::input(format!(
                "query region {r} has dimension {}, dataset has {}",
                q.len(),
                ds.dim()
            )));
        }
        if (norm(q) - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::input(format!("query region {r} is not unit-norm")));
        }
    }

    let mut y = vec![0.0; ds.len()];
    let mut scratch = Vec::new();
    for q in queries {
        for nb in top_k_for(ds, q, k_query, params, None, &mut scratch) {
            y[nb.index as usize] += nb.similarity;
        }
    }

    let mut nonzero: Vec<Neighbor> = y
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v > 0.0)
        .map(|(i, &v)| Neighbor { index: i as u32, similarity: v })
        .collect();
    if nonzero.len() > global_top_k {
        nonzero.select_nth_unstable_by(global_top_k - 1, neighbor_order);
        nonzero.truncate(global_top_k);
    }
    let entries = nonzero.into_iter().map(|nb| (nb.index as usize, nb.similarity)).collect();
    QueryVector::from_entries(ds.len(), k_query, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let nrm = norm(&v);
                v.iter_mut().for_each(|x| *x /= nrm);
                v
            })
            .collect()
    }

    #[test]
    fn exact_match_single_neighbor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(8, 4, &mut rng);
        let ds = DescriptorSet::from_rows(&rows).unwrap();
        let y = build_query_vector(&ds, &[&rows[5]], 1, KernelParams::default(), 1).unwrap();
        assert_eq!(y.nnz(), 1);
        assert_eq!(y.entries()[0].0, 5);
        assert!((y.entries()[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_region_doubles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = random_rows(12, 4, &mut rng);
        let ds = DescriptorSet::from_rows(&rows).unwrap();
        let q = random_rows(1, 4, &mut rng).remove(0);
        let p = KernelParams::default();
        let once = build_query_vector(&ds, &[&q], 4, p, 12).unwrap();
        let twice = build_query_vector(&ds, &[&q, &q], 4, p, 12).unwrap();
        assert_eq!(once.nnz(), twice.nnz());
        for (a, b) in once.entries().iter().zip(twice.entries()) {
            assert_eq!(a.0, b.0);
            assert_eq!(2.0 * a.1, b.1);
        }
    }

    #[test]
    fn matches_exhaustive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(10, 3, &mut rng);
        let ds = DescriptorSet::from_rows(&rows).unwrap();
        let qs = random_rows(2, 3, &mut rng);
        let p = KernelParams::default();
        let y = build_query_vector(&ds, &[&qs[0], &qs[1]], 3, p, 10).unwrap();

        // Oracle: for each query, sort all points by similarity and add the top three.
        let mut expected = [0.0; 10];
        for q in &qs {
            let mut sims: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, x)| (p.apply(dot(x, q)), i)).collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(s, i) in sims.iter().take(3) {
                expected[i] += s;
            }
        }
        let dense = y.to_dense();
        for i in 0..10 {
            assert!((dense[i] - expected[i]).abs() < 1e-15, "entry {i}");
        }
    }

    #[test]
    fn global_cut_keeps_largest() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = random_rows(30, 4, &mut rng);
        let ds = DescriptorSet::from_rows(&rows).unwrap();
        let qs = random_rows(3, 4, &mut rng);
        let refs: Vec<&[f64]> = qs.iter().map(|q| q.as_slice()).collect();
        let p = KernelParams::default();
        let full = build_query_vector(&ds, &refs, 5, p, 30).unwrap();
        let cut = build_query_vector(&ds, &refs, 5, p, 4).unwrap();
        assert!(cut.nnz() <= 4);
        let mut vals: Vec<f64> = full.entries().iter().map(|e| e.1).collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let min_kept = cut.entries().iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        assert_eq!(min_kept, vals[cut.nnz() - 1]);
        for &(i, v) in cut.entries() {
            assert_eq!(full.get(i), v);
        }
    }

    #[test]
    fn rejects_bad_queries() {
        let ds = DescriptorSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = KernelParams::default();
        assert!(build_query_vector(&ds, &[], 1, p, 1).is_err());
        assert!(build_query_vector(&ds, &[&[1.0, 0.0]], 3, p, 1).is_err());
        assert!(build_query_vector(&ds, &[&[1.0, 0.0, 0.0]], 1, p, 1).is_err());
        assert!(build_query_vector(&ds, &[&[2.0, 0.0]], 1, p, 1).is_err());
    }

    #[test]
    fn restrict_reindexes() {
        let y = QueryVector::from_entries(5, 2, vec![(1, 0.5), (3, 0.25), (4, 1.0)]).unwrap();
        let r = y.restrict(&[0, 3, 4]);
        assert_eq!(r.entries(), &[(1, 0.25), (2, 1.0)]);
        assert_eq!(r.n(), 3);
    }
}
