//! Exact and approximate k-nearest-neighbor lists under the kernel similarity.
//!
//! Neighbors are ordered by descending similarity; equal similarities are
//! ordered by ascending node index. Both builders share this total order so
//! that exact and approximate lists are directly comparable.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::descriptors::{dot, DescriptorSet, KernelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub similarity: f64,
}

/// Ranking order for neighbor candidates: higher similarity first, then lower index.
#[inline]
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.index.cmp(&b.index))
}

/// Per-node neighbor lists of length at most `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnLists {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl KnnLists {
    /// Validates ordering, self-exclusion and the length bound.
    pub fn new(k: usize, lists: Vec<Vec<Neighbor>>) -> Result<Self> {
        let n = lists.len();
        for (i, list) in lists.iter().enumerate() {
            if list.len() > k {
                return Err(Error::input(format!("node {i} lists {} > k={k} neighbors", list.len())));
            }
            for (pos, nb) in list.iter().enumerate() {
                if nb.index as usize == i {
                    return Err(Error::input(format!("node {i} lists itself")));
                }
                if nb.index as usize >= n {
                    return Err(Error::input(format!("node {i} lists out-of-range node {}", nb.index)));
                }
                if !(nb.similarity >= 0.0) {
                    return Err(Error::input(format!("node {i} has a negative or NaN similarity")));
                }
                if pos > 0 && neighbor_order(&list[pos - 1], nb) != Ordering::Less {
                    return Err(Error::input(format!("node {i} list is not strictly ordered")));
                }
            }
        }
        Ok(Self { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    /// Fraction of `exact` neighbor indices also present in `self`.
    pub fn recall_against(&self, exact: &KnnLists) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (approx, truth) in self.lists.iter().zip(&exact.lists) {
            total += truth.len();
            hits += truth
                .iter()
                .filter(|t| approx.iter().any(|a| a.index == t.index))
                .count();
        }
        if total == 0 {
            1.0
        } else {
            hits as f64 / total as f64
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::input("k must be positive"));
    }
    if k >= n {
        return Err(Error::input(format!("k={k} must be smaller than the point count n={n}")));
    }
    Ok(())
}

/// Top-`k` neighbors of `query` among the rows of `ds`, skipping `exclude`.
pub(crate) fn top_k_for(
    ds: &DescriptorSet,
    query: &[f64],
    k: usize,
    params: KernelParams,
    exclude: Option<usize>,
    scratch: &mut Vec<Neighbor>,
) -> Vec<Neighbor> {
    scratch.clear();
    scratch.extend(
        ds.rows()
            .enumerate()
            .filter(|&(j, _)| Some(j) != exclude)
            .map(|(j, row)| Neighbor { index: j as u32, similarity: params.apply(dot(query, row)) }),
    );
    let k = k.min(scratch.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, neighbor_order);
    }
    let mut top = scratch[..k].to_vec();
    top.sort_unstable_by(neighbor_order);
    top
}

/// Brute-force kNN lists. Nodes are processed in parallel.
pub fn exact_knn(ds: &DescriptorSet, k: usize, params: KernelParams) -> Result<KnnLists> {
    check_k(ds.len(), k)?;
    let lists = (0..ds.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| top_k_for(ds, ds.row(i), k, params, Some(i), scratch))
        .collect();
    Ok(KnnLists { k, lists })
}

/// Parameters of the NN-descent builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnDescentParams {
    /// Fraction of new entries sampled per list and iteration, in (0, 1].
    pub rho: f64,
    pub max_iters: usize,
    /// Stop once fewer than `delta * n * k` list updates happen in an iteration.
    pub delta: f64,
    pub seed: u64,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        Self { rho: 0.5, max_iters: 30, delta: 0.001, seed: 0 }
    }
}

impl NnDescentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::input(format!("rho={} must lie in (0, 1]", self.rho)));
        }
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::input("delta must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NnDescentStats {
    pub iterations: usize,
    pub similarity_evaluations: u64,
    pub last_updates: usize,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    nb: Neighbor,
    is_new: bool,
}

/// Sorted bounded list; returns whether `cand` was inserted.
fn insert_candidate(list: &mut Vec<Entry>, k: usize, cand: Neighbor) -> bool {
    if list.len() == k {
        let worst = &list[k - 1].nb;
        if neighbor_order(&cand, worst) != Ordering::Less {
            return false;
        }
    }
    if list.iter().any(|e| e.nb.index == cand.index) {
        return false;
    }
    let pos = list
        .iter()
        .position(|e| neighbor_order(&cand, &e.nb) == Ordering::Less)
        .unwrap_or(list.len());
    list.insert(pos, Entry { nb: cand, is_new: true });
    list.truncate(k);
    true
}

/// Approximate kNN lists by neighbor-of-neighbor refinement.
pub fn nn_descent_knn(
    ds: &DescriptorSet,
    k: usize,
    params: KernelParams,
    opts: NnDescentParams,
) -> Result<KnnLists> {
    nn_descent_knn_with_stats(ds, k, params, opts).map(|(lists, _)| lists)
}

pub fn nn_descent_knn_with_stats(
    ds: &DescriptorSet,
    k: usize,
    params: KernelParams,
    opts: NnDescentParams,
) -> Result<(KnnLists, NnDescentStats)> {
    let n = ds.len();
    check_k(n, k)?;
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sim = |a: usize, b: usize| params.apply(dot(ds.row(a), ds.row(b)));
    let mut stats = NnDescentStats::default();

    // Random initial lists of k distinct non-self neighbors.
    let init: Vec<Vec<u32>> = (0..n)
        .map(|v| {
            rand::seq::index::sample(&mut rng, n - 1, k)
                .into_iter()
                .map(|j| if j >= v { j as u32 + 1 } else { j as u32 })
                .collect()
        })
        .collect();
    let mut lists: Vec<Vec<Entry>> = init
        .into_par_iter()
        .enumerate()
        .map(|(v, idx)| {
            let mut list: Vec<Entry> = idx
                .into_iter()
                .map(|j| Entry {
                    nb: Neighbor { index: j, similarity: sim(v, j as usize) },
                    is_new: true,
                })
                .collect();
            list.sort_unstable_by(|a, b| neighbor_order(&a.nb, &b.nb));
            list
        })
        .collect();
    stats.similarity_evaluations += (n * k) as u64;

    let sample_size = ((opts.rho * k as f64).ceil() as usize).max(1);
    let stop_below = opts.delta * n as f64 * k as f64;
    let mut old_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut new_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut candidates: Vec<u32> = Vec::new();

    for _ in 0..opts.max_iters {
        stats.iterations += 1;
        for v in 0..n {
            old_lists[v].clear();
            new_lists[v].clear();
            candidates.clear();
            for (pos, e) in lists[v].iter().enumerate() {
                if e.is_new {
                    candidates.push(pos as u32);
                } else {
                    old_lists[v].push(e.nb.index);
                }
            }
            if candidates.len() > sample_size {
                candidates.shuffle(&mut rng);
                candidates.truncate(sample_size);
            }
            for &pos in candidates.iter() {
                let e = &mut lists[v][pos as usize];
                e.is_new = false;
                new_lists[v].push(e.nb.index);
            }
        }

        let mut old_rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut new_rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for v in 0..n {
            for &u in &old_lists[v] {
                old_rev[u as usize].push(v as u32);
            }
            for &u in &new_lists[v] {
                new_rev[u as usize].push(v as u32);
            }
        }
        for v in 0..n {
            for (rev, fwd) in [(&mut new_rev[v], &mut new_lists[v]), (&mut old_rev[v], &mut old_lists[v])] {
                if rev.len() > sample_size && opts.rho < 1.0 {
                    rev.shuffle(&mut rng);
                    rev.truncate(sample_size);
                }
                fwd.extend_from_slice(rev);
                fwd.sort_unstable();
                fwd.dedup();
            }
            let new_v = &new_lists[v];
            old_lists[v].retain(|u| new_v.binary_search(u).is_err());
        }

        // Local joins are evaluated in parallel and merged in node order.
        let joins: Vec<Vec<(u32, u32, f64)>> = (0..n)
            .into_par_iter()
            .map(|v| {
                let new_v = &new_lists[v];
                let old_v = &old_lists[v];
                let mut pairs = Vec::with_capacity(new_v.len() * (new_v.len() + old_v.len()));
                for (a, &u1) in new_v.iter().enumerate() {
                    for &u2 in &new_v[a + 1..] {
                        pairs.push((u1, u2, sim(u1 as usize, u2 as usize)));
                    }
                    for &u2 in old_v {
                        if u1 != u2 {
                            pairs.push((u1, u2, sim(u1 as usize, u2 as usize)));
                        }
                    }
                }
                pairs
            })
            .collect();

        let mut updates = 0usize;
        for pairs in joins {
            stats.similarity_evaluations += pairs.len() as u64;
            for (u1, u2, s) in pairs {
                updates += insert_candidate(&mut lists[u1 as usize], k, Neighbor { index: u2, similarity: s }) as usize;
                updates += insert_candidate(&mut lists[u2 as usize], k, Neighbor { index: u1, similarity: s }) as usize;
            }
        }
        stats.last_updates = updates;
        if updates == 0 || (updates as f64) < stop_below {
            break;
        }
    }

    let lists = lists
        .into_iter()
        .map(|l| l.into_iter().map(|e| e.nb).collect())
        .collect();
    Ok((KnnLists { k, lists }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_unit(n: usize, d: usize, seed: u64) -> DescriptorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        DescriptorSet::single_region(data, d).unwrap()
    }

    fn brute_force(ds: &DescriptorSet, k: usize, p: KernelParams) -> Vec<Vec<u32>> {
        (0..ds.len())
            .map(|i| {
                let mut all: Vec<(f64, u32)> = (0..ds.len())
                    .filter(|&j| j != i)
                    .map(|j| (p.apply(dot(ds.row(i), ds.row(j))), j as u32))
                    .collect();
                // stable sort on index first, then by similarity descending
                all.sort_by_key(|a| a.1);
                all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                all.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn collinear_angles() {
        let rows: Vec<Vec<f64>> = [0.0f64, 10.0, 80.0]
            .iter()
            .map(|deg| vec![deg.to_radians().cos(), deg.to_radians().sin()])
            .collect();
        let ds = DescriptorSet::from_rows(&rows).unwrap();
        let lists = exact_knn(&ds, 1, KernelParams::default()).unwrap();
        assert_eq!(lists.neighbors(0)[0].index, 1);
        assert_eq!(lists.neighbors(1)[0].index, 0);
        assert_eq!(lists.neighbors(2)[0].index, 1);
    }

    #[test]
    fn complete_graph_when_k_is_n_minus_one() {
        let ds = random_unit(7, 4, 1);
        let lists = exact_knn(&ds, 6, KernelParams::default()).unwrap();
        for i in 0..7 {
            let mut idx: Vec<u32> = lists.neighbors(i).iter().map(|nb| nb.index).collect();
            idx.sort_unstable();
            let expected: Vec<u32> = (0..7).filter(|&j| j != i as u32).collect();
            assert_eq!(idx, expected);
        }
    }

    #[test]
    fn orthogonal_ties_break_by_index() {
        let ds = DescriptorSet::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let lists = exact_knn(&ds, 1, KernelParams::default()).unwrap();
        let firsts: Vec<u32> = (0..3).map(|i| lists.neighbors(i)[0].index).collect();
        assert_eq!(firsts, vec![1, 0, 0]);
        assert!((0..3).all(|i| lists.neighbors(i)[0].similarity == 0.0));
    }

    #[test]
    fn k_must_be_below_n() {
        let ds = random_unit(4, 3, 2);
        assert!(exact_knn(&ds, 4, KernelParams::default()).is_err());
        assert!(exact_knn(&ds, 0, KernelParams::default()).is_err());
        assert!(nn_descent_knn(&ds, 4, KernelParams::default(), NnDescentParams::default()).is_err());
    }

    #[test]
    fn exact_matches_brute_force() {
        for seed in 0..10 {
            let ds = random_unit(40, 3, seed);
            let p = KernelParams::default();
            let lists = exact_knn(&ds, 5, p).unwrap();
            let oracle = brute_force(&ds, 5, p);
            for i in 0..ds.len() {
                let got: Vec<u32> = lists.neighbors(i).iter().map(|nb| nb.index).collect();
                assert_eq!(got, oracle[i], "node {i}, seed {seed}");
            }
        }
    }

    #[test]
    fn nn_descent_recall_small() {
        let ds = random_unit(20, 5, 3);
        let p = KernelParams::default();
        let opts = NnDescentParams { rho: 1.0, max_iters: 10, delta: 0.001, seed: 5 };
        let approx = nn_descent_knn(&ds, 4, p, opts).unwrap();
        let exact = exact_knn(&ds, 4, p).unwrap();
        assert!(approx.recall_against(&exact) >= 0.95);
    }

    #[test]
    fn nn_descent_two_k_points_is_exact() {
        let ds = random_unit(16, 4, 9);
        let p = KernelParams::default();
        let opts = NnDescentParams { rho: 1.0, ..Default::default() };
        let approx = nn_descent_knn(&ds, 8, p, opts).unwrap();
        let exact = exact_knn(&ds, 8, p).unwrap();
        assert_eq!(approx.recall_against(&exact), 1.0);
    }

    #[test]
    fn nn_descent_is_deterministic() {
        let ds = random_unit(200, 8, 4);
        let p = KernelParams::default();
        let opts = NnDescentParams { seed: 11, ..Default::default() };
        let a = nn_descent_knn(&ds, 10, p, opts).unwrap();
        let b = nn_descent_knn(&ds, 10, p, opts).unwrap();
        assert_eq!(a, b);
        KnnLists::new(a.k(), a.lists().to_vec()).expect("well-formed lists");
    }

    #[test]
    fn nn_descent_reaches_a_fixpoint_on_small_sets() {
        let p = KernelParams::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = rng.random_range(10..=50);
            let k = rng.random_range(1..=5.min(n - 1));
            let ds = random_unit(n, 4, seed);
            let opts = NnDescentParams { rho: 1.0, max_iters: 1000, delta: 0.0, seed };
            let (approx, stats) = nn_descent_knn_with_stats(&ds, k, p, opts).unwrap();
            assert_eq!(stats.last_updates, 0, "seed {seed}");
            assert!(stats.iterations < 1000);
            KnnLists::new(k, approx.lists().to_vec()).unwrap();
        }
    }

    #[test]
    fn nn_descent_fixpoint_is_exact_when_k_is_large() {
        let p = KernelParams::default();
        for seed in 0..10 {
            let n = 10 + 4 * seed as usize;
            let ds = random_unit(n, 4, seed);
            let k = n / 2;
            let opts = NnDescentParams { rho: 1.0, max_iters: 1000, delta: 0.0, seed };
            let approx = nn_descent_knn(&ds, k, p, opts).unwrap();
            assert_eq!(approx, exact_knn(&ds, k, p).unwrap(), "seed {seed}, n {n}");
        }
    }
}
