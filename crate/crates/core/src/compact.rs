//! Per-item region compaction with a spherical Gaussian mixture.
//!
//! Each item's regions are summarized by the unit-normalized means of a
//! `G`-component mixture fitted by EM. Only the means are used downstream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::descriptors::{normalize_in_place, DescriptorSet};
use crate::error::{Error, Result};

const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmSpec {
    pub components: usize,
    pub max_em_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmSpec {
    fn default() -> Self {
        Self { components: 5, max_em_iters: 50, tol: 1e-5, seed: 0 }
    }
}

impl GmmSpec {
    pub fn with_components(components: usize) -> Self {
        Self { components, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::input("GMM needs at least one component"));
        }
        if self.max_em_iters == 0 {
            return Err(Error::input("max_em_iters must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("EM tolerance must be positive"));
        }
        Ok(())
    }
}

/// Fitted mixture with one scalar variance per component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    /// `G×d` row-major, not normalized.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    /// Log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(points: &[&[f64]], g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < g {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// EM for a spherical mixture on `m×d` row-major data, k-means++ seeded.
pub fn fit_spherical_gmm(data: &[f64], d: usize, spec: &GmmSpec) -> Result<GmmFit> {
    spec.validate()?;
    if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
        return Err(Error::input("GMM input must be a nonempty m×d buffer"));
    }
    let points: Vec<&[f64]> = data.chunks_exact(d).collect();
    let m = points.len();
    let g = spec.components;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut means = kmeans_pp(&points, g, &mut rng);
    let global_var = {
        let mut mean = vec![0.0; d];
        for p in &points {
            mean.iter_mut().zip(*p).for_each(|(a, x)| *a += x / m as f64);
        }
        let v = points.iter().map(|p| sq_dist(p, &mean)).sum::<f64>() / (m * d) as f64;
        v.max(VARIANCE_FLOOR)
    };
    let mut variances = vec![global_var; g];
    let mut weights = vec![1.0 / g as f64; g];
    let mut resp = vec![0.0; m * g];
    let mut history = Vec::new();
    let half_d = 0.5 * d as f64;
    let log_2pi = (2.0 * std::f64::consts::PI).ln();

    for _ in 0..spec.max_em_iters {
        // E-step.
        let mut ll = 0.0;
        let mut logp = vec![0.0; g];
        for (i, p) in points.iter().enumerate() {
            for c in 0..g {
                logp[c] = weights[c].ln() - half_d * (log_2pi + variances[c].ln())
                    - sq_dist(p, &means[c]) / (2.0 * variances[c]);
            }
            let lse = log_sum_exp(&logp);
            ll += lse;
            for c in 0..g {
                resp[i * g + c] = (logp[c] - lse).exp();
            }
        }
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= spec.tol * prev.abs().max(1e-300));
        history.push(ll);
        if converged {
            break;
        }

        // M-step.
        for c in 0..g {
            let nc: f64 = (0..m).map(|i| resp[i * g + c]).sum();
            if nc <= 1e-12 {
                weights[c] = 0.0;
                continue;
            }
            weights[c] = nc / m as f64;
            let mut mu = vec![0.0; d];
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * g + c];
                mu.iter_mut().zip(*p).for_each(|(a, x)| *a += r * x);
            }
            mu.iter_mut().for_each(|a| *a /= nc);
            let var = points
                .iter()
                .enumerate()
                .map(|(i, p)| resp[i * g + c] * sq_dist(p, &mu))
                .sum::<f64>()
                / (nc * d as f64);
            means[c] = mu;
            variances[c] = var.max(VARIANCE_FLOOR);
        }
    }
    Ok(GmmFit { means: means.concat(), variances, weights, log_likelihood: history })
}

fn dedup_rows(data: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for row in data.chunks_exact(d) {
        if !unique.iter().any(|u| u.as_slice() == row) {
            unique.push(row.to_vec());
        }
    }
    unique
}

/// Unit-normalized mixture means of one item's regions. Items with no more
/// distinct regions than components keep their distinct regions.
pub fn compact_item(regions: &[f64], d: usize, spec: &GmmSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if d == 0 || regions.is_empty() || !regions.len().is_multiple_of(d) {
        return Err(Error::input("cannot compact an empty region set"));
    }
    let unique = dedup_rows(regions, d);
    if unique.len() <= spec.components {
        return Ok(unique);
    }
    let fit = fit_spherical_gmm(regions, d, spec)?;
    let mut out = Vec::with_capacity(spec.components);
    for (c, mean) in fit.means.chunks_exact(d).enumerate() {
        if fit.weights[c] == 0.0 {
            continue;
        }
        let mut v = mean.to_vec();
        if normalize_in_place(&mut v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::input("all mixture means vanished"));
    }
    Ok(out)
}

/// Applies [`compact_item`] to every item; item ids are preserved and region
/// ordinals renumbered from zero.
pub fn compact_dataset(ds: &DescriptorSet, spec: &GmmSpec) -> Result<DescriptorSet> {
    let per_item: Vec<(u32, Vec<Vec<f64>>)> = ds
        .items()
        .par_iter()
        .map(|item| {
            let item_spec = GmmSpec {
                seed: spec.seed ^ (item.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..*spec
            };
            compact_item(&ds.item_matrix(item), ds.dim(), &item_spec).map(|rows| (item.id, rows))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::new();
    let mut item_of = Vec::new();
    let mut region_of = Vec::new();
    for (id, rows) in per_item {
        for (r, row) in rows.into_iter().enumerate() {
            data.extend(row);
            item_of.push(id);
            region_of.push(r as u32);
        }
    }
    DescriptorSet::new(data, ds.dim(), item_of, region_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::dot;
    use rand_distr::StandardNormal;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let mut v = v;
        assert!(normalize_in_place(&mut v));
        v
    }

    fn cluster(center: &[f64], count: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| unit(center.iter().map(|c| c + spread * rng.sample::<f64, _>(StandardNormal)).collect()))
            .collect()
    }

    #[test]
    fn identical_rows_collapse() {
        let v = unit(vec![0.2, 0.3, 0.9]);
        let data: Vec<f64> = (0..7).flat_map(|_| v.clone()).collect();
        let out = compact_item(&data, 3, &GmmSpec::with_components(3)).unwrap();
        assert!(out.iter().all(|m| m == &v));
    }

    #[test]
    fn few_points_are_returned() {
        let rows = [unit(vec![1.0, 0.0, 0.0]), unit(vec![0.0, 1.0, 0.0]), unit(vec![0.0, 0.0, 1.0])];
        let out = compact_item(&rows.concat(), 3, &GmmSpec::with_components(5)).unwrap();
        assert_eq!(out, rows.to_vec());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(compact_item(&[], 3, &GmmSpec::default()).is_err());
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c1 = unit((0..8).map(|_| rng.sample(StandardNormal)).collect());
        let c2 = unit((0..8).map(|_| rng.sample(StandardNormal)).collect());
        let mut rows = cluster(&c1, 10, 0.05, &mut rng);
        rows.extend(cluster(&c2, 10, 0.05, &mut rng));
        let data = rows.concat();
        let out = compact_item(&data, 8, &GmmSpec { seed: 3, ..GmmSpec::with_components(2) }).unwrap();
        assert_eq!(out.len(), 2);

        // Oracle: Lloyd's k-means from the known cluster memberships.
        let centroid = |range: std::ops::Range<usize>| {
            let mut acc = vec![0.0; 8];
            for r in &rows[range] {
                acc.iter_mut().zip(r).for_each(|(a, x)| *a += x);
            }
            unit(acc)
        };
        let truth = [centroid(0..10), centroid(10..20)];
        for t in &truth {
            let best = out.iter().map(|m| dot(m, t).min(1.0).acos().to_degrees()).fold(f64::INFINITY, f64::min);
            assert!(best < 5.0, "angular error {best}");
        }
    }

    #[test]
    fn log_likelihood_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let rows: Vec<Vec<f64>> = (0..21).map(|_| unit((0..6).map(|_| rng.sample(StandardNormal)).collect())).collect();
            let fit = fit_spherical_gmm(&rows.concat(), 6, &GmmSpec { seed: trial, tol: 1e-12, ..GmmSpec::default() }).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "trial {trial}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn single_component_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..9).map(|_| unit((0..4).map(|_| rng.sample(StandardNormal)).collect())).collect();
        let out = compact_item(&rows.concat(), 4, &GmmSpec::with_components(1)).unwrap();
        let mut mean = vec![0.0; 4];
        for r in &rows {
            mean.iter_mut().zip(r).for_each(|(a, x)| *a += x);
        }
        let mean = unit(mean);
        assert!(out[0].iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn dataset_compaction_preserves_items_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = Vec::new();
        let mut items = Vec::new();
        let mut regions = Vec::new();
        for item in [3u32, 9, 4] {
            for r in 0..12 {
                data.extend(unit((0..5).map(|_| rng.sample(StandardNormal)).collect()));
                items.push(item);
                regions.push(r);
            }
        }
        let ds = DescriptorSet::new(data, 5, items, regions).unwrap();
        let spec = GmmSpec { seed: 1, ..GmmSpec::with_components(3) };
        let a = compact_dataset(&ds, &spec).unwrap();
        let b = compact_dataset(&ds, &spec).unwrap();
        assert_eq!(a, b);
        let ids: Vec<u32> = a.items().iter().map(|it| it.id).collect();
        assert_eq!(ids, vec![3, 4, 9]);
        assert!(a.max_regions_per_item() <= 3);
        for row in a.rows() {
            assert!((dot(row, row).sqrt() - 1.0).abs() < 1e-5);
        }
        // Enough components: nothing changes.
        let same = compact_dataset(&ds, &GmmSpec::with_components(12)).unwrap();
        for item in ds.items() {
            assert_eq!(same.item_matrix(same.item(item.id).unwrap()), ds.item_matrix(item));
        }
    }
}
