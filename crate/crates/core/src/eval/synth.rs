//! Synthetic datasets for desk-scale validation.
//!
//! Two generators:
//! * [`generate_manifolds`]: noisy arcs in the plane (two interleaved
//!   crescents by default) lifted onto the unit sphere in R³.
//! * [`generate_planted`]: items made of region descriptors, where each
//!   positive item contains a few regions of its class's object manifold
//!   among bursty background regions. The fraction of object regions is the
//!   item's relative object size.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptors::{dot, normalize_in_place, DescriptorSet, KernelParams};
use crate::error::{Error, Result};
use crate::eval::metrics::{GroundTruth, QueryTruth};

/// One noisy circular arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub center: [f64; 2],
    pub radius: f64,
    /// Start angle in radians.
    pub start: f64,
    /// Angular span in radians.
    pub span: f64,
    /// Standard deviation of isotropic Gaussian noise.
    pub sigma: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifoldSpec {
    pub manifolds: Vec<ArcSpec>,
    /// Uniform background points drawn in the bounding box of the arcs.
    pub noise_points: usize,
    /// Height of the lift coordinate appended before normalization.
    pub lift: f64,
    pub seed: u64,
}

impl SyntheticManifoldSpec {
    /// Two interleaved crescents with `count` points each.
    pub fn two_crescents(count: usize, sigma: f64, seed: u64) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            manifolds: vec![
                ArcSpec { center: [0.0, 0.0], radius: 1.0, start: 0.0, span: pi, sigma, count },
                ArcSpec { center: [1.0, 0.5], radius: 1.0, start: pi, span: pi, sigma, count },
            ],
            noise_points: 0,
            lift: 1.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifolds.is_empty() {
            return Err(Error::input("at least one manifold is required"));
        }
        for (i, m) in self.manifolds.iter().enumerate() {
            if m.count == 0 {
                return Err(Error::input(format!("manifold {i} has no points")));
            }
            if !(m.sigma >= 0.0) || !(m.radius >= 0.0) || !m.span.is_finite() {
                return Err(Error::input(format!("manifold {i} has invalid shape parameters")));
            }
        }
        if !(self.lift > 0.0) {
            return Err(Error::input("lift must be positive"));
        }
        Ok(())
    }
}

/// Generated planar dataset and its lifted descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticManifolds {
    pub descriptors: DescriptorSet,
    pub points: Vec<[f64; 2]>,
    /// Manifold index per point; `None` for background noise.
    pub labels: Vec<Option<usize>>,
    pub spec: SyntheticManifoldSpec,
    /// Planar point mapped to the lift axis.
    pub origin: [f64; 2],
    pub bounds: [f64; 4],
}

fn sample_arc(arc: &ArcSpec, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let t = arc.start + arc.span * rng.random::<f64>();
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    [
        arc.center[0] + arc.radius * t.cos() + arc.sigma * nx,
        arc.center[1] + arc.radius * t.sin() + arc.sigma * ny,
    ]
}

fn arc_bounds(spec: &SyntheticManifoldSpec) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for m in &spec.manifolds {
        let pad = m.radius + 3.0 * m.sigma;
        b[0] = b[0].min(m.center[0] - pad);
        b[1] = b[1].min(m.center[1] - pad);
        b[2] = b[2].max(m.center[0] + pad);
        b[3] = b[3].max(m.center[1] + pad);
    }
    b
}

/// Samples every arc, appends optional background noise, and lifts points
/// to unit vectors `(x - ox, y - oy, lift) / ‖·‖`. Deterministic under seed.
pub fn generate_manifolds(spec: &SyntheticManifoldSpec) -> Result<SyntheticManifolds> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, arc) in spec.manifolds.iter().enumerate() {
        for _ in 0..arc.count {
            points.push(sample_arc(arc, &mut rng));
            labels.push(Some(label));
        }
    }
    let bounds = arc_bounds(spec);
    for _ in 0..spec.noise_points {
        points.push([
            bounds[0] + (bounds[2] - bounds[0]) * rng.random::<f64>(),
            bounds[1] + (bounds[3] - bounds[1]) * rng.random::<f64>(),
        ]);
        labels.push(None);
    }
    let origin = [(bounds[0] + bounds[2]) / 2.0, (bounds[1] + bounds[3]) / 2.0];
    let data: Vec<f64> = points.iter().flat_map(|p| lift_point(*p, origin, spec.lift)).collect();
    let descriptors = DescriptorSet::single_region(data, 3)?;
    Ok(SyntheticManifolds { descriptors, points, labels, spec: spec.clone(), origin, bounds })
}

pub fn lift_point(p: [f64; 2], origin: [f64; 2], lift: f64) -> [f64; 3] {
    let v = [p[0] - origin[0], p[1] - origin[1], lift];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl SyntheticManifolds {
    pub fn lift(&self, p: [f64; 2]) -> [f64; 3] {
        lift_point(p, self.origin, self.spec.lift)
    }

    /// Fresh points from one manifold's distribution.
    pub fn sample_queries(&self, manifold: usize, count: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
        let arc = self
            .spec
            .manifolds
            .get(manifold)
            .ok_or_else(|| Error::input(format!("no manifold {manifold}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| sample_arc(arc, &mut rng)).collect())
    }

    /// Items on manifold `label` (item id = row index).
    pub fn members(&self, label: usize) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(label))
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Ground truth for queries given as `(query id, manifold label)`.
    pub fn ground_truth(&self, queries: &[(u32, usize)]) -> GroundTruth {
        GroundTruth {
            queries: queries
                .iter()
                .map(|&(id, label)| QueryTruth { id, positives: self.members(label), ignored: Vec::new() })
                .collect(),
        }
    }

    /// Scores on a regular grid over the data bounds. A grid point receives
    /// the similarity-weighted mean of the scores of its `k` most similar
    /// dataset points.
    pub fn grid_scores(
        &self,
        point_scores: &[f64],
        params: KernelParams,
        k: usize,
        resolution: usize,
    ) -> Result<Vec<([f64; 2], f64)>> {
        if point_scores.len() != self.points.len() {
            return Err(Error::input("score vector does not match the dataset"));
        }
        if resolution < 2 || k == 0 {
            return Err(Error::input("grid resolution must be at least 2 and k positive"));
        }
        let [x0, y0, x1, y1] = self.bounds;
        let mut out = Vec::with_capacity(resolution * resolution);
        let mut sims: Vec<(f64, usize)> = Vec::with_capacity(self.points.len());
        for gy in 0..resolution {
            for gx in 0..resolution {
                let p = [
                    x0 + (x1 - x0) * gx as f64 / (resolution - 1) as f64,
                    y0 + (y1 - y0) * gy as f64 / (resolution - 1) as f64,
                ];
                let q = self.lift(p);
                sims.clear();
                sims.extend(self.descriptors.rows().enumerate().map(|(i, x)| (params.apply(dot(x, &q)), i)));
                let kk = k.min(sims.len());
                sims.select_nth_unstable_by(kk - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let (num, den) = sims[..kk]
                    .iter()
                    .fold((0.0, 0.0), |(n, d), &(s, i)| (n + s * point_scores[i], d + s));
                out.push((p, if den > 0.0 { num / den } else { 0.0 }));
            }
        }
        Ok(out)
    }
}

/// Parameters of the planted-region benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub classes: usize,
    pub items_per_class: usize,
    /// Items with background regions only.
    pub distractors: usize,
    pub regions_per_item: usize,
    pub dim: usize,
    pub queries_per_class: usize,
    /// Object regions per query.
    pub query_object_regions: usize,
    /// Background regions per query.
    pub query_background_regions: usize,
    /// Number of shared background textures.
    pub textures: usize,
    /// Largest number of textures in one item.
    pub textures_per_item: usize,
    /// Relative object sizes are drawn uniformly from this range.
    pub size_range: [f64; 2],
    /// Spread of object regions around the item's viewpoint, in radians.
    pub viewpoint_spread: f64,
    /// Noise added to object regions.
    pub object_noise: f64,
    /// Noise added to background regions.
    pub background_noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            items_per_class: 20,
            distractors: 100,
            regions_per_item: 21,
            dim: 32,
            queries_per_class: 2,
            query_object_regions: 4,
            query_background_regions: 2,
            textures: 12,
            textures_per_item: 3,
            size_range: [0.05, 1.0],
            viewpoint_spread: 0.25,
            object_noise: 0.15,
            background_noise: 0.25,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::input(format!("planted spec: {what}")));
        if self.classes == 0 || self.items_per_class == 0 {
            return bad("classes and items_per_class must be positive");
        }
        if self.regions_per_item == 0 || self.dim < 2 {
            return bad("regions_per_item must be positive and dim at least 2");
        }
        if self.query_object_regions == 0 {
            return bad("queries need at least one object region");
        }
        if self.textures == 0 || self.textures_per_item == 0 {
            return bad("at least one texture is required");
        }
        let [lo, hi] = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("size_range must satisfy 0 < lo <= hi <= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBenchmark {
    pub database: DescriptorSet,
    /// Query regions; item id = query id.
    pub queries: DescriptorSet,
    pub ground_truth: GroundTruth,
    /// Relative object size of every positive item.
    pub sizes: BTreeMap<u32, f64>,
    /// Class of each database item; `None` for distractors.
    pub classes: Vec<Option<usize>>,
}

fn gaussian_vec(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Smooth closed curve in R^d with unit-norm samples.
struct ObjectCurve {
    offset: Vec<f64>,
    harmonics: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ObjectCurve {
    fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let offset = gaussian_vec(dim, s, rng);
        let harmonics = (1..=3).map(|_| (gaussian_vec(dim, s, rng), gaussian_vec(dim, s, rng))).collect();
        Self { offset, harmonics }
    }

    fn at(&self, t: f64) -> Vec<f64> {
        let mut v = self.offset.clone();
        for (h, (a, b)) in self.harmonics.iter().enumerate() {
            let w = (h + 1) as f64 * t;
            let (sin, cos) = w.sin_cos();
            v.iter_mut().zip(a.iter().zip(b)).for_each(|(x, (ai, bi))| *x += ai * cos + bi * sin);
        }
        v
    }
}

fn noisy_unit(base: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = noise / (base.len() as f64).sqrt();
    let mut v: Vec<f64> = base.iter().map(|b| b + s * rng.sample::<f64, _>(StandardNormal)).collect();
    if !normalize_in_place(&mut v) {
        v = base.to_vec();
        normalize_in_place(&mut v);
    }
    v
}

struct ItemBuilder {
    data: Vec<f64>,
    item_of: Vec<u32>,
    region_of: Vec<u32>,
}

impl ItemBuilder {
    fn new() -> Self {
        Self { data: Vec::new(), item_of: Vec::new(), region_of: Vec::new() }
    }

    fn push_item(&mut self, id: u32, regions: Vec<Vec<f64>>) {
        for (r, v) in regions.into_iter().enumerate() {
            self.data.extend(v);
            self.item_of.push(id);
            self.region_of.push(r as u32);
        }
    }

    fn finish(self, dim: usize) -> Result<DescriptorSet> {
        DescriptorSet::new(self.data, dim, self.item_of, self.region_of)
    }
}

/// Generates the planted-region benchmark. Database item ids run from zero,
/// query ids are separate and also start at zero.
pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedBenchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let tau = 2.0 * std::f64::consts::PI;
    let curves: Vec<ObjectCurve> = (0..spec.classes).map(|_| ObjectCurve::random(d, &mut rng)).collect();
    let textures: Vec<Vec<f64>> = (0..spec.textures).map(|_| gaussian_vec(d, 1.0, &mut rng)).collect();

    let background = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let used = rng.random_range(1..=spec.textures_per_item.min(spec.textures));
        let chosen: Vec<usize> = rand::seq::index::sample(rng, spec.textures, used).into_vec();
        (0..count)
            .map(|j| noisy_unit(&textures[chosen[j % used]], spec.background_noise, rng))
            .collect()
    };
    let object = |class: usize, view: f64, count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let t = view + spec.viewpoint_spread * rng.sample::<f64, _>(StandardNormal);
                noisy_unit(&curves[class].at(t), spec.object_noise, rng)
            })
            .collect()
    };

    let mut db = ItemBuilder::new();
    let mut sizes = BTreeMap::new();
    let mut classes = Vec::new();
    let mut next_id = 0u32;
    for class in 0..spec.classes {
        for _ in 0..spec.items_per_class {
            let size = rng.random_range(spec.size_range[0]..=spec.size_range[1]);
            let m = spec.regions_per_item;
            let objects = ((size * m as f64).round() as usize).clamp(1, m);
            let view = tau * rng.random::<f64>();
            let mut regions = object(class, view, objects, &mut rng);
            regions.extend(background(m - objects, &mut rng));
            db.push_item(next_id, regions);
            sizes.insert(next_id, size);
            classes.push(Some(class));
            next_id += 1;
        }
    }
    for _ in 0..spec.distractors {
        db.push_item(next_id, background(spec.regions_per_item, &mut rng));
        classes.push(None);
        next_id += 1;
    }

    let mut qb = ItemBuilder::new();
    let mut truth = Vec::new();
    let mut qid = 0u32;
    for class in 0..spec.classes {
        let positives: Vec<u32> = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Some(class))
            .map(|(i, _)| i as u32)
            .collect();
        for _ in 0..spec.queries_per_class {
            let view = tau * rng.random::<f64>();
            let mut regions = object(class, view, spec.query_object_regions, &mut rng);
            if spec.query_background_regions > 0 {
                regions.extend(background(spec.query_background_regions, &mut rng));
            }
            qb.push_item(qid, regions);
            truth.push(QueryTruth { id: qid, positives: positives.clone(), ignored: Vec::new() });
            qid += 1;
        }
    }

    Ok(PlantedBenchmark {
        database: db.finish(d)?,
        queries: qb.finish(d)?,
        ground_truth: GroundTruth { queries: truth },
        sizes,
        classes,
    })
}
