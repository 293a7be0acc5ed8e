use std::fs;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{sha256_file, BuilderInfo, FileDigest, GmpInfo, IndexBundle, Manifest, DESCRIPTORS_FILE, GRAPH_FILE};
use super::{BuilderKind, CmdResult, Failure, IndexArgs};
use crate::descriptors::{DescriptorSet, KernelParams};
use crate::diffuse::{region_weights, PoolingSpec};
use crate::graph::{build_affinity, check_alpha, exact_knn, nn_descent_knn_with_stats, top_k_for, KnnLists, NnDescentParams};

/// Recall of `lists` against exact neighbors of up to `sample` random nodes.
fn sampled_recall(ds: &DescriptorSet, lists: &KnnLists, params: KernelParams, sample: usize, seed: u64) -> (f64, usize) {
    let n = ds.len();
    let sample = sample.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let nodes = rand::seq::index::sample(&mut rng, n, sample).into_vec();
    let mut scratch = Vec::new();
    let (mut hits, mut total) = (0usize, 0usize);
    for v in nodes {
        let truth = top_k_for(ds, ds.row(v), lists.k(), params, Some(v), &mut scratch);
        let approx = lists.neighbors(v);
        total += truth.len();
        hits += truth.iter().filter(|t| approx.iter().any(|a| a.index == t.index)).count();
    }
    (if total == 0 { 1.0 } else { hits as f64 / total as f64 }, sample)
}

pub fn run(args: &IndexArgs) -> CmdResult {
    check_alpha(args.alpha)?;
    let params = KernelParams::new(args.exponent)?;
    let pooling = PoolingSpec::gmp(args.lambda);
    pooling.validate()?;
    if args.k == 0 {
        return Err(Failure::Usage("--k must be positive".into()));
    }
    let ds = DescriptorSet::load(&args.descriptors)?;

    let (lists, builder) = match args.builder {
        BuilderKind::Exact => (exact_knn(&ds, args.k, params)?, BuilderInfo::Exact),
        BuilderKind::NnDescent => {
            let opts = NnDescentParams { rho: args.rho, max_iters: args.max_iters, delta: args.delta, seed: args.seed };
            let (lists, stats) = nn_descent_knn_with_stats(&ds, args.k, params, opts)?;
            let (recall, sample_size) = sampled_recall(&ds, &lists, params, args.recall_sample, args.seed);
            eprintln!("nn-descent: {} iterations, sampled recall {recall:.4}", stats.iterations);
            let info = BuilderInfo::NnDescent {
                rho: args.rho,
                delta: args.delta,
                max_iters: args.max_iters,
                seed: args.seed,
                iterations: stats.iterations,
                sampled_recall: recall,
                sample_size,
            };
            (lists, info)
        }
    };
    let affinity = build_affinity(&lists);
    let weights = region_weights(&ds, &pooling)?;

    fs::create_dir_all(&args.out)?;
    let ds_path = args.out.join(DESCRIPTORS_FILE);
    let graph_path = args.out.join(GRAPH_FILE);
    ds.save(&ds_path)?;
    affinity.save(&graph_path)?;

    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        format_version: 1,
        alpha: args.alpha,
        k: args.k,
        exponent: args.exponent,
        points: ds.len(),
        items: ds.items().len(),
        edges: affinity.edge_count(),
        builder,
        gmp: GmpInfo { lambda: args.lambda, weights },
        created_unix,
        descriptors: FileDigest { name: DESCRIPTORS_FILE.into(), sha256: sha256_file(&ds_path)? },
        graph: FileDigest { name: GRAPH_FILE.into(), sha256: sha256_file(&graph_path)? },
    };
    IndexBundle::write(&args.out, manifest)?;
    eprintln!(
        "indexed {} points in {} items, {} mutual edges",
        ds.len(),
        ds.items().len(),
        affinity.edge_count()
    );
    Ok(())
}
