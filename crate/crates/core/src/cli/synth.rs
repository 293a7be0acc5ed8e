use std::fs::{self, File};
use std::io::{BufWriter, Write};

use super::{CmdResult, CrescentArgs, Failure, PlantedArgs};
use crate::descriptors::{DescriptorSet, KernelParams};
use crate::diffuse::build_query_vector;
use crate::eval::synth::{generate_manifolds, generate_planted, PlantedSpec, SyntheticManifoldSpec, SyntheticManifolds};
use crate::graph::{build_affinity, exact_knn, normalize};
use crate::solver::{solve_cg, SolveOptions};

pub const DATABASE_FILE: &str = "database.mrds";
pub const QUERIES_FILE: &str = "queries.mrds";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SIZES_FILE: &str = "sizes.json";
pub const SPEC_FILE: &str = "spec.json";

fn contour_grid(sm: &SyntheticManifolds, query: &[f64], args: &CrescentArgs) -> Result<Vec<([f64; 2], f64)>, Failure> {
    let params = KernelParams::default();
    let ds = &sm.descriptors;
    let lists = exact_knn(ds, args.contour_k, params)?;
    let g = normalize(&build_affinity(&lists), args.alpha)?;
    let y = build_query_vector(ds, &[query], args.contour_k, params, ds.len())?;
    let report = solve_cg(&g, &y.to_dense(), &SolveOptions::default().with_tolerance(1e-8, 2000))?;
    if !report.converged {
        return Err(Failure::Numerical("contour diffusion did not converge".into()));
    }
    Ok(sm.grid_scores(&report.solution, params, args.contour_k, args.contour_resolution)?)
}

pub fn crescents(args: &CrescentArgs) -> CmdResult {
    if args.queries == 0 {
        return Err(Failure::Usage("--queries must be positive".into()));
    }
    let mut spec = SyntheticManifoldSpec::two_crescents(args.count, args.sigma, args.seed);
    spec.noise_points = args.noise_points;
    let sm = generate_manifolds(&spec)?;

    let per_label = [args.queries.div_ceil(2), args.queries / 2];
    let mut sampled = Vec::new();
    for (label, &count) in per_label.iter().enumerate() {
        let seed = args.seed.wrapping_add(1 + label as u64);
        sampled.push(sm.sample_queries(label, count, seed)?);
    }
    let mut data = Vec::with_capacity(args.queries * 3);
    let mut labels = Vec::with_capacity(args.queries);
    for q in 0..args.queries {
        let label = q % 2;
        data.extend_from_slice(&sm.lift(sampled[label][q / 2]));
        labels.push((q as u32, label));
    }
    let queries = DescriptorSet::single_region(data, 3)?;

    fs::create_dir_all(&args.out)?;
    sm.descriptors.save(args.out.join(DATABASE_FILE))?;
    queries.save(args.out.join(QUERIES_FILE))?;
    sm.ground_truth(&labels).save(args.out.join(GROUND_TRUTH_FILE))?;
    fs::write(args.out.join(SPEC_FILE), serde_json::to_string_pretty(&spec).map_err(crate::error::Error::from)?)?;

    if let Some(path) = &args.contours {
        let grid = contour_grid(&sm, queries.row(0), args)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,y,score")?;
        for (p, s) in grid {
            writeln!(w, "{:.6},{:.6},{:.9e}", p[0], p[1], s)?;
        }
        w.flush()?;
    }
    eprintln!("wrote {} points and {} queries to {}", sm.descriptors.len(), args.queries, args.out.display());
    Ok(())
}

pub fn planted(args: &PlantedArgs) -> CmdResult {
    let spec = PlantedSpec {
        classes: args.classes,
        items_per_class: args.items_per_class,
        distractors: args.distractors,
        regions_per_item: args.regions,
        dim: args.dim,
        queries_per_class: args.queries_per_class,
        seed: args.seed,
        ..PlantedSpec::default()
    };
    let bench = generate_planted(&spec)?;
    fs::create_dir_all(&args.out)?;
    bench.database.save(args.out.join(DATABASE_FILE))?;
    bench.queries.save(args.out.join(QUERIES_FILE))?;
    bench.ground_truth.save(args.out.join(GROUND_TRUTH_FILE))?;
    fs::write(args.out.join(SIZES_FILE), serde_json::to_string_pretty(&bench.sizes).map_err(crate::error::Error::from)?)?;
    fs::write(args.out.join(SPEC_FILE), serde_json::to_string_pretty(&spec).map_err(crate::error::Error::from)?)?;
    eprintln!(
        "wrote {} items ({} regions) and {} queries to {}",
        bench.database.items().len(),
        bench.database.len(),
        bench.queries.items().len(),
        args.out.display()
    );
    Ok(())
}
