use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::IndexBundle;
use super::{warn, CmdResult, Failure, PoolingArg, QueryArgs, SolverArg};
use crate::descriptors::{DescriptorSet, KernelParams};
use crate::diffuse::{build_query_vector, knn_ranking, rank_with_weights, region_weights, rerank_truncated, PoolingSpec};
use crate::error::Result;
use crate::graph::{normalize, SparseAffinity};
use crate::solver::{SolveMethod, SolveOptions};

/// One output line of `query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLine {
    pub query_id: u32,
    pub order: Vec<u32>,
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub elapsed_ms: f64,
}

struct Engine {
    ds: DescriptorSet,
    affinity: SparseAffinity,
    weights: Vec<f64>,
    params: KernelParams,
    alpha: f64,
    k_query: usize,
    global_top_k: usize,
    shortlist: usize,
    opts: SolveOptions,
    globals: Option<DescriptorSet>,
}

impl Engine {
    fn rank_one(&self, g: Option<&crate::graph::NormalizedGraph>, regions: &[&[f64]], global: Option<&[f64]>) -> Result<(Vec<u32>, Vec<f64>, usize, f64, bool)> {
        let y = build_query_vector(&self.ds, regions, self.k_query, self.params, self.global_top_k)?;
        let result = match (g, &self.globals, global) {
            (Some(g), _, _) => rank_with_weights(g, &self.ds, &y, &self.weights, &self.opts)?,
            (None, Some(globals), Some(q)) => {
                let initial = knn_ranking(globals, q, self.params)?.order;
                rerank_truncated(&self.affinity, &self.ds, &initial, self.shortlist, &y, &self.weights, self.alpha, &self.opts)?
            }
            _ => unreachable!("engine has either a full graph or global descriptors"),
        };
        let scores = result.ordered_scores();
        let report = result.solve_report.expect("diffusion rankings carry a solve report");
        Ok((result.order, scores, report.iterations_used, report.final_relative_residual, report.converged))
    }
}

pub fn run(args: &QueryArgs) -> CmdResult {
    let bundle = IndexBundle::open(&args.index)?;
    let m = &bundle.manifest;
    let ds = DescriptorSet::load(bundle.descriptors_path())?;
    let affinity = SparseAffinity::load(bundle.graph_path())?;
    if ds.len() != affinity.n() || ds.len() != m.points {
        return Err(Failure::Data("descriptor, graph and manifest sizes disagree".into()));
    }
    let params = KernelParams::new(m.exponent)?;

    let alpha = match args.alpha {
        Some(a) if a != m.alpha => {
            warn(format_args!("--alpha {a} overrides the index value {}", m.alpha));
            a
        }
        Some(a) => a,
        None => m.alpha,
    };
    let pooling = match args.pooling {
        PoolingArg::Sum => PoolingSpec::sum(),
        PoolingArg::Gmp => PoolingSpec::gmp(args.lambda.unwrap_or(m.gmp.lambda)),
    };
    pooling.validate()?;
    let weights = if args.pooling == PoolingArg::Gmp && pooling.lambda == m.gmp.lambda && m.gmp.weights.len() == ds.len() {
        m.gmp.weights.clone()
    } else {
        if args.pooling == PoolingArg::Gmp && pooling.lambda != m.gmp.lambda {
            warn(format_args!("--lambda {} overrides the index value {}; recomputing weights", pooling.lambda, m.gmp.lambda));
        }
        region_weights(&ds, &pooling)?
    };

    let mut k_query = args.k_query;
    if k_query == 0 {
        return Err(Failure::Usage("--k-query must be positive".into()));
    }
    if k_query > ds.len() {
        warn(format_args!("--k-query {k_query} exceeds the {} indexed points; using {}", ds.len(), ds.len()));
        k_query = ds.len();
    }
    let global_top_k = args.global_top_k.unwrap_or(k_query);
    if global_top_k == 0 {
        return Err(Failure::Usage("--global-top-k must be positive".into()));
    }
    let method = match args.solver {
        SolverArg::Cg => SolveMethod::Cg,
        SolverArg::Jacobi => SolveMethod::JacobiIteration,
        SolverArg::Dense => SolveMethod::DenseDirect,
    };
    let opts = SolveOptions::default().with_method(method).with_tolerance(args.tol, args.max_iters);
    opts.validate()?;

    let queries = DescriptorSet::load(&args.queries)?;
    if queries.dim() != ds.dim() {
        return Err(Failure::Usage(format!(
            "query dimension {} does not match the index dimension {}",
            queries.dim(),
            ds.dim()
        )));
    }

    let full = args.shortlist == 0 || args.shortlist >= ds.items().len();
    let graph = if full { Some(normalize(&affinity, alpha)?) } else { None };
    let (globals, query_globals) = if full {
        (None, None)
    } else {
        crate::graph::check_alpha(alpha)?;
        (Some(ds.global_descriptors()?), Some(queries.global_descriptors()?))
    };
    let engine = Engine { ds, affinity, weights, params, alpha, k_query, global_top_k, shortlist: args.shortlist, opts, globals };

    let lines: Vec<Result<QueryLine>> = queries
        .items()
        .par_iter()
        .enumerate()
        .map(|(qi, item)| {
            let start = Instant::now();
            let regions: Vec<&[f64]> = item.rows.iter().map(|&r| queries.row(r)).collect();
            let global = query_globals.as_ref().map(|g| g.row(qi));
            let (mut order, mut scores, iterations, residual, converged) = engine.rank_one(graph.as_ref(), &regions, global)?;
            if let Some(top) = args.top {
                order.truncate(top);
                scores.truncate(top);
            }
            let elapsed_ms = if args.no_timing { 0.0 } else { start.elapsed().as_secs_f64() * 1e3 };
            Ok(QueryLine { query_id: item.id, order, scores, iterations, residual, converged, elapsed_ms })
        })
        .collect();

    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut unconverged = Vec::new();
    for line in lines {
        let line = line?;
        if !line.converged {
            unconverged.push(line.query_id.to_string());
        }
        let text = serde_json::to_string(&line).map_err(crate::error::Error::from)?;
        writeln!(sink, "{text}")?;
    }
    sink.flush()?;
    if !unconverged.is_empty() {
        let msg = format!("solver did not converge for queries {}", unconverged.join(", "));
        if args.strict {
            return Err(Failure::Numerical(msg));
        }
        warn(msg);
    }
    Ok(())
}
