use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{CmdResult, EvalArgs, Failure};
use crate::eval::{evaluate_rankings, mean_average_precision, rank_gain_report, GroundTruth, DEFAULT_SIZE_EDGES};

#[derive(Deserialize)]
struct RankingLine {
    query_id: u32,
    order: Vec<u32>,
}

/// Reads `query` output into query id → item order.
pub fn read_rankings(path: &Path) -> Result<BTreeMap<u32, Vec<u32>>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RankingLine = serde_json::from_str(&line)
            .map_err(|e| Failure::Data(format!("{} line {}: {e}", path.display(), lineno + 1)))?;
        if out.insert(parsed.query_id, parsed.order).is_some() {
            return Err(Failure::Data(format!("{}: query {} appears twice", path.display(), parsed.query_id)));
        }
    }
    if out.is_empty() {
        return Err(Failure::Data(format!("{} holds no rankings", path.display())));
    }
    Ok(out)
}

pub fn run(args: &EvalArgs) -> CmdResult {
    let rankings = read_rankings(&args.rankings)?;
    let gt = GroundTruth::load(&args.ground_truth)?;
    let per_query = evaluate_rankings(&rankings, &gt)?;
    let aps: Vec<f64> = per_query.iter().map(|p| p.1).collect();
    let map = mean_average_precision(&aps)?;
    println!("mAP {map:.6}");

    if let Some(path) = &args.per_query {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "query_id,ap")?;
        for (id, ap) in &per_query {
            writeln!(w, "{id},{ap:.6}")?;
        }
        w.flush()?;
    }

    if let (Some(base), Some(sizes), Some(report)) = (&args.baseline, &args.sizes, &args.report) {
        let baseline = read_rankings(base)?;
        let text = fs::read_to_string(sizes)?;
        let size_of: BTreeMap<u32, f64> =
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", sizes.display())))?;
        let gain = rank_gain_report(&baseline, &rankings, &gt, &size_of, &DEFAULT_SIZE_EDGES)?;
        if gain.missing_sizes > 0 {
            super::warn(format_args!("{} positives have no size and were skipped", gain.missing_sizes));
        }
        let mut w = BufWriter::new(File::create(report)?);
        gain.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}
