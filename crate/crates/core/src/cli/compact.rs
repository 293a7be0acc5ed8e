use super::{CmdResult, CompactArgs};
use crate::compact::{compact_dataset, GmmSpec};
use crate::descriptors::DescriptorSet;

pub fn run(args: &CompactArgs) -> CmdResult {
    let spec = GmmSpec { components: args.components, max_em_iters: args.max_em_iters, tol: args.tol, seed: args.seed };
    let ds = DescriptorSet::load(&args.descriptors)?;
    let out = compact_dataset(&ds, &spec)?;
    out.save(&args.out)?;
    eprintln!("compacted {} regions into {}", ds.len(), out.len());
    Ok(())
}
