use tcc::metrics::{acc, ari, nmi, LabeledPartition};
use tcc::trainer::infer;

use super::{load_checkpoint, load_dataset};
use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};

pub fn run(args: EvalArgs) -> CliResult<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data, state.config.clusters)?;
    let truth = dataset
        .labels()
        .ok_or_else(|| CliError::Data(format!("`{}` has no labels; ACC needs ground truth", dataset.name)))?;
    let labels = infer(&state.encoder, dataset.x()).map_err(CliError::data)?;
    let p = LabeledPartition::new(labels, truth.to_vec()).map_err(CliError::data)?;
    println!("{},{},{}", acc(&p), nmi(&p), ari(&p));
    Ok(())
}
