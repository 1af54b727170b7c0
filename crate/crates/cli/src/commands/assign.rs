use tcc::data::load_csv;
use tcc::encoder::EncoderWeights;

use super::load_checkpoint;
use crate::args::AssignArgs;
use crate::error::{CliError, CliResult};
use crate::output;

pub fn run(args: AssignArgs) -> CliResult<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let data = load_csv(&args.input).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let assignments = state.encoder.assign_batch(data.x()).map_err(CliError::data)?;
    output::write(&args.output, &output::assignments_csv(&assignments))
}
