use tcc::data::{save_csv, Dataset};
use tcc::encoder::EncoderWeights;

use super::{create_dir, load_checkpoint, load_dataset};
use crate::args::ExportArgs;
use crate::error::{CliError, CliResult};
use crate::output;

pub fn run(args: ExportArgs) -> CliResult<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data, state.config.clusters)?;
    let features = state.encoder.features_of(dataset.x()).map_err(CliError::data)?;
    let assignments = state.encoder.assign_batch(dataset.x()).map_err(CliError::data)?;
    let mut histogram = vec![0usize; state.config.clusters];
    for a in &assignments {
        histogram[a.argmax()] += 1;
    }
    create_dir(&args.out)?;
    let embeddings = Dataset::new("embeddings", features, None).map_err(CliError::from_run)?;
    save_csv(&embeddings, args.out.join("embeddings.csv")).map_err(CliError::output)?;
    output::write(&args.out.join("histogram.csv"), &output::histogram_csv(&histogram))
}
