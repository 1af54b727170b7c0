use std::path::Path;

use tcc::data::Dataset;
use tcc::trainer::TrainState;

use crate::args::{Cli, Command, DataArgs};
use crate::error::{CliError, CliResult};

mod assign;
mod eval;
mod export;
mod gradcheck;
mod train;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Assign(a) => assign::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Export(a) => export::run(a),
    }
}

pub(crate) fn load_dataset(args: &DataArgs, clusters: usize) -> CliResult<Dataset> {
    let spec = args.spec()?;
    spec.load(&args.params(clusters)).map_err(|e| match e {
        tcc::Error::Config(_) => CliError::config(e),
        _ => CliError::data(e),
    })
}

pub(crate) fn load_checkpoint(path: &Path) -> CliResult<TrainState> {
    TrainState::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
