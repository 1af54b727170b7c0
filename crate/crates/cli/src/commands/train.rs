use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use tcc::data::Dataset;
use tcc::encoder::EncoderWeights;
use tcc::trainer::{TrainState, Trainer, METRICS_HEADER};

use super::{create_dir, load_checkpoint, load_dataset};
use crate::args::TrainArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{config_map, fingerprint, now, DatasetInfo, RunManifest, MANIFEST_FORMAT};
use crate::output;

pub fn run(args: TrainArgs) -> CliResult<()> {
    let resumed = match &args.resume {
        Some(path) => {
            let mut state = load_checkpoint(path)?;
            if let Some(e) = args.config.epochs {
                state.config.max_epochs = e;
            }
            Some(state)
        }
        None => None,
    };
    let config = match &resumed {
        Some(state) => state.config.clone(),
        None => args.config.resolve()?,
    };
    let dataset = load_dataset(&args.data, config.clusters)?;
    let mut trainer = match resumed {
        Some(state) => Trainer::resume(state, &dataset),
        None => Trainer::new(&config, &dataset),
    }
    .map_err(CliError::from_run)?;

    let out = args.out.as_path();
    create_dir(out)?;
    let resolved = trainer.state().config.clone();
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_map(&resolved),
        dataset: dataset_info(&args.data, &dataset, resolved.clusters),
        seed: resolved.seed,
        started: now(),
        finished: None,
        resumed_from: args.resume.as_ref().map(|p| p.display().to_string()),
    };
    manifest.save(&out.join("manifest.json"))?;
    output::write(&out.join("config.txt"), &resolved.to_kv())?;

    let append = args.resume.is_some();
    let mut metrics = open_log(&out.join("metrics.csv"), METRICS_HEADER, append)?;
    let mut timing = open_log(&out.join("timing.csv"), "epoch,seconds", append)?;
    let every = resolved.checkpoint_every;
    let quiet = args.quiet;
    let result = trainer.run(|report, state| {
        writeln!(metrics, "{}", report.csv_row())?;
        writeln!(timing, "{},{}", report.epoch, report.seconds)?;
        metrics.flush()?;
        timing.flush()?;
        if every > 0 && report.epoch % every as u64 == 0 {
            state.save(out.join(format!("epoch-{:04}.ckpt", report.epoch)))?;
        }
        if !quiet {
            let scores = report
                .scores
                .map(|s| format!(" acc {:.4} nmi {:.4} ari {:.4}", s.acc, s.nmi, s.ari))
                .unwrap_or_default();
            println!(
                "epoch {:>4} loss {:.5} (l1 {:.5} l2 {:.5}) histogram {:?}{scores}",
                report.epoch, report.total, report.l1, report.l2, report.histogram
            );
        }
        Ok(())
    });
    if let Err(e) = result {
        let err = CliError::from_run(e);
        if matches!(err, CliError::Numeric(_)) {
            // The state is left as it was before the failing step.
            save_state(trainer.state(), &out.join("abort.ckpt"))?;
        }
        return Err(err);
    }

    let state = trainer.state();
    save_state(state, &out.join("final.ckpt"))?;
    let assignments = state.encoder.assign_batch(dataset.x()).map_err(CliError::from_run)?;
    output::write(&out.join("assignments.csv"), &output::assignments_csv(&assignments))?;
    manifest.finished = Some(now());
    manifest.save(&out.join("manifest.json"))?;
    if !quiet {
        println!(
            "finished after {} epochs ({} steps{}); wrote {}",
            state.counters.epoch,
            state.counters.step,
            if state.converged { ", converged" } else { "" },
            out.display()
        );
    }
    Ok(())
}

fn dataset_info(args: &crate::args::DataArgs, dataset: &Dataset, clusters: usize) -> DatasetInfo {
    let p = args.params(clusters);
    let generator = if args.dataset.starts_with("csv:") {
        Default::default()
    } else {
        [
            ("n", p.n.to_string()),
            ("classes", p.classes.to_string()),
            ("noise", p.noise.to_string()),
            ("spread", p.spread.to_string()),
            ("seed", p.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    };
    DatasetInfo {
        spec: args.dataset.clone(),
        name: dataset.name.clone(),
        n: dataset.len(),
        dim: dataset.dim(),
        labeled: dataset.labels().is_some(),
        fingerprint: fingerprint(dataset),
        generator,
    }
}

fn open_log(path: &Path, header: &str, append: bool) -> CliResult<File> {
    let existing = append && path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(existing)
        .truncate(!existing)
        .open(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    if !existing {
        writeln!(file, "{header}").map_err(CliError::output)?;
    }
    Ok(file)
}

fn save_state(state: &TrainState, path: &Path) -> CliResult<()> {
    state
        .save(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
