use tcc::autodiff::OpKind;
use tcc::trainer::{CheckFixture, LossKind};

use crate::args::GradcheckArgs;
use crate::error::{CliError, CliResult};

pub fn run(args: GradcheckArgs) -> CliResult<()> {
    let config = args.config.resolve()?;
    let fault: Option<OpKind> = args
        .inject_fault
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(CliError::config)?;
    let mut worst: [(f64, usize, String); 3] = Default::default();
    for t in 0..args.trials {
        let fixture =
            CheckFixture::new(&config, args.input_dim, args.batch, config.seed + t).map_err(CliError::from_run)?;
        for (i, kind) in LossKind::ALL.into_iter().enumerate() {
            let report = fixture.check(kind, args.eps, fault).map_err(CliError::from_run)?;
            worst[i].1 += report.entries_checked;
            if report.max_relative_error >= worst[i].0 {
                worst[i].0 = report.max_relative_error;
                worst[i].2 = report
                    .worst_entry
                    .map(|(name, idx)| format!("{name}[{idx}]"))
                    .unwrap_or_default();
            }
        }
    }
    println!("loss,max_rel_error,entries,worst_entry,status");
    let mut failed = Vec::new();
    for (kind, (err, entries, entry)) in LossKind::ALL.into_iter().zip(&worst) {
        let ok = *err < args.tol;
        println!("{},{err:e},{entries},{entry},{}", kind.name(), if ok { "pass" } else { "fail" });
        if !ok {
            failed.push(kind.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{} above tolerance {:e}",
            failed.join(", "),
            args.tol
        )))
    }
}
