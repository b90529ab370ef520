use aif_router::harness::report::{render_summary, write_tables};
use aif_router::harness::{aggregate, emit_report, read_outcome_log, run_experiment, ExperimentSpec, RunReport};
use tracing::info;

use crate::args::{ReplayArgs, RunArgs};
use crate::Result;

/// Loads the spec and applies command-line overrides.
pub fn experiment_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    if let Some(d) = args.duration_s {
        spec.run_duration_s = Some(d);
    }
    if let Some(seeds) = &args.seeds {
        spec.seeds = seeds.clone();
        spec.runs_per_strategy = seeds.len();
    }
    if let Some(runs) = args.runs {
        spec.runs_per_strategy = runs;
    }
    if let Some(s) = &args.strategy {
        spec.strategies = s.clone();
    }
    spec.parallel |= args.parallel;
    spec.validate()?;
    Ok(spec)
}

/// Runs the experiment, writes every artifact to `args.out` and returns the summary text.
pub fn run(args: &RunArgs) -> Result<String> {
    let spec = experiment_spec(args)?;
    info!(
        scenario = %spec.scenario.display(),
        runs = spec.runs_per_strategy,
        strategies = ?spec.strategies,
        "starting experiment"
    );
    let runs = run_experiment(&spec)?;
    let reports: Vec<RunReport> = runs.iter().map(RunReport::from_run).collect();
    let agg = aggregate(&reports);
    let files = emit_report(&agg, &runs, &args.out)?;
    info!(files = files.len(), out = %args.out.display(), "reports written");
    Ok(render_summary(&agg))
}

/// Recomputes the tables from an outcome log; writes them when an output directory is given.
pub fn replay(args: &ReplayArgs) -> Result<String> {
    let agg = aggregate(&read_outcome_log(&args.log_file)?);
    if let Some(out) = &args.out {
        write_tables(&agg, out)?;
        info!(out = %out.display(), "reports written");
    }
    Ok(render_summary(&agg))
}
