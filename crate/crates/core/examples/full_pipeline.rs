//! Runs every stage on a synthetic world: 100 videos on the 6x7 ladder,
//! full hyperparameter grids. Artifacts go to the directory given as the
//! first argument (default `pipeline_out`).

use std::path::PathBuf;

use greenladder::pipeline::{run_pipeline, RunConfig};
use greenladder::report::model_report_text;
use greenladder::report::policy_report_text;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into()));
    let cfg = RunConfig::default();
    let summary = run_pipeline(&cfg, 42, &out)?;
    println!("{}", model_report_text(&summary.train.evaluation));
    println!("{}", policy_report_text(&summary.policy.reports));
    let [synth, train, eval, analyze, report] = summary.stage_seconds;
    println!("seconds: synth {synth:.1}, train {train:.1}, evaluate {eval:.1}, analyze {analyze:.1}, report {report:.1}");
    println!("artifacts in {}", out.display());
    Ok(())
}
