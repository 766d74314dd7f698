//! Samples the synthetic world, writes it as CSV and prints per-resolution
//! aggregates. `cargo run --example synth_dataset -- [videos] [out.csv]`

use greenladder::harness::{synth_generate, SyntheticWorldParams};
use greenladder::model::ConfigSpace;
use greenladder::pipeline::{dataset_csv, write_file};
use greenladder::report::{aggregates, aggregates_csv, dataset_summary, Axis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n_videos = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let space = ConfigSpace::default_ladder();
    let ds = synth_generate(&SyntheticWorldParams { n_videos, ..Default::default() }, &space)?;
    if let Some(out) = args.next() {
        write_file(out.as_ref(), &dataset_csv(&ds))?;
        println!("wrote {out}");
    }
    print!("{}", dataset_summary(&ds));
    println!();
    print!("{}", aggregates_csv(&aggregates(&ds, Axis::Qp), Axis::Qp));
    Ok(())
}
