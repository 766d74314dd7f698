//! Cross-configuration correlation, the cheapest well-correlated anchors,
//! and an anchor sweep with a fast model family.

use greenladder::analysis::{anchor_ranking, anchor_sweep, default_candidates, pairwise_correlation, SweepOptions};
use greenladder::harness::{synth_generate, SyntheticWorldParams};
use greenladder::model::ConfigSpace;
use greenladder::predictors::Family;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = ConfigSpace::default_ladder();
    let ds = synth_generate(&SyntheticWorldParams { n_videos: 50, ..Default::default() }, &space)?;

    let cm = pairwise_correlation(&ds, &space)?;
    let min = cm.values.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    println!("{0}x{0} encode-time correlation matrix, min {min:.4}", cm.configs.len());

    println!("cheapest anchors:");
    for row in anchor_ranking(&cm, &ds)?.iter().take(5) {
        println!("  {:<12} mean time {:>8.2} s  mean corr {:.4}", row.rep.to_string(), row.mean_time, row.mean_corr);
    }

    let mut opts = SweepOptions::new(Family::GbmDepthwise, 42);
    opts.train.quick = true;
    println!("sweep ({}):", opts.family);
    for row in anchor_sweep(&ds, &space, &default_candidates(), &opts)? {
        println!("  {:<12} anchor time {:>8.2} s  test R2 {:.4}", row.anchor.to_string(), row.mean_anchor_time, row.r2);
    }
    Ok(())
}
