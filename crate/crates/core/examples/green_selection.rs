//! Trains quick predictors, then walks one held-out video through the rho
//! sweep: the feasible set grows and the chosen cell gets cheaper.

use greenladder::harness::{synth_generate, SyntheticWorldParams};
use greenladder::model::{ConfigSpace, QualityMetric};
use greenladder::predictors::{train_all_with, Family, Target, TrainOptions};
use greenladder::report::policy_report_text;
use greenladder::selector::{build_grid, evaluate_policy, select, Rho, DEFAULT_RHOS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = ConfigSpace::default_ladder();
    let ds = synth_generate(&SyntheticWorldParams { n_videos: 40, ..Default::default() }, &space)?;
    let (train, test) = ds.split_by_video(0.7, 42)?;
    let opts = TrainOptions {
        families: vec![Family::Linear, Family::GbmDepthwise],
        targets: vec![Target::EncEnergy, Target::DecEnergy, Target::Vmaf],
        quick: true,
        ..TrainOptions::new(42)
    };
    let models = train_all_with(&train, &space, &opts)?;

    let video = &test.video_ids()[0];
    let anchor = test.anchor_of(video, &space)?;
    let grid = build_grid(&models, &anchor, &space, QualityMetric::Vmaf)?;
    println!("video {video}");
    for rho in DEFAULT_RHOS {
        let s = select(&grid, Rho::new(rho)?)?;
        println!(
            "  rho {rho:<4} -> {:<12} predicted {:.4} Wh, vmaf {:.2}, {} feasible",
            s.chosen.to_string(),
            s.predicted.e_total_hat,
            s.predicted.q_hat,
            s.feasible.len()
        );
    }

    let rhos: Vec<Rho> = DEFAULT_RHOS.iter().map(|&r| Rho::new(r)).collect::<Result<_, _>>()?;
    let eval = evaluate_policy(&test, &models, &space, &rhos, QualityMetric::Vmaf)?;
    println!();
    print!("{}", policy_report_text(&eval.reports));
    Ok(())
}
