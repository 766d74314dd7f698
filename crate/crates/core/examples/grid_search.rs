//! Times the full grid search of each family on a synthetic training split.

use std::time::Instant;

use greenladder::harness::{synth_generate, SyntheticWorldParams};
use greenladder::model::ConfigSpace;
use greenladder::predictors::{build_features, grid_search_cv, grids::default_grid, Family, Target};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = ConfigSpace::default_ladder();
    let ds = synth_generate(&SyntheticWorldParams::default(), &space)?;
    let (train, _) = ds.split_by_video(0.7, 42)?;
    let (x, y) = build_features(&train, &space, Target::EncEnergy)?;
    for family in Family::ALL {
        let t = Instant::now();
        let cv = grid_search_cv(family, &default_grid(family), &x, &y, 5, 42)?;
        println!("{family:>14}: r2={:.4} {} in {:.1}s", cv.mean_score, cv.best_spec.describe(), t.elapsed().as_secs_f64());
    }
    Ok(())
}
