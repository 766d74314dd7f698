//! Numerical checks of the learners: MLP backpropagation against central
//! differences, and the boosting training-loss trace.

use greenladder::predictors::{mlp_gradient_check, BoostedModel, Family, FeatureVector, ModelSpec};
use greenladder::seed::{rng_from_seed, unit_f64};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(7);
    let x: Vec<FeatureVector> = (0..24)
        .map(|i| FeatureVector::new(1.0 + 10.0 * unit_f64(&mut rng), [360, 720, 1080, 2160][i % 4], [17, 32, 47][i % 3]))
        .collect();
    let y: Vec<f64> = x.iter().map(|f| f.anchor_value * f.height as f64 / 1000.0 - f.qp as f64 / 20.0).collect();

    for (h_size, h_num) in [(4, 1), (16, 1), (8, 2)] {
        let spec = ModelSpec::new(Family::Mlp, 1).with_int("h_size", h_size).with_int("h_num", h_num);
        let err = mlp_gradient_check(&spec, &x, &y)?;
        println!("mlp {h_size}x{h_num}: max relative gradient error {err:.2e}");
    }

    let z: Vec<[f64; 3]> = x.iter().map(FeatureVector::to_array).collect();
    let spec = ModelSpec::new(Family::GbmDepthwise, 1)
        .with_int("n_trees", 20)
        .with_int("max_depth", 3)
        .with_float("learning_rate", 0.3)
        .with_float("subsample", 1.0);
    let (_, trace) = BoostedModel::fit(&spec, &z, &y)?;
    let shown: Vec<String> = trace.iter().step_by(5).map(|m| format!("{m:.4}")).collect();
    println!("gbm training mse every 5 rounds: {}", shown.join(" "));
    Ok(())
}
