//! Hyperparameter search spaces per model family.

use super::cv::Grid;
use super::{Family, HyperValue};

fn ints(v: &[i64]) -> Vec<HyperValue> {
    v.iter().map(|&i| HyperValue::Int(i)).collect()
}

fn floats(v: &[f64]) -> Vec<HyperValue> {
    v.iter().map(|&f| HyperValue::Float(f)).collect()
}

fn grid(entries: Vec<(&str, Vec<HyperValue>)>) -> Grid {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Full search space explored for each family.
pub fn default_grid(family: Family) -> Grid {
    match family {
        Family::Linear => Grid::new(),
        Family::Ridge => grid(vec![("alpha", floats(&[0.1, 1.0, 10.0, 100.0]))]),
        Family::RandomForest => grid(vec![
            ("n_trees", ints(&[50, 100, 200])),
            ("max_depth", vec![HyperValue::Unbounded, HyperValue::Int(10), HyperValue::Int(20)]),
            ("min_samples_split", ints(&[2, 5])),
            ("min_samples_leaf", ints(&[1, 2])),
        ]),
        Family::GbmDepthwise => grid(vec![
            ("n_trees", ints(&[50, 100, 200])),
            ("max_depth", ints(&[3, 6, 9])),
            ("learning_rate", floats(&[0.01, 0.1, 0.2])),
            ("subsample", floats(&[0.8, 1.0])),
        ]),
        Family::GbmLeafwise => grid(vec![
            ("n_trees", ints(&[50, 100, 200])),
            ("max_depth", ints(&[3, 6, 9])),
            ("learning_rate", floats(&[0.01, 0.1, 0.2])),
            ("num_leaves", ints(&[31, 50, 100])),
        ]),
        Family::Mlp => grid(vec![
            ("h_size", ints(&[64, 128, 256])),
            ("h_num", ints(&[1, 2])),
            ("learning_rate", floats(&[0.001, 0.01])),
        ]),
    }
}

/// A small slice of [`default_grid`] for demos and smoke runs.
pub fn quick_grid(family: Family) -> Grid {
    match family {
        Family::Linear => Grid::new(),
        Family::Ridge => grid(vec![("alpha", floats(&[0.1, 10.0]))]),
        Family::RandomForest => grid(vec![
            ("n_trees", ints(&[50])),
            ("max_depth", vec![HyperValue::Unbounded, HyperValue::Int(10)]),
        ]),
        Family::GbmDepthwise => grid(vec![
            ("n_trees", ints(&[100])),
            ("max_depth", ints(&[3, 6])),
            ("learning_rate", floats(&[0.1])),
            ("subsample", floats(&[0.8])),
        ]),
        Family::GbmLeafwise => grid(vec![
            ("n_trees", ints(&[100])),
            ("max_depth", ints(&[6])),
            ("learning_rate", floats(&[0.1])),
            ("num_leaves", ints(&[31])),
        ]),
        Family::Mlp => grid(vec![
            ("h_size", ints(&[64])),
            ("h_num", ints(&[1])),
            ("learning_rate", floats(&[0.01])),
        ]),
    }
}
