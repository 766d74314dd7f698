//! Regression trees and the two ensembles built from them.
//!
//! Split search runs on pre-binned features: each feature's distinct
//! training values (at most [`MAX_BINS`] of them, quantile-thinned beyond
//! that) define candidate thresholds at the midpoints between neighbours.
//! A sample goes left when `value <= threshold`, so stored trees work on raw
//! feature values and need no bin tables at prediction time.

use serde::{Deserialize, Serialize};

use super::{ModelSpec, PredictError, N_FEATURES};
use crate::seed;

pub const MAX_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if z[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

/// Row-major bin indices plus the threshold between bin `k` and `k + 1`
/// of each feature.
pub(crate) struct Binned {
    bins: Vec<[u16; N_FEATURES]>,
    cuts: Vec<Vec<f64>>,
    /// Start of each feature's slots in a flat histogram.
    offsets: [usize; N_FEATURES + 1],
}

impl Binned {
    pub(crate) fn new(z: &[[f64; N_FEATURES]]) -> Self {
        let mut bins = vec![[0u16; N_FEATURES]; z.len()];
        let mut cuts = Vec::with_capacity(N_FEATURES);
        let mut offsets = [0; N_FEATURES + 1];
        for j in 0..N_FEATURES {
            let mut uniq: Vec<f64> = z.iter().map(|r| r[j]).collect();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            let feature_cuts: Vec<f64> = if uniq.len() <= MAX_BINS {
                uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let gaps = uniq.len() - 1;
                let mut c: Vec<f64> = (0..MAX_BINS - 1)
                    .map(|k| {
                        let i = (k * gaps) / (MAX_BINS - 1);
                        0.5 * (uniq[i] + uniq[i + 1])
                    })
                    .collect();
                c.dedup();
                c
            };
            for (b, r) in bins.iter_mut().zip(z) {
                b[j] = feature_cuts.partition_point(|&c| c < r[j]) as u16;
            }
            offsets[j + 1] = offsets[j] + feature_cuts.len() + 1;
            cuts.push(feature_cuts);
        }
        Self { bins, cuts, offsets }
    }

    #[cfg(test)]
    fn column(&self, j: usize) -> Vec<u16> {
        self.bins.iter().map(|b| b[j]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Best-first growth until this many leaves when set; depth-first otherwise.
    pub max_leaves: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// Tree-growing context; `hist` is reused by every node's split search.
struct Grower<'a> {
    binned: &'a Binned,
    target: &'a [f64],
    p: &'a GrowParams,
    hist: Vec<(f64, u32)>,
}

fn leaf_value(target: &[f64], rows: &[u32]) -> f64 {
    rows.iter().map(|&r| target[r as usize]).sum::<f64>() / rows.len() as f64
}

impl Grower<'_> {
    fn best_split(&mut self, rows: &[u32], depth: usize) -> Option<SplitCandidate> {
        let (binned, target, p) = (self.binned, self.target, self.p);
        let n = rows.len();
        let min_leaf = p.min_samples_leaf.max(1);
        if p.max_depth.is_some_and(|d| depth >= d) || n < p.min_samples_split.max(2) || n < 2 * min_leaf {
            return None;
        }
        let hist = &mut self.hist;
        hist.clear();
        hist.resize(binned.offsets[N_FEATURES], (0.0, 0));
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &r in rows {
            let t = target[r as usize];
            sum += t;
            sum_sq += t * t;
            let b = &binned.bins[r as usize];
            for f in 0..N_FEATURES {
                let slot = &mut hist[binned.offsets[f] + b[f] as usize];
                slot.0 += t;
                slot.1 += 1;
            }
        }
        let parent = sum * sum / n as f64;
        let node_sse = sum_sq - parent;
        if !(node_sse > 1e-12 * sum_sq.max(f64::MIN_POSITIVE)) {
            return None;
        }
        let mut best: Option<SplitCandidate> = None;
        for f in 0..N_FEATURES {
            let feature_hist = &hist[binned.offsets[f]..binned.offsets[f + 1]];
            let (mut sl, mut nl) = (0.0, 0usize);
            for (k, &(s, c)) in feature_hist[..feature_hist.len() - 1].iter().enumerate() {
                sl += s;
                nl += c as usize;
                let nr = n - nl;
                if nl < min_leaf || c == 0 {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let sr = sum - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 * node_sse && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate { feature: f, bin: k, gain });
                }
            }
        }
        best
    }

    /// Moves rows going left to the front; returns how many there are.
    fn partition(&self, rows: &mut [u32], split: &SplitCandidate) -> usize {
        let mut i = 0;
        for j in 0..rows.len() {
            if self.binned.bins[rows[j] as usize][split.feature] as usize <= split.bin {
                rows.swap(i, j);
                i += 1;
            }
        }
        i
    }

    fn split_node(&self, split: &SplitCandidate, left: usize, right: usize) -> Node {
        Node::Split { feature: split.feature, threshold: self.binned.cuts[split.feature][split.bin], left, right }
    }

    fn grow_depthwise(&mut self, tree: &mut RegressionTree, rows: &mut [u32], depth: usize) -> usize {
        let idx = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: leaf_value(self.target, rows) });
        if let Some(split) = self.best_split(rows, depth) {
            let n_left = self.partition(rows, &split);
            let (lrows, rrows) = rows.split_at_mut(n_left);
            let left = self.grow_depthwise(tree, lrows, depth + 1);
            let right = self.grow_depthwise(tree, rrows, depth + 1);
            tree.nodes[idx] = self.split_node(&split, left, right);
        }
        idx
    }

    fn grow_leafwise(&mut self, tree: &mut RegressionTree, rows: &mut [u32], max_leaves: usize) {
        tree.nodes.push(Node::Leaf { value: leaf_value(self.target, rows) });
        let root_split = self.best_split(rows, 0);
        let mut open = vec![OpenLeaf { node: 0, start: 0, end: rows.len(), depth: 0, split: root_split }];
        let mut n_leaves = 1;
        while n_leaves < max_leaves {
            // highest gain first; ties go to the earliest node
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.split.map(|s| (i, s.gain, l.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
            let Some((i, _, _)) = pick else { break };
            let leaf = open.swap_remove(i);
            let split = leaf.split.unwrap();
            let n_left = self.partition(&mut rows[leaf.start..leaf.end], &split);
            let mid = leaf.start + n_left;
            let left = tree.nodes.len();
            tree.nodes.push(Node::Leaf { value: leaf_value(self.target, &rows[leaf.start..mid]) });
            let right = tree.nodes.len();
            tree.nodes.push(Node::Leaf { value: leaf_value(self.target, &rows[mid..leaf.end]) });
            tree.nodes[leaf.node] = self.split_node(&split, left, right);
            let depth = leaf.depth + 1;
            for (node, start, end) in [(left, leaf.start, mid), (right, mid, leaf.end)] {
                let split = self.best_split(&rows[start..end], depth);
                open.push(OpenLeaf { node, start, end, depth, split });
            }
            n_leaves += 1;
        }
    }
}

pub(crate) fn grow(binned: &Binned, target: &[f64], rows: &mut [u32], p: &GrowParams) -> RegressionTree {
    let mut tree = RegressionTree { nodes: Vec::new() };
    let mut grower = Grower { binned, target, p, hist: Vec::new() };
    match p.max_leaves {
        None => {
            grower.grow_depthwise(&mut tree, rows, 0);
        }
        Some(max_leaves) => grower.grow_leafwise(&mut tree, rows, max_leaves),
    }
    tree
}

struct OpenLeaf {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
    split: Option<SplitCandidate>,
}

/// Bagged trees; the prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(spec: &ModelSpec, z: &[[f64; N_FEATURES]], y: &[f64]) -> Result<Self, PredictError> {
        let n_trees = spec.count("n_trees", 100)?;
        if n_trees == 0 {
            return Err(PredictError::BadHyperparameter { name: "n_trees".into(), reason: "must be >= 1".into() });
        }
        let params = GrowParams {
            max_depth: spec.limit("max_depth", None)?,
            min_samples_split: spec.count("min_samples_split", 2)?,
            min_samples_leaf: spec.count("min_samples_leaf", 1)?,
            max_leaves: None,
        };
        let bootstrap = spec.count("bootstrap", 1)? != 0;
        let binned = Binned::new(z);
        let n = y.len();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rows: Vec<u32> = if bootstrap {
                    let mut rng = seed::rng_from_seed(seed::derive_seed(spec.seed, &[b"forest", &(t as u64).to_le_bytes()]));
                    (0..n).map(|_| seed::bounded(&mut rng, n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                grow(&binned, y, &mut rows, &params)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn tree_predictions(&self, z: &[f64; N_FEATURES]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(z)).collect()
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.trees.iter().map(|t| t.predict(z)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Squared-error gradient boosting: `base + sum(trees)`, leaves already
/// multiplied by the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedModel {
    /// Fits the ensemble and returns the training MSE after each round
    /// (entry 0 is the constant base prediction).
    pub fn fit(spec: &ModelSpec, z: &[[f64; N_FEATURES]], y: &[f64]) -> Result<(Self, Vec<f64>), PredictError> {
        let leafwise = matches!(spec.family, super::Family::GbmLeafwise);
        let n_trees = spec.count("n_trees", 100)?;
        let learning_rate = spec.float("learning_rate", 0.1)?;
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(PredictError::BadHyperparameter {
                name: "learning_rate".into(),
                reason: format!("{learning_rate} not in (0, 1]"),
            });
        }
        let subsample = spec.float("subsample", 1.0)?;
        if !(subsample > 0.0 && subsample <= 1.0) {
            return Err(PredictError::BadHyperparameter { name: "subsample".into(), reason: format!("{subsample} not in (0, 1]") });
        }
        let params = if leafwise {
            let num_leaves = spec.count("num_leaves", 31)?;
            if num_leaves < 2 {
                return Err(PredictError::BadHyperparameter { name: "num_leaves".into(), reason: "must be >= 2".into() });
            }
            GrowParams {
                max_depth: spec.limit("max_depth", None)?,
                min_samples_split: 2,
                min_samples_leaf: spec.count("min_samples_leaf", 20)?,
                max_leaves: Some(num_leaves),
            }
        } else {
            GrowParams {
                max_depth: spec.limit("max_depth", Some(6))?,
                min_samples_split: 2,
                min_samples_leaf: spec.count("min_samples_leaf", 1)?,
                max_leaves: None,
            }
        };

        let n = y.len();
        let binned = Binned::new(z);
        let base = y.iter().sum::<f64>() / n as f64;
        let mut current = vec![base; n];
        let mse = |cur: &[f64]| y.iter().zip(cur).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        let mut trace = vec![mse(&current)];
        let n_sub = ((subsample * n as f64).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(n_trees);
        let mut residual = vec![0.0; n];
        for round in 0..n_trees {
            for i in 0..n {
                residual[i] = y[i] - current[i];
            }
            let mut rows: Vec<u32> = (0..n as u32).collect();
            if n_sub < n {
                let mut rng = seed::rng_from_seed(seed::derive_seed(spec.seed, &[b"boost", &(round as u64).to_le_bytes()]));
                for i in 0..n_sub {
                    let j = i + seed::bounded(&mut rng, n - i);
                    rows.swap(i, j);
                }
                rows.truncate(n_sub);
            }
            let mut tree = grow(&binned, &residual, &mut rows, &params);
            tree.scale_leaves(learning_rate);
            for (c, row) in current.iter_mut().zip(z) {
                *c += tree.predict(row);
            }
            trace.push(mse(&current));
            trees.push(tree);
        }
        Ok((Self { base, learning_rate, trees }, trace))
    }

    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(z)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{fit, Family, FeatureVector, HyperValue, LearnedState};

    fn wave(n: usize) -> (Vec<FeatureVector>, Vec<f64>) {
        let x: Vec<FeatureVector> = (0..n)
            .map(|i| {
                let a = 1.0 + ((i * 31) % 97) as f64 / 10.0;
                FeatureVector::new(a, [360, 540, 720, 1080, 1440, 2160][i % 6], [17, 22, 27, 32, 37, 42, 47][(i / 6) % 7])
            })
            .collect();
        let y = x
            .iter()
            .map(|f| f.anchor_value * (f.height as f64 / 360.0).powf(0.6) * (-0.1 * (f.qp as f64 - 47.0)).exp())
            .collect();
        (x, y)
    }

    fn z_of(x: &[FeatureVector]) -> Vec<[f64; N_FEATURES]> {
        x.iter().map(FeatureVector::to_array).collect()
    }

    #[test]
    fn single_stump_forest_predicts_training_mean() {
        let (x, y) = wave(50);
        let spec = ModelSpec::new(Family::RandomForest, 3)
            .with_int("n_trees", 1)
            .with_int("max_depth", 0)
            .with_int("bootstrap", 0);
        let p = fit(&spec, &x, &y).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for v in p.predict(&x).unwrap() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_is_the_mean_of_its_trees() {
        let (x, y) = wave(80);
        let spec = ModelSpec::new(Family::RandomForest, 11).with_int("n_trees", 7).with_int("max_depth", 4);
        let p = fit(&spec, &x, &y).unwrap();
        let LearnedState::Forest(forest) = &p.learned_state else { unreachable!() };
        assert_eq!(forest.trees.len(), 7);
        for f in &x {
            let z = p.scaler.transform(&f.to_array());
            let per_tree = forest.tree_predictions(&z);
            let mean = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
            assert_eq!(p.predict_one(f), mean);
            assert!(forest.trees.iter().all(|t| t.depth() <= 4));
        }
    }

    #[test]
    fn unlimited_depth_tree_interpolates_distinct_points() {
        let (x, y) = wave(60);
        let spec = ModelSpec::new(Family::RandomForest, 0)
            .with_int("n_trees", 1)
            .with("max_depth", HyperValue::Unbounded)
            .with_int("bootstrap", 0);
        let p = fit(&spec, &x, &y).unwrap();
        for (f, t) in x.iter().zip(&y) {
            assert!((p.predict_one(f) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let (x, y) = wave(40);
        let z = z_of(&x);
        let binned = Binned::new(&z);
        let mut rows: Vec<u32> = (0..40).collect();
        let p = GrowParams { max_depth: None, min_samples_split: 2, min_samples_leaf: 7, max_leaves: None };
        let tree = grow(&binned, &y, &mut rows, &p);
        let mut counts = vec![0usize; tree.nodes.len()];
        for row in &z {
            let mut idx = 0;
            while let Node::Split { feature, threshold, left, right } = &tree.nodes[idx] {
                idx = if row[*feature] <= *threshold { *left } else { *right };
            }
            counts[idx] += 1;
        }
        for (node, c) in tree.nodes.iter().zip(&counts) {
            if matches!(node, Node::Leaf { .. }) {
                assert!(*c >= 7, "leaf with {c} samples");
            }
        }
    }

    #[test]
    fn leafwise_growth_caps_leaves_and_depth() {
        let (x, y) = wave(200);
        let z = z_of(&x);
        let binned = Binned::new(&z);
        for (leaves, depth) in [(2, None), (5, None), (31, Some(3))] {
            let mut rows: Vec<u32> = (0..200).collect();
            let p = GrowParams { max_depth: depth, min_samples_split: 2, min_samples_leaf: 1, max_leaves: Some(leaves) };
            let tree = grow(&binned, &y, &mut rows, &p);
            assert!(tree.n_leaves() <= leaves);
            if let Some(d) = depth {
                assert!(tree.depth() <= d);
            } else {
                assert_eq!(tree.n_leaves(), leaves);
            }
        }
    }

    #[test]
    fn boosting_mse_never_increases() {
        let (x, y) = wave(200);
        let z = z_of(&x);
        for family in [Family::GbmDepthwise, Family::GbmLeafwise] {
            let spec = ModelSpec::new(family, 5)
                .with_int("n_trees", 60)
                .with_int("max_depth", 3)
                .with_float("learning_rate", 0.2)
                .with_int("num_leaves", 8);
            let (_, trace) = BoostedModel::fit(&spec, &z, &y).unwrap();
            assert_eq!(trace.len(), 61);
            assert!(trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{family}: {trace:?}");
            assert!(trace[60] < 0.1 * trace[0]);
        }
    }

    #[test]
    fn boosting_beats_the_mean_predictor() {
        let (x, y) = wave(200);
        let spec = ModelSpec::new(Family::GbmDepthwise, 0)
            .with_int("n_trees", 200)
            .with_float("learning_rate", 0.1)
            .with_int("max_depth", 3)
            .with_float("subsample", 0.8);
        let p = fit(&spec, &x, &y).unwrap();
        let yhat = p.predict(&x).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let rmse = crate::metrics::rmse(&y, &yhat).unwrap();
        let baseline = crate::metrics::rmse(&y, &vec![mean; y.len()]).unwrap();
        assert!(rmse < baseline, "{rmse} vs {baseline}");
    }

    #[test]
    fn fits_are_deterministic() {
        let (x, y) = wave(120);
        for family in [Family::RandomForest, Family::GbmDepthwise, Family::GbmLeafwise] {
            let spec = ModelSpec::new(family, 9).with_int("n_trees", 10).with_float("subsample", 0.8);
            assert_eq!(fit(&spec, &x, &y).unwrap(), fit(&spec, &x, &y).unwrap());
        }
    }

    #[test]
    fn many_distinct_values_are_thinned_to_max_bins() {
        let z: Vec<[f64; N_FEATURES]> = (0..1000).map(|i| [i as f64, 1.0, (i % 3) as f64]).collect();
        let binned = Binned::new(&z);
        assert_eq!(binned.cuts[0].len(), MAX_BINS - 1);
        assert!(binned.cuts[1].is_empty());
        assert_eq!(binned.cuts[2].len(), 2);
        assert!(binned.column(0).windows(2).all(|w| w[0] <= w[1]));
    }
}
