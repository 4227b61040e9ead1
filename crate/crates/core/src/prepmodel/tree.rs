//! Histogram-based regression trees on logistic-loss gradients.
//!
//! Numeric features are pre-binned into at most 256 histogram bins;
//! categorical features (including the stratum indicator) use one bin per
//! level and split one level against the rest, which carves the same
//! partitions as one-hot indicator splits.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, FeatureValues};

/// One hyperparameter setting for the boosted learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub max_depth: u32,
    pub eta: f64,
    pub min_child_weight: f64,
    /// minimum loss reduction required to keep a split
    pub gamma: f64,
    /// cap on |leaf value| before the learning rate; 0 disables
    pub max_delta_step: f64,
    /// L2 penalty on leaf values
    pub lambda: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            max_depth: 4,
            eta: 0.1,
            min_child_weight: 1.0,
            gamma: 0.0,
            max_delta_step: 0.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitKind {
    /// go left iff value <= threshold
    NumericLe(f64),
    /// go left iff the categorical code equals this level
    CategoricalEq(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        kind: SplitKind,
        left: u32,
        right: u32,
    },
    Leaf {
        /// log-odds increment before the learning rate is applied
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Raw leaf value for one row of an encoded matrix.
    pub fn predict_row(&self, matrix: &FeatureMatrix, row: usize) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, kind, left, right } => {
                    let goes_left = match (&matrix.columns[*feature as usize], kind) {
                        (FeatureValues::Numeric(v), SplitKind::NumericLe(t)) => v[row] <= *t,
                        (FeatureValues::Categorical { codes, .. }, SplitKind::CategoricalEq(k)) => {
                            codes[row] == *k
                        }
                        _ => unreachable!("split kind matches feature kind by construction"),
                    };
                    at = if goes_left { *left } else { *right } as usize;
                }
            }
        }
    }
}

/// Pre-binned training matrix.
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub features: Vec<BinnedFeature>,
}

pub struct BinnedFeature {
    /// per-row bin index
    pub bins: Vec<u16>,
    pub n_bins: u16,
    /// for numeric features: splitting after bin `b` tests `value <= cuts[b]`
    pub cuts: Vec<f64>,
    pub categorical: bool,
}

/// The number of histogram bins used for numeric features.
pub const MAX_BINS: usize = 256;

/// Candidate thresholds for a numeric column: midpoints between adjacent
/// distinct values, thinned to at most `max_bins - 1` quantile cuts.
pub fn numeric_cuts(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return Vec::new();
    }
    let mut cuts = Vec::new();
    if sorted.len() <= max_bins {
        for w in sorted.windows(2) {
            cuts.push(0.5 * (w[0] + w[1]));
        }
    } else {
        for k in 1..max_bins {
            let idx = k * sorted.len() / max_bins;
            cuts.push(0.5 * (sorted[idx - 1] + sorted[idx]));
        }
        cuts.dedup();
    }
    cuts
}

fn bin_of(cuts: &[f64], v: f64) -> u16 {
    cuts.partition_point(|&t| t < v) as u16
}

/// Bin an encoded matrix for training. Cut points come from the matrix
/// itself (the training data).
pub fn bin_matrix(matrix: &FeatureMatrix) -> BinnedMatrix {
    let features = matrix
        .columns
        .iter()
        .map(|col| match col {
            FeatureValues::Numeric(values) => {
                let cuts = numeric_cuts(values, MAX_BINS);
                let bins = values.iter().map(|&v| bin_of(&cuts, v)).collect();
                BinnedFeature {
                    bins,
                    n_bins: cuts.len() as u16 + 1,
                    cuts,
                    categorical: false,
                }
            }
            FeatureValues::Categorical { codes, n_levels } => BinnedFeature {
                bins: codes.iter().map(|&c| c as u16).collect(),
                // one extra bin for codes unseen at training time
                n_bins: *n_levels as u16 + 1,
                cuts: Vec::new(),
                categorical: true,
            },
        })
        .collect();
    BinnedMatrix {
        n_rows: matrix.n_rows,
        features,
    }
}

struct SplitCandidate {
    feature: u32,
    kind: SplitKind,
    /// bin predicate for partitioning training rows
    left_bin: LeftBin,
    gain: f64,
}

enum LeftBin {
    AtMost(u16),
    Equal(u16),
}

fn leaf_value(g: f64, h: f64, params: &BoostParams) -> f64 {
    let mut w = -g / (h + params.lambda);
    if params.max_delta_step > 0.0 {
        w = w.clamp(-params.max_delta_step, params.max_delta_step);
    }
    w
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &BoostParams) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + params.lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - params.gamma
}

fn best_split(
    data: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
    params: &BoostParams,
) -> Option<SplitCandidate> {
    let mut total_g = 0.0;
    let mut total_h = 0.0;
    for &r in rows {
        total_g += grad[r as usize];
        total_h += hess[r as usize];
    }
    if total_h < 2.0 * params.min_child_weight {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    for (f, feat) in data.features.iter().enumerate() {
        let n_bins = feat.n_bins as usize;
        let mut hist = vec![(0.0f64, 0.0f64); n_bins];
        for &r in rows {
            let b = feat.bins[r as usize] as usize;
            let cell = &mut hist[b];
            cell.0 += grad[r as usize];
            cell.1 += hess[r as usize];
        }
        if feat.categorical {
            for (b, &(g, h)) in hist.iter().enumerate() {
                if h < params.min_child_weight || total_h - h < params.min_child_weight {
                    continue;
                }
                let gain = split_gain(g, h, total_g - g, total_h - h, params);
                if gain > 0.0 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate {
                        feature: f as u32,
                        kind: SplitKind::CategoricalEq(b as u32),
                        left_bin: LeftBin::Equal(b as u16),
                        gain,
                    });
                }
            }
        } else {
            let mut gl = 0.0;
            let mut hl = 0.0;
            for b in 0..n_bins.saturating_sub(1) {
                gl += hist[b].0;
                hl += hist[b].1;
                if hl < params.min_child_weight || total_h - hl < params.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, total_g - gl, total_h - hl, params);
                if gain > 0.0 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate {
                        feature: f as u32,
                        kind: SplitKind::NumericLe(feat.cuts[b]),
                        left_bin: LeftBin::AtMost(b as u16),
                        gain,
                    });
                }
            }
        }
    }
    best
}

/// Grow one tree greedily on the given gradients; returns the tree and the
/// per-row raw leaf values for the training rows (to update margins without
/// a predict pass).
pub fn grow_tree(
    data: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    params: &BoostParams,
    train_deltas: &mut [f64],
) -> Tree {
    struct Work {
        rows: Vec<u32>,
        depth: u32,
        slot: usize,
    }
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let all_rows: Vec<u32> = (0..data.n_rows as u32).collect();
    let mut stack = vec![Work {
        rows: all_rows,
        depth: 0,
        slot: 0,
    }];
    while let Some(work) = stack.pop() {
        let candidate = if work.depth < params.max_depth {
            best_split(data, grad, hess, &work.rows, params)
        } else {
            None
        };
        match candidate {
            Some(c) => {
                let feat = &data.features[c.feature as usize];
                let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                for &r in &work.rows {
                    let b = feat.bins[r as usize];
                    let goes_left = match c.left_bin {
                        LeftBin::AtMost(cut) => b <= cut,
                        LeftBin::Equal(level) => b == level,
                    };
                    if goes_left {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let left = nodes.len() as u32;
                let right = left + 1;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[work.slot] = Node::Split {
                    feature: c.feature,
                    kind: c.kind,
                    left,
                    right,
                };
                stack.push(Work {
                    rows: left_rows,
                    depth: work.depth + 1,
                    slot: left as usize,
                });
                stack.push(Work {
                    rows: right_rows,
                    depth: work.depth + 1,
                    slot: right as usize,
                });
            }
            None => {
                let mut g = 0.0;
                let mut h = 0.0;
                for &r in &work.rows {
                    g += grad[r as usize];
                    h += hess[r as usize];
                }
                let value = leaf_value(g, h, params);
                nodes[work.slot] = Node::Leaf { value };
                for &r in &work.rows {
                    train_deltas[r as usize] = value;
                }
            }
        }
    }
    Tree { nodes }
}
