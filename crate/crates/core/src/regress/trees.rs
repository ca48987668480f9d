//! Extremely randomised regression trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `round(sqrt(n_features))`.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            n_estimators: 100,
            min_samples_split: 3,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

const LEAF: u32 = u32::MAX;

/// Flat node: for a split, samples with `x[feature] < value` go to `index + 1`,
/// the rest to `right`. Leaves store their mean in `value` and `feature == LEAF`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub value: f64,
    pub right: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if x[n.feature as usize] < n.value {
                i + 1
            } else {
                n.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraTrees {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ExtraTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Fits an ensemble on row-major `inputs` (`n × width`). Tree `j` draws its
/// randomness from `(seed, j)`, so results do not depend on scheduling.
pub fn trees_fit(
    inputs: &[f64],
    width: usize,
    targets: &[f64],
    params: &TreeParams,
    seed: u64,
) -> Result<ExtraTrees> {
    if targets.is_empty() {
        return Err(Error::invalid("cannot fit trees on an empty dataset"));
    }
    if width == 0 || inputs.len() != targets.len() * width {
        return Err(Error::Shape {
            expected: targets.len() * width,
            got: inputs.len(),
            context: "trees_fit inputs",
        });
    }
    if params.min_samples_split < 2 || params.min_samples_leaf < 1 || params.n_estimators == 0 {
        return Err(Error::invalid(format!("bad tree parameters {params:?}")));
    }
    if let Some(bad) = targets.iter().chain(inputs).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "tree training data",
            value: *bad,
        });
    }
    let k = params
        .max_features
        .unwrap_or_else(|| ((width as f64).sqrt().round() as usize).max(1))
        .clamp(1, width);
    let data = Data {
        x: inputs,
        y: targets,
        width,
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let mut idx: Vec<u32> = (0..targets.len() as u32).collect();
            let mut nodes = Vec::new();
            grow(&data, &mut idx, params, k, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok(ExtraTrees {
        n_features: width,
        trees,
    })
}

struct Data<'a> {
    x: &'a [f64],
    y: &'a [f64],
    width: usize,
}

impl Data<'_> {
    fn at(&self, row: u32, f: usize) -> f64 {
        self.x[row as usize * self.width + f]
    }
}

fn mean_of(data: &Data, idx: &[u32]) -> f64 {
    idx.iter().map(|&r| data.y[r as usize]).sum::<f64>() / idx.len() as f64
}

fn grow(
    data: &Data,
    idx: &mut [u32],
    params: &TreeParams,
    k: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) {
    let me = nodes.len();
    let leaf = Node {
        feature: LEAF,
        value: mean_of(data, idx),
        right: 0,
    };
    nodes.push(leaf);
    if idx.len() < params.min_samples_split || idx.len() < 2 * params.min_samples_leaf {
        return;
    }
    let y0 = data.y[idx[0] as usize];
    if idx.iter().all(|&r| data.y[r as usize] == y0) {
        return;
    }
    // candidate features with spread in this node, drawn without replacement
    let mut ranges: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..data.width {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in idx.iter() {
            let v = data.at(r, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            ranges.push((f, lo, hi));
        }
    }
    if ranges.is_empty() {
        return;
    }
    let take = k.min(ranges.len());
    let mut best: Option<(usize, f64, f64)> = None;
    for c in sample(rng, ranges.len(), take).into_iter() {
        let (f, lo, hi) = ranges[c];
        let mut thr = lo + rng.gen::<f64>() * (hi - lo);
        if thr <= lo {
            thr = 0.5 * (lo + hi);
        }
        let (mut nl, mut sl, mut nr, mut sr) = (0usize, 0.0, 0usize, 0.0);
        for &r in idx.iter() {
            let y = data.y[r as usize];
            if data.at(r, f) < thr {
                nl += 1;
                sl += y;
            } else {
                nr += 1;
                sr += y;
            }
        }
        if nl < params.min_samples_leaf || nr < params.min_samples_leaf {
            continue;
        }
        // maximising Σ n_side·mean_side² is equivalent to minimising the split variance
        let score = sl * sl / nl as f64 + sr * sr / nr as f64;
        if best.map_or(true, |b| score > b.2) {
            best = Some((f, thr, score));
        }
    }
    let Some((f, thr, _)) = best else {
        return;
    };
    let mut split = 0;
    for i in 0..idx.len() {
        if data.at(idx[i], f) < thr {
            idx.swap(i, split);
            split += 1;
        }
    }
    let (left, right) = idx.split_at_mut(split);
    grow(data, left, params, k, rng, nodes);
    let right_at = nodes.len() as u32;
    grow(data, right, params, k, rng, nodes);
    nodes[me] = Node {
        feature: f as u32,
        value: thr,
        right: right_at,
    };
}
