//! Regression and classification trees.
//!
//! The regression tree grows by best variance (sum-of-squared-error)
//! reduction and is pruned by reduced-error pruning against a deterministic
//! holdout slice of the training rows. The classification tree splits by
//! information-gain ratio and predicts the majority class at each leaf.
//! Both are binary trees; categorical predictors split one-vs-rest on each
//! observed value.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::schema::{FeatureKind, FeatureValue};
use super::matrix::TrainingMatrix;

/// Tree hyperparameters. `prune_fraction` is the share of rows held out for
/// reduced-error pruning and applies to regression trees only; 0 disables
/// pruning.
#[derive(Debug, Clone)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: usize,
    pub prune_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_leaf: 2, max_depth: 20, prune_fraction: 0.25 }
    }
}

/// Fixed seed for the deterministic grow/holdout split; the split must be
/// reproducible so identical data yields identical serialized models.
const PRUNE_SEED: u64 = 0x5eed_7ee5;

const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    Regression,
    Classification,
}

/// One node of a flattened tree; child fields index into the node vector.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    NumSplit { feature: usize, threshold: f64, left: usize, right: usize },
    CatSplit { feature: usize, value: String, left: usize, right: usize },
    NumLeaf { value: f64 },
    CatLeaf { class: String, counts: Vec<(String, usize)> },
}

/// A trained tree. Immutable after training; prediction is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub kind: TreeKind,
    pub(crate) nodes: Vec<TreeNode>,
    pub n_columns: usize,
    pub target: usize,
}

impl TreeModel {
    /// Routes a full-width row (target column present but ignored) to a leaf.
    pub fn predict(&self, row: &[FeatureValue]) -> Result<FeatureValue> {
        if row.len() != self.n_columns {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_columns
            )));
        }
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::NumSplit { feature, threshold, left, right } => {
                    let v = row[*feature].as_num().ok_or_else(|| {
                        Error::SchemaMismatch(format!("column {feature} is not numeric"))
                    })?;
                    idx = if v < *threshold { *left } else { *right };
                }
                TreeNode::CatSplit { feature, value, left, right } => {
                    let v = row[*feature].as_cat().ok_or_else(|| {
                        Error::SchemaMismatch(format!("column {feature} is not categorical"))
                    })?;
                    idx = if v == value { *left } else { *right };
                }
                TreeNode::NumLeaf { value } => return Ok(FeatureValue::Num(*value)),
                TreeNode::CatLeaf { class, .. } => return Ok(FeatureValue::Cat(class.clone())),
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::NumLeaf { .. } | TreeNode::CatLeaf { .. }))
            .count()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }
}

/// Trains a regression tree by variance-reduction growth followed by
/// reduced-error pruning on a deterministic holdout.
pub fn train_regression_tree(data: &TrainingMatrix, params: &TreeParams) -> Result<TreeModel> {
    if data.target_kind() != FeatureKind::Numeric {
        return Err(Error::invalid("regression tree requires a numeric target"));
    }
    if data.n_rows() < 2 {
        return Err(Error::invalid("regression tree requires at least 2 rows"));
    }
    check_params(params)?;

    let all: Vec<usize> = (0..data.n_rows()).collect();
    let (grow, holdout) = if params.prune_fraction > 0.0 {
        let mut grow = Vec::new();
        let mut holdout = Vec::new();
        for &i in &all {
            if holdout_draw(i) < params.prune_fraction {
                holdout.push(i);
            } else {
                grow.push(i);
            }
        }
        if grow.len() < 2 {
            (all.clone(), Vec::new())
        } else {
            (grow, holdout)
        }
    } else {
        (all.clone(), Vec::new())
    };

    let mut root = grow_regression(data, &grow, 0, params);
    if !holdout.is_empty() {
        prune_regression(&mut root, data, &holdout);
    }

    let mut nodes = Vec::new();
    flatten(&root, &mut nodes);
    Ok(TreeModel {
        kind: TreeKind::Regression,
        nodes,
        n_columns: data.n_columns(),
        target: data.target(),
    })
}

/// Trains a classification tree by gain-ratio splitting; the leaf class is
/// the majority, ties broken toward the lexicographically smallest token.
pub fn train_classification_tree(data: &TrainingMatrix, params: &TreeParams) -> Result<TreeModel> {
    if data.target_kind() != FeatureKind::Categorical {
        return Err(Error::invalid("classification tree requires a categorical target"));
    }
    if data.n_rows() == 0 {
        return Err(Error::invalid("classification tree requires at least 1 row"));
    }
    check_params(params)?;

    let all: Vec<usize> = (0..data.n_rows()).collect();
    let root = grow_classification(data, &all, 0, params);
    let mut nodes = Vec::new();
    flatten(&root, &mut nodes);
    Ok(TreeModel {
        kind: TreeKind::Classification,
        nodes,
        n_columns: data.n_columns(),
        target: data.target(),
    })
}

fn check_params(params: &TreeParams) -> Result<()> {
    if params.min_leaf < 1 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }
    if params.max_depth == 0 {
        return Err(Error::invalid("max_depth must be at least 1"));
    }
    if !(0.0..1.0).contains(&params.prune_fraction) {
        return Err(Error::invalid("prune_fraction must be in [0, 1)"));
    }
    Ok(())
}

/// Deterministic pseudo-uniform draw in [0, 1) for row `i`.
fn holdout_draw(i: usize) -> f64 {
    let mut x = PRUNE_SEED ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Intermediate tree kept rich enough to prune: every node remembers its
/// grow-set payload.
enum Built {
    RegLeaf {
        mean: f64,
    },
    RegSplit {
        mean: f64,
        split: Split,
        left: Box<Built>,
        right: Box<Built>,
    },
    ClsLeaf {
        class: String,
        counts: Vec<(String, usize)>,
    },
    ClsSplit {
        split: Split,
        left: Box<Built>,
        right: Box<Built>,
    },
}

#[derive(Clone)]
enum Split {
    Num { feature: usize, threshold: f64 },
    Cat { feature: usize, value: String },
}

impl Split {
    fn goes_left(&self, data: &TrainingMatrix, row: usize) -> bool {
        let values = &data.rows()[row];
        match self {
            Split::Num { feature, threshold } => {
                values[*feature].as_num().expect("numeric predictor") < *threshold
            }
            Split::Cat { feature, value } => {
                values[*feature].as_cat().expect("categorical predictor") == value
            }
        }
    }
}

fn target_sum_sq(data: &TrainingMatrix, rows: &[usize]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &r in rows {
        let y = data.numeric_target(r);
        sum += y;
        sum_sq += y * y;
    }
    (sum, sum_sq)
}

fn grow_regression(data: &TrainingMatrix, rows: &[usize], depth: usize, params: &TreeParams) -> Built {
    let n = rows.len() as f64;
    let (sum, sum_sq) = target_sum_sq(data, rows);
    let mean = sum / n;
    let sse = (sum_sq - sum * sum / n).max(0.0);

    if depth >= params.max_depth || rows.len() < 2 * params.min_leaf || sse <= SCORE_EPS {
        return Built::RegLeaf { mean };
    }

    let mut best: Option<(f64, Split)> = None;
    for feature in data.predictor_indices() {
        match data.columns()[feature].kind {
            FeatureKind::Numeric => {
                best_numeric_regression_split(data, rows, feature, sse, params, &mut best)
            }
            FeatureKind::Categorical => {
                best_categorical_regression_split(data, rows, feature, sse, params, &mut best)
            }
        }
    }

    match best {
        Some((_, split)) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| split.goes_left(data, r));
            let left = Box::new(grow_regression(data, &left_rows, depth + 1, params));
            let right = Box::new(grow_regression(data, &right_rows, depth + 1, params));
            Built::RegSplit { mean, split, left, right }
        }
        None => Built::RegLeaf { mean },
    }
}

fn best_numeric_regression_split(
    data: &TrainingMatrix,
    rows: &[usize],
    feature: usize,
    parent_sse: f64,
    params: &TreeParams,
    best: &mut Option<(f64, Split)>,
) {
    let mut pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|&r| (data.rows()[r][feature].as_num().expect("numeric"), data.numeric_target(r)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    for i in 0..n - 1 {
        left_sum += pairs[i].1;
        left_sq += pairs[i].1 * pairs[i].1;
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < params.min_leaf || n_right < params.min_leaf {
            continue;
        }
        if pairs[i].0 == pairs[i + 1].0 {
            continue;
        }
        let threshold = (pairs[i].0 + pairs[i + 1].0) / 2.0;
        if !(threshold > pairs[i].0) {
            continue; // adjacent floats; midpoint cannot separate them
        }
        let sse_left = (left_sq - left_sum * left_sum / n_left as f64).max(0.0);
        let right_sum = total_sum - left_sum;
        let right_sq = total_sq - left_sq;
        let sse_right = (right_sq - right_sum * right_sum / n_right as f64).max(0.0);
        let reduction = parent_sse - sse_left - sse_right;
        if reduction > SCORE_EPS && best.as_ref().map_or(true, |(s, _)| reduction > *s) {
            *best = Some((reduction, Split::Num { feature, threshold }));
        }
    }
}

fn best_categorical_regression_split(
    data: &TrainingMatrix,
    rows: &[usize],
    feature: usize,
    parent_sse: f64,
    params: &TreeParams,
    best: &mut Option<(f64, Split)>,
) {
    let mut groups: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    let mut total_sum = 0.0;
    let mut total_sq = 0.0;
    for &r in rows {
        let v = data.rows()[r][feature].as_cat().expect("categorical");
        let y = data.numeric_target(r);
        let entry = groups.entry(v).or_insert((0.0, 0.0, 0));
        entry.0 += y;
        entry.1 += y * y;
        entry.2 += 1;
        total_sum += y;
        total_sq += y * y;
    }
    if groups.len() < 2 {
        return;
    }
    let n = rows.len();
    for (value, (sum, sq, count)) in &groups {
        let n_left = *count;
        let n_right = n - n_left;
        if n_left < params.min_leaf || n_right < params.min_leaf {
            continue;
        }
        let sse_left = (sq - sum * sum / n_left as f64).max(0.0);
        let right_sum = total_sum - sum;
        let right_sq = total_sq - sq;
        let sse_right = (right_sq - right_sum * right_sum / n_right as f64).max(0.0);
        let reduction = parent_sse - sse_left - sse_right;
        if reduction > SCORE_EPS && best.as_ref().map_or(true, |(s, _)| reduction > *s) {
            *best = Some((reduction, Split::Cat { feature, value: (*value).to_owned() }));
        }
    }
}

/// Returns the subtree's holdout squared error after pruning it in place.
fn prune_regression(node: &mut Built, data: &TrainingMatrix, holdout: &[usize]) -> f64 {
    let (mean, err) = match node {
        Built::RegLeaf { mean } => (*mean, None),
        Built::RegSplit { mean, split, left, right } => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                holdout.iter().partition(|&&r| split.goes_left(data, r));
            let err = prune_regression(left, data, &left_rows)
                + prune_regression(right, data, &right_rows);
            (*mean, Some(err))
        }
        _ => unreachable!("regression pruning on a classification node"),
    };
    let collapsed: f64 = holdout
        .iter()
        .map(|&r| {
            let d = data.numeric_target(r) - mean;
            d * d
        })
        .sum();
    match err {
        Some(subtree_err) if collapsed <= subtree_err + SCORE_EPS => {
            *node = Built::RegLeaf { mean };
            collapsed
        }
        Some(subtree_err) => subtree_err,
        None => collapsed,
    }
}

fn class_counts<'a>(data: &'a TrainingMatrix, rows: &[usize]) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for &r in rows {
        *counts.entry(data.categorical_target(r)).or_insert(0) += 1;
    }
    counts
}

fn entropy(counts: &BTreeMap<&str, usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Majority class; ties go to the lexicographically smallest token.
fn majority(counts: &BTreeMap<&str, usize>) -> String {
    let mut best: Option<(&str, usize)> = None;
    for (class, &count) in counts {
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((class, count));
        }
    }
    best.expect("non-empty counts").0.to_owned()
}

fn grow_classification(
    data: &TrainingMatrix,
    rows: &[usize],
    depth: usize,
    params: &TreeParams,
) -> Built {
    let counts = class_counts(data, rows);
    let leaf = |counts: &BTreeMap<&str, usize>| Built::ClsLeaf {
        class: majority(counts),
        counts: counts.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
    };
    if depth >= params.max_depth || rows.len() < 2 * params.min_leaf || counts.len() < 2 {
        return leaf(&counts);
    }
    let parent_entropy = entropy(&counts, rows.len());

    let mut best: Option<(f64, Split)> = None;
    for feature in data.predictor_indices() {
        match data.columns()[feature].kind {
            FeatureKind::Numeric => best_numeric_classification_split(
                data,
                rows,
                feature,
                parent_entropy,
                params,
                &mut best,
            ),
            FeatureKind::Categorical => best_categorical_classification_split(
                data,
                rows,
                feature,
                parent_entropy,
                params,
                &mut best,
            ),
        }
    }

    match best {
        Some((_, split)) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| split.goes_left(data, r));
            let left = Box::new(grow_classification(data, &left_rows, depth + 1, params));
            let right = Box::new(grow_classification(data, &right_rows, depth + 1, params));
            Built::ClsSplit { split, left, right }
        }
        None => leaf(&counts),
    }
}

fn gain_ratio(
    data: &TrainingMatrix,
    parent_entropy: f64,
    n: usize,
    left_rows: &[usize],
    right_rows: &[usize],
) -> Option<f64> {
    let n_f = n as f64;
    let left_counts = class_counts(data, left_rows);
    let right_counts = class_counts(data, right_rows);
    let w_left = left_rows.len() as f64 / n_f;
    let w_right = right_rows.len() as f64 / n_f;
    let gain = parent_entropy
        - w_left * entropy(&left_counts, left_rows.len())
        - w_right * entropy(&right_counts, right_rows.len());
    if gain <= SCORE_EPS {
        return None;
    }
    let split_info = -w_left * w_left.log2() - w_right * w_right.log2();
    if split_info <= 0.0 {
        return None;
    }
    Some(gain / split_info)
}

fn best_numeric_classification_split(
    data: &TrainingMatrix,
    rows: &[usize],
    feature: usize,
    parent_entropy: f64,
    params: &TreeParams,
    best: &mut Option<(f64, Split)>,
) {
    let mut sorted: Vec<usize> = rows.to_vec();
    sorted.sort_by(|&a, &b| {
        let xa = data.rows()[a][feature].as_num().expect("numeric");
        let xb = data.rows()[b][feature].as_num().expect("numeric");
        xa.total_cmp(&xb)
    });
    let value = |r: usize| data.rows()[r][feature].as_num().expect("numeric");
    for i in 0..sorted.len() - 1 {
        let n_left = i + 1;
        let n_right = sorted.len() - n_left;
        if n_left < params.min_leaf || n_right < params.min_leaf {
            continue;
        }
        let (a, b) = (value(sorted[i]), value(sorted[i + 1]));
        if a == b {
            continue;
        }
        let threshold = (a + b) / 2.0;
        if !(threshold > a) {
            continue;
        }
        let (left_rows, right_rows) = sorted.split_at(n_left);
        if let Some(ratio) = gain_ratio(data, parent_entropy, rows.len(), left_rows, right_rows) {
            if best.as_ref().map_or(true, |(s, _)| ratio > *s) {
                *best = Some((ratio, Split::Num { feature, threshold }));
            }
        }
    }
}

fn best_categorical_classification_split(
    data: &TrainingMatrix,
    rows: &[usize],
    feature: usize,
    parent_entropy: f64,
    params: &TreeParams,
    best: &mut Option<(f64, Split)>,
) {
    let mut values: Vec<&str> = rows
        .iter()
        .map(|&r| data.rows()[r][feature].as_cat().expect("categorical"))
        .collect();
    values.sort_unstable();
    values.dedup();
    if values.len() < 2 {
        return;
    }
    for value in values {
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| data.rows()[r][feature].as_cat().expect("categorical") == value);
        if left_rows.len() < params.min_leaf || right_rows.len() < params.min_leaf {
            continue;
        }
        if let Some(ratio) = gain_ratio(data, parent_entropy, rows.len(), &left_rows, &right_rows) {
            if best.as_ref().map_or(true, |(s, _)| ratio > *s) {
                *best = Some((ratio, Split::Cat { feature, value: value.to_owned() }));
            }
        }
    }
}

fn flatten(built: &Built, nodes: &mut Vec<TreeNode>) -> usize {
    let idx = nodes.len();
    match built {
        Built::RegLeaf { mean } => {
            nodes.push(TreeNode::NumLeaf { value: *mean });
        }
        Built::ClsLeaf { class, counts } => {
            nodes.push(TreeNode::CatLeaf { class: class.clone(), counts: counts.clone() });
        }
        Built::RegSplit { split, left, right, .. } | Built::ClsSplit { split, left, right } => {
            // Reserve the slot, then fill child indices after recursion.
            nodes.push(TreeNode::NumLeaf { value: 0.0 });
            let left_idx = flatten(left, nodes);
            let right_idx = flatten(right, nodes);
            nodes[idx] = match split {
                Split::Num { feature, threshold } => TreeNode::NumSplit {
                    feature: *feature,
                    threshold: *threshold,
                    left: left_idx,
                    right: right_idx,
                },
                Split::Cat { feature, value } => TreeNode::CatSplit {
                    feature: *feature,
                    value: value.clone(),
                    left: left_idx,
                    right: right_idx,
                },
            };
        }
    }
    idx
}
