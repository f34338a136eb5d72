//! Decision table learner for numeric targets.
//!
//! A best-first forward search picks the predictor subset whose cell means
//! give the lowest leave-one-out squared error. Numeric predictors are
//! discretized into equal-frequency bins; queries whose key was never seen
//! in training fall back to the global training mean.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::features::schema::{FeatureKind, FeatureValue};
use super::matrix::TrainingMatrix;

/// Search stops after this many consecutive expansions without improvement.
const STALE_LIMIT: usize = 5;

const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TableParams {
    pub max_subset_size: usize,
    pub bins: usize,
}

impl Default for TableParams {
    fn default() -> Self {
        TableParams { max_subset_size: 5, bins: 10 }
    }
}

/// One component of a table key: a bin index for numeric features, the raw
/// token for categorical ones.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellKey {
    Bin(usize),
    Cat(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub count: usize,
}

/// A trained decision table.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTableModel {
    /// Selected predictor column indices, ascending.
    pub features: Vec<usize>,
    /// Kind of each selected feature, aligned with `features`.
    pub feature_kinds: Vec<FeatureKind>,
    /// Bin edges aligned with `features`; empty for categorical features.
    pub bin_edges: Vec<Vec<f64>>,
    pub(crate) cells: BTreeMap<Vec<CellKey>, Cell>,
    pub fallback_mean: f64,
    pub n_columns: usize,
    pub target: usize,
}

impl DecisionTableModel {
    /// Routes a full-width row (target column ignored) through the table.
    pub fn predict(&self, row: &[FeatureValue]) -> Result<FeatureValue> {
        if row.len() != self.n_columns {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_columns
            )));
        }
        let key = self.key_for(row)?;
        let value = self.cells.get(&key).map(|c| c.mean).unwrap_or(self.fallback_mean);
        Ok(FeatureValue::Num(value))
    }

    pub fn cells(&self) -> &BTreeMap<Vec<CellKey>, Cell> {
        &self.cells
    }

    fn key_for(&self, row: &[FeatureValue]) -> Result<Vec<CellKey>> {
        self.features
            .iter()
            .zip(self.feature_kinds.iter().zip(&self.bin_edges))
            .map(|(&f, (kind, edges))| match (kind, &row[f]) {
                (FeatureKind::Numeric, FeatureValue::Num(x)) => Ok(CellKey::Bin(bin_of(edges, *x))),
                (FeatureKind::Categorical, FeatureValue::Cat(s)) => Ok(CellKey::Cat(s.clone())),
                _ => Err(Error::SchemaMismatch(format!(
                    "column {f} has the wrong kind for this table"
                ))),
            })
            .collect()
    }
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|e| *e <= x)
}

/// Equal-frequency bin edges over a column's training values.
fn equal_frequency_edges(mut values: Vec<f64>, bins: usize) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let mut edges = Vec::new();
    for k in 1..bins {
        let idx = k * n / bins;
        if idx == 0 || idx >= n {
            continue;
        }
        let edge = values[idx];
        if edges.last().map_or(true, |last| *last < edge) {
            edges.push(edge);
        }
    }
    edges
}

/// Trains a decision table via best-first forward subset search scored by
/// leave-one-out squared error of cell means.
pub fn train_decision_table(data: &TrainingMatrix, params: &TableParams) -> Result<DecisionTableModel> {
    if data.target_kind() != FeatureKind::Numeric {
        return Err(Error::invalid("decision table requires a numeric target"));
    }
    if data.n_rows() < 2 {
        return Err(Error::invalid("decision table requires at least 2 rows"));
    }
    if params.bins < 2 {
        return Err(Error::invalid("bins must be at least 2"));
    }

    let n = data.n_rows();
    let targets: Vec<f64> = (0..n).map(|r| data.numeric_target(r)).collect();
    let total_sum: f64 = targets.iter().sum();

    // Precompute per-column keys once; the search only recombines them.
    let column_keys: Vec<Option<Vec<CellKey>>> = (0..data.n_columns())
        .map(|col| {
            if col == data.target() {
                return None;
            }
            Some(match data.columns()[col].kind {
                FeatureKind::Numeric => {
                    let values: Vec<f64> = data
                        .rows()
                        .iter()
                        .map(|row| row[col].as_num().expect("numeric"))
                        .collect();
                    let edges = equal_frequency_edges(values.clone(), params.bins);
                    values.iter().map(|&x| CellKey::Bin(bin_of(&edges, x))).collect()
                }
                FeatureKind::Categorical => data
                    .rows()
                    .iter()
                    .map(|row| CellKey::Cat(row[col].as_cat().expect("categorical").to_owned()))
                    .collect(),
            })
        })
        .collect();

    let loo_error = |subset: &[usize]| -> f64 {
        let mut cells: BTreeMap<Vec<&CellKey>, (f64, usize)> = BTreeMap::new();
        let keys: Vec<Vec<&CellKey>> = (0..n)
            .map(|r| {
                subset
                    .iter()
                    .map(|&col| &column_keys[col].as_ref().expect("predictor column")[r])
                    .collect()
            })
            .collect();
        for (r, key) in keys.iter().enumerate() {
            let entry = cells.entry(key.clone()).or_insert((0.0, 0));
            entry.0 += targets[r];
            entry.1 += 1;
        }
        let mut err = 0.0;
        for (r, key) in keys.iter().enumerate() {
            let (sum, count) = cells[key];
            let pred = if count > 1 {
                (sum - targets[r]) / (count - 1) as f64
            } else {
                (total_sum - targets[r]) / (n - 1) as f64
            };
            let d = pred - targets[r];
            err += d * d;
        }
        err
    };

    // Best-first search over subsets, expanding the lowest-error frontier
    // node; ties break toward the lexicographically smallest subset.
    let predictors = data.predictor_indices();
    let empty: Vec<usize> = Vec::new();
    let mut best_subset = empty.clone();
    let mut best_err = loo_error(&empty);
    let mut visited: BTreeSet<Vec<usize>> = BTreeSet::new();
    visited.insert(empty.clone());
    let mut frontier: Vec<(f64, Vec<usize>)> = vec![(best_err, empty)];
    let mut stale = 0usize;

    while stale < STALE_LIMIT {
        let Some(pos) = frontier
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let (_, subset) = frontier.swap_remove(pos);
        if subset.len() >= params.max_subset_size {
            stale += 1;
            continue;
        }
        let mut improved = false;
        for &f in &predictors {
            if subset.contains(&f) {
                continue;
            }
            let mut child = subset.clone();
            child.push(f);
            child.sort_unstable();
            if !visited.insert(child.clone()) {
                continue;
            }
            let err = loo_error(&child);
            if err < best_err - SCORE_EPS {
                best_err = err;
                best_subset = child.clone();
                improved = true;
            }
            frontier.push((err, child));
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
        }
    }

    // Final table on the full training data for the winning subset.
    let mut bin_edges = Vec::new();
    let mut feature_kinds = Vec::new();
    for &col in &best_subset {
        let kind = data.columns()[col].kind;
        feature_kinds.push(kind);
        match kind {
            FeatureKind::Numeric => {
                let values: Vec<f64> = data
                    .rows()
                    .iter()
                    .map(|row| row[col].as_num().expect("numeric"))
                    .collect();
                bin_edges.push(equal_frequency_edges(values, params.bins));
            }
            FeatureKind::Categorical => bin_edges.push(Vec::new()),
        }
    }
    let mut sums: BTreeMap<Vec<CellKey>, (f64, usize)> = BTreeMap::new();
    for r in 0..n {
        let key: Vec<CellKey> = best_subset
            .iter()
            .map(|&col| column_keys[col].as_ref().expect("predictor column")[r].clone())
            .collect();
        let entry = sums.entry(key).or_insert((0.0, 0));
        entry.0 += targets[r];
        entry.1 += 1;
    }
    let cells = sums
        .into_iter()
        .map(|(key, (sum, count))| (key, Cell { mean: sum / count as f64, count }))
        .collect();

    Ok(DecisionTableModel {
        features: best_subset,
        feature_kinds,
        bin_edges,
        cells,
        fallback_mean: total_sum / n as f64,
        n_columns: data.n_columns(),
        target: data.target(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::matrix::testutil::numeric_matrix;

    #[test]
    fn constant_target_predicts_the_constant_everywhere() {
        let rows: Vec<[f64; 3]> = (0..30).map(|i| [i as f64, (i * 7 % 5) as f64, 4.25]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = numeric_matrix(&["a", "b", "y"], &refs, 2);
        let model = train_decision_table(&m, &TableParams::default()).unwrap();
        assert!(model.features.is_empty(), "no subset should beat the empty one");
        let pred = model
            .predict(&[FeatureValue::Num(-99.0), FeatureValue::Num(99.0), FeatureValue::Num(0.0)])
            .unwrap();
        assert_eq!(pred, FeatureValue::Num(4.25));
    }

    #[test]
    fn planted_dependence_is_selected() {
        // y depends only on x2 out of five predictors.
        let mut state = 0x1234_5678_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows: Vec<[f64; 6]> = (0..200)
            .map(|_| {
                let xs = [next(), next(), next(), next(), next()];
                let y = (xs[2] * 4.0).floor() * 10.0;
                [xs[0], xs[1], xs[2], xs[3], xs[4], y]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = numeric_matrix(&["x0", "x1", "x2", "x3", "x4", "y"], &refs, 5);
        let model = train_decision_table(&m, &TableParams::default()).unwrap();
        assert!(model.features.contains(&2), "selected {:?}", model.features);
    }

    #[test]
    fn unseen_key_falls_back_to_global_mean() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, (i % 4) as f64 * 10.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = numeric_matrix(&["x", "y"], &refs, 1);
        let model = train_decision_table(&m, &TableParams::default()).unwrap();
        let global: f64 = rows.iter().map(|r| r[1]).sum::<f64>() / 20.0;
        // A value far outside the training range lands in the last bin; make
        // an unseen key by querying when no training row occupies that bin.
        // Bin structure is data-dependent, so instead check the documented
        // fallback directly.
        assert_eq!(model.fallback_mean, global);
        let empty_features = model.features.is_empty();
        if !empty_features {
            let mut probe = vec![FeatureValue::Num(0.0), FeatureValue::Num(0.0)];
            probe[model.features[0]] = FeatureValue::Num(f64::MAX);
            let pred = model.predict(&probe).unwrap().as_num().unwrap();
            // Either the extreme bin was seen in training or we get the
            // fallback; both are finite and within the target range.
            assert!(pred.is_finite());
        }
    }

    #[test]
    fn rejects_too_few_bins() {
        let m = numeric_matrix(&["x", "y"], &[&[1.0, 2.0], &[2.0, 3.0]], 1);
        let params = TableParams { bins: 1, ..Default::default() };
        assert!(train_decision_table(&m, &params).is_err());
    }

    #[test]
    fn rejects_categorical_target() {
        use crate::learn::matrix::testutil::{cat_def, num_def};
        let columns = vec![num_def("x"), cat_def("y")];
        let rows = vec![
            vec![FeatureValue::Num(1.0), FeatureValue::Cat("a".into())],
            vec![FeatureValue::Num(2.0), FeatureValue::Cat("b".into())],
        ];
        let m = TrainingMatrix::new(columns, rows, 1).unwrap();
        assert!(train_decision_table(&m, &TableParams::default()).is_err());
    }

    #[test]
    fn identical_data_yields_identical_models() {
        let rows: Vec<[f64; 4]> = (0..80)
            .map(|i| {
                let x = i as f64;
                [(x * 0.7).sin(), (x * 0.3).cos(), x % 7.0, (x % 7.0) * 3.0]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = numeric_matrix(&["a", "b", "c", "y"], &refs, 3);
        let m1 = train_decision_table(&m, &TableParams::default()).unwrap();
        let m2 = train_decision_table(&m, &TableParams::default()).unwrap();
        assert_eq!(m1, m2);
    }
}
