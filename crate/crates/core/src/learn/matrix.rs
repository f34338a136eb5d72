//! Training data layout shared by the base learners.

use crate::error::{Error, Result};
use crate::features::schema::{FeatureDef, FeatureKind, FeatureValue};

/// A rectangular table of feature values with one column designated as the
/// prediction target.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    columns: Vec<FeatureDef>,
    rows: Vec<Vec<FeatureValue>>,
    target: usize,
}

impl TrainingMatrix {
    pub fn new(columns: Vec<FeatureDef>, rows: Vec<Vec<FeatureValue>>, target: usize) -> Result<Self> {
        if target >= columns.len() {
            return Err(Error::invalid(format!(
                "target column {target} out of range for {} columns",
                columns.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            for (value, def) in row.iter().zip(&columns) {
                if value.kind() != def.kind {
                    return Err(Error::invalid(format!(
                        "row {i}: value for `{}` has the wrong kind",
                        def.name
                    )));
                }
            }
        }
        Ok(TrainingMatrix { columns, rows, target })
    }

    pub fn columns(&self) -> &[FeatureDef] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<FeatureValue>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn target_kind(&self) -> FeatureKind {
        self.columns[self.target].kind
    }

    /// Predictor column indices: every column except the target.
    pub fn predictor_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| i != self.target).collect()
    }

    pub fn numeric_target(&self, row: usize) -> f64 {
        self.rows[row][self.target].as_num().expect("numeric target")
    }

    pub fn categorical_target(&self, row: usize) -> &str {
        self.rows[row][self.target].as_cat().expect("categorical target")
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn rejects_ragged_rows() {
        let columns = vec![num_def("a"), num_def("b")];
        let rows = vec![vec![FeatureValue::Num(1.0)]];
        assert!(TrainingMatrix::new(columns, rows, 0).is_err());
    }

    #[test]
    fn rejects_kind_mismatch() {
        let columns = vec![num_def("a"), cat_def("b")];
        let rows = vec![vec![FeatureValue::Num(1.0), FeatureValue::Num(2.0)]];
        assert!(TrainingMatrix::new(columns, rows, 0).is_err());
    }

    #[test]
    fn predictor_indices_exclude_target() {
        let m = numeric_matrix(&["a", "b", "c"], &[&[1.0, 2.0, 3.0]], 1);
        assert_eq!(m.predictor_indices(), vec![0, 2]);
        assert_eq!(m.target_kind(), FeatureKind::Numeric);
    }
}
