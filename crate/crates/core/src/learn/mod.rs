//! Base learners for cross-feature analysis: a pruned regression tree, a
//! gain-ratio classification tree, and a subset-searched decision table,
//! plus their shared training-matrix layout and text serialization.

pub mod matrix;
pub mod serial;
pub mod table;
pub mod tree;

pub use matrix::TrainingMatrix;
pub use serial::{model_from_str, model_to_string, LearnedModel, MODEL_HEADER};
pub use table::{train_decision_table, DecisionTableModel, TableParams};
pub use tree::{train_classification_tree, train_regression_tree, TreeModel, TreeParams};
