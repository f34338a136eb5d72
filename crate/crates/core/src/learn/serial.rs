//! Versioned text serialization for learned models.
//!
//! Model files are line-oriented and self-describing. A file starts with
//! the header `appnet-model v1` followed by one model block. Field order is
//! fixed so that identical models always serialize to identical bytes:
//!
//! ```text
//! kind regression_tree | classification_tree
//! columns <n_columns>
//! target <column index>
//! nodes <count>
//! node <idx> num_split <feature> <threshold> <left> <right>
//! node <idx> cat_split <feature> <token> <left> <right>
//! node <idx> num_leaf <value>
//! node <idx> cat_leaf <class> <n> <class>:<count> ...
//! end
//! ```
//!
//! ```text
//! kind decision_table
//! columns <n_columns>
//! target <column index>
//! subset <n> <column indices...>
//! feature <pos> numeric <n_edges> <edges...>
//! feature <pos> categorical 0
//! cells <count>
//! cell <key1,key2,...> <mean> <count>     key: b<bin> or c<token>
//! fallback <mean>
//! end
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so parsing a
//! serialized model reproduces every value bit-exactly. Cell keys and class
//! counts iterate in `BTreeMap` order, which keeps golden files stable.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::schema::{FeatureKind, FeatureValue};
use super::table::{Cell, CellKey, DecisionTableModel};
use super::tree::{TreeKind, TreeModel, TreeNode};

pub const MODEL_HEADER: &str = "appnet-model v1";

/// Either kind of base model, as stored inside a cross-feature ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedModel {
    Tree(TreeModel),
    Table(DecisionTableModel),
}

impl LearnedModel {
    pub fn predict(&self, row: &[FeatureValue]) -> Result<FeatureValue> {
        match self {
            LearnedModel::Tree(t) => t.predict(row),
            LearnedModel::Table(t) => t.predict(row),
        }
    }
}

/// Line reader that tracks 1-based line numbers for error reporting.
pub(crate) struct LineCursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    path: Option<&'a str>,
}

impl<'a> LineCursor<'a> {
    pub fn new(text: &'a str, path: Option<&'a str>) -> Self {
        LineCursor { lines: text.lines().collect(), pos: 0, path }
    }

    pub fn next(&mut self) -> Result<&'a str> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            self.pos += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim_end());
            }
        }
        Err(self.err("unexpected end of file"))
    }

    pub fn at_end(&self) -> bool {
        self.lines[self.pos..].iter().all(|l| l.trim().is_empty())
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.pos.max(1), message)
    }

    /// Consumes a line that must start with `keyword` and returns the rest.
    pub fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == keyword => Ok(parts.collect()),
            Some(k) => Err(self.err(format!("expected `{keyword}`, found `{k}`"))),
            None => Err(self.err(format!("expected `{keyword}`"))),
        }
    }

    pub fn parse_field<T: std::str::FromStr>(&self, raw: &str, what: &str) -> Result<T> {
        raw.parse::<T>().map_err(|_| self.err(format!("bad {what} `{raw}`")))
    }
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty()
        || token.chars().any(|c| c.is_whitespace() || c == ':' || c == ',')
    {
        return Err(Error::invalid(format!("token `{token}` is not serializable")));
    }
    Ok(())
}

pub(crate) fn write_tree_block(out: &mut String, model: &TreeModel) -> Result<()> {
    let kind = match model.kind {
        TreeKind::Regression => "regression_tree",
        TreeKind::Classification => "classification_tree",
    };
    writeln!(out, "kind {kind}").unwrap();
    writeln!(out, "columns {}", model.n_columns).unwrap();
    writeln!(out, "target {}", model.target).unwrap();
    writeln!(out, "nodes {}", model.nodes().len()).unwrap();
    for (idx, node) in model.nodes().iter().enumerate() {
        match node {
            TreeNode::NumSplit { feature, threshold, left, right } => {
                writeln!(out, "node {idx} num_split {feature} {threshold} {left} {right}").unwrap();
            }
            TreeNode::CatSplit { feature, value, left, right } => {
                check_token(value)?;
                writeln!(out, "node {idx} cat_split {feature} {value} {left} {right}").unwrap();
            }
            TreeNode::NumLeaf { value } => {
                writeln!(out, "node {idx} num_leaf {value}").unwrap();
            }
            TreeNode::CatLeaf { class, counts } => {
                check_token(class)?;
                write!(out, "node {idx} cat_leaf {class} {}", counts.len()).unwrap();
                for (token, count) in counts {
                    check_token(token)?;
                    write!(out, " {token}:{count}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out.push_str("end\n");
    Ok(())
}

pub(crate) fn write_table_block(out: &mut String, model: &DecisionTableModel) -> Result<()> {
    writeln!(out, "kind decision_table").unwrap();
    writeln!(out, "columns {}", model.n_columns).unwrap();
    writeln!(out, "target {}", model.target).unwrap();
    write!(out, "subset {}", model.features.len()).unwrap();
    for f in &model.features {
        write!(out, " {f}").unwrap();
    }
    out.push('\n');
    for (pos, (kind, edges)) in model.feature_kinds.iter().zip(&model.bin_edges).enumerate() {
        match kind {
            FeatureKind::Numeric => {
                write!(out, "feature {pos} numeric {}", edges.len()).unwrap();
                for e in edges {
                    write!(out, " {e}").unwrap();
                }
                out.push('\n');
            }
            FeatureKind::Categorical => {
                writeln!(out, "feature {pos} categorical 0").unwrap();
            }
        }
    }
    writeln!(out, "cells {}", model.cells().len()).unwrap();
    for (key, cell) in model.cells() {
        let encoded: Vec<String> = key
            .iter()
            .map(|k| match k {
                CellKey::Bin(b) => Ok(format!("b{b}")),
                CellKey::Cat(token) => {
                    check_token(token)?;
                    Ok(format!("c{token}"))
                }
            })
            .collect::<Result<_>>()?;
        let key_str = if encoded.is_empty() { "-".to_owned() } else { encoded.join(",") };
        writeln!(out, "cell {key_str} {} {}", cell.mean, cell.count).unwrap();
    }
    writeln!(out, "fallback {}", model.fallback_mean).unwrap();
    out.push_str("end\n");
    Ok(())
}

pub(crate) fn write_block(out: &mut String, model: &LearnedModel) -> Result<()> {
    match model {
        LearnedModel::Tree(t) => write_tree_block(out, t),
        LearnedModel::Table(t) => write_table_block(out, t),
    }
}

/// Parses one model block starting at the `kind` line through its `end`.
pub(crate) fn parse_block(cursor: &mut LineCursor<'_>) -> Result<LearnedModel> {
    let kind_fields = cursor.expect("kind")?;
    let kind = *kind_fields
        .first()
        .ok_or_else(|| cursor.err("missing model kind"))?;
    match kind {
        "regression_tree" => parse_tree_block(cursor, TreeKind::Regression),
        "classification_tree" => parse_tree_block(cursor, TreeKind::Classification),
        "decision_table" => parse_table_block(cursor),
        other => Err(cursor.err(format!("unknown model kind `{other}`"))),
    }
}

fn parse_tree_block(cursor: &mut LineCursor<'_>, kind: TreeKind) -> Result<LearnedModel> {
    let columns = single_field(cursor, "columns")?;
    let target = single_field(cursor, "target")?;
    let n_nodes: usize = single_field(cursor, "nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for expected_idx in 0..n_nodes {
        let fields = cursor.expect("node")?;
        if fields.len() < 2 {
            return Err(cursor.err("truncated node record"));
        }
        let idx: usize = cursor.parse_field(fields[0], "node index")?;
        if idx != expected_idx {
            return Err(cursor.err(format!("node {idx} out of order, expected {expected_idx}")));
        }
        let node = match fields[1] {
            "num_split" => {
                if fields.len() != 6 {
                    return Err(cursor.err("num_split expects 4 fields"));
                }
                TreeNode::NumSplit {
                    feature: cursor.parse_field(fields[2], "feature index")?,
                    threshold: cursor.parse_field(fields[3], "threshold")?,
                    left: cursor.parse_field(fields[4], "left child")?,
                    right: cursor.parse_field(fields[5], "right child")?,
                }
            }
            "cat_split" => {
                if fields.len() != 6 {
                    return Err(cursor.err("cat_split expects 4 fields"));
                }
                TreeNode::CatSplit {
                    feature: cursor.parse_field(fields[2], "feature index")?,
                    value: fields[3].to_owned(),
                    left: cursor.parse_field(fields[4], "left child")?,
                    right: cursor.parse_field(fields[5], "right child")?,
                }
            }
            "num_leaf" => {
                if fields.len() != 3 {
                    return Err(cursor.err("num_leaf expects 1 field"));
                }
                TreeNode::NumLeaf { value: cursor.parse_field(fields[2], "leaf value")? }
            }
            "cat_leaf" => {
                if fields.len() < 4 {
                    return Err(cursor.err("truncated cat_leaf record"));
                }
                let class = fields[2].to_owned();
                let n: usize = cursor.parse_field(fields[3], "count")?;
                if fields.len() != 4 + n {
                    return Err(cursor.err("cat_leaf count mismatch"));
                }
                let mut counts = Vec::with_capacity(n);
                for raw in &fields[4..] {
                    let (token, count) = raw
                        .split_once(':')
                        .ok_or_else(|| cursor.err(format!("bad class count `{raw}`")))?;
                    counts.push((token.to_owned(), cursor.parse_field(count, "class count")?));
                }
                TreeNode::CatLeaf { class, counts }
            }
            other => return Err(cursor.err(format!("unknown node type `{other}`"))),
        };
        nodes.push(node);
    }
    expect_end(cursor)?;
    // Child indices must stay inside the node table.
    for node in &nodes {
        let (l, r) = match node {
            TreeNode::NumSplit { left, right, .. } | TreeNode::CatSplit { left, right, .. } => {
                (*left, *right)
            }
            _ => continue,
        };
        if l >= nodes.len() || r >= nodes.len() {
            return Err(cursor.err("node child index out of range"));
        }
    }
    Ok(LearnedModel::Tree(TreeModel { kind, nodes, n_columns: columns, target }))
}

fn parse_table_block(cursor: &mut LineCursor<'_>) -> Result<LearnedModel> {
    let columns: usize = single_field(cursor, "columns")?;
    let target: usize = single_field(cursor, "target")?;

    let subset_fields = cursor.expect("subset")?;
    let n_features: usize = cursor.parse_field(
        subset_fields.first().ok_or_else(|| cursor.err("missing subset size"))?,
        "subset size",
    )?;
    if subset_fields.len() != 1 + n_features {
        return Err(cursor.err("subset size mismatch"));
    }
    let features: Vec<usize> = subset_fields[1..]
        .iter()
        .map(|raw| cursor.parse_field(raw, "column index"))
        .collect::<Result<_>>()?;

    let mut feature_kinds = Vec::with_capacity(n_features);
    let mut bin_edges = Vec::with_capacity(n_features);
    for pos in 0..n_features {
        let fields = cursor.expect("feature")?;
        if fields.len() < 3 {
            return Err(cursor.err("truncated feature record"));
        }
        let got_pos: usize = cursor.parse_field(fields[0], "feature position")?;
        if got_pos != pos {
            return Err(cursor.err(format!("feature {got_pos} out of order")));
        }
        let n_edges: usize = cursor.parse_field(fields[2], "edge count")?;
        if fields.len() != 3 + n_edges {
            return Err(cursor.err("edge count mismatch"));
        }
        match fields[1] {
            "numeric" => {
                feature_kinds.push(FeatureKind::Numeric);
                bin_edges.push(
                    fields[3..]
                        .iter()
                        .map(|raw| cursor.parse_field(raw, "bin edge"))
                        .collect::<Result<_>>()?,
                );
            }
            "categorical" => {
                feature_kinds.push(FeatureKind::Categorical);
                bin_edges.push(Vec::new());
            }
            other => return Err(cursor.err(format!("unknown feature kind `{other}`"))),
        }
    }

    let n_cells: usize = single_field(cursor, "cells")?;
    let mut cells = std::collections::BTreeMap::new();
    for _ in 0..n_cells {
        let fields = cursor.expect("cell")?;
        if fields.len() != 3 {
            return Err(cursor.err("cell expects key, mean, count"));
        }
        let key: Vec<CellKey> = if fields[0] == "-" {
            Vec::new()
        } else {
            fields[0]
                .split(',')
                .map(|part| {
                    if let Some(bin) = part.strip_prefix('b') {
                        Ok(CellKey::Bin(cursor.parse_field(bin, "bin index")?))
                    } else if let Some(token) = part.strip_prefix('c') {
                        Ok(CellKey::Cat(token.to_owned()))
                    } else {
                        Err(cursor.err(format!("bad cell key part `{part}`")))
                    }
                })
                .collect::<Result<_>>()?
        };
        if key.len() != n_features {
            return Err(cursor.err("cell key arity mismatch"));
        }
        let cell = Cell {
            mean: cursor.parse_field(fields[1], "cell mean")?,
            count: cursor.parse_field(fields[2], "cell count")?,
        };
        cells.insert(key, cell);
    }
    let fallback_fields = cursor.expect("fallback")?;
    if fallback_fields.len() != 1 {
        return Err(cursor.err("fallback expects 1 field"));
    }
    let fallback_mean: f64 = cursor.parse_field(fallback_fields[0], "fallback mean")?;
    expect_end(cursor)?;

    Ok(LearnedModel::Table(DecisionTableModel {
        features,
        feature_kinds,
        bin_edges,
        cells,
        fallback_mean,
        n_columns: columns,
        target,
    }))
}

fn single_field<T: std::str::FromStr>(cursor: &mut LineCursor<'_>, keyword: &str) -> Result<T> {
    let fields = cursor.expect(keyword)?;
    if fields.len() != 1 {
        return Err(cursor.err(format!("`{keyword}` expects exactly 1 field")));
    }
    cursor.parse_field(fields[0], keyword)
}

fn expect_end(cursor: &mut LineCursor<'_>) -> Result<()> {
    let line = cursor.next()?;
    if line.trim() != "end" {
        return Err(cursor.err(format!("expected `end`, found `{line}`")));
    }
    Ok(())
}

/// Serializes a standalone base model file.
pub fn model_to_string(model: &LearnedModel) -> Result<String> {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    write_block(&mut out, model)?;
    Ok(out)
}

/// Parses a standalone base model file.
pub fn model_from_str(text: &str, path: Option<&str>) -> Result<LearnedModel> {
    let mut cursor = LineCursor::new(text, path);
    let header = cursor.next()?;
    if header != MODEL_HEADER {
        return Err(cursor.err(format!("unknown model header `{header}`, expected `{MODEL_HEADER}`")));
    }
    let model = parse_block(&mut cursor)?;
    if !cursor.at_end() {
        return Err(cursor.err("trailing content after model block"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::matrix::testutil::numeric_matrix;
    use crate::learn::table::{train_decision_table, TableParams};
    use crate::learn::tree::{train_classification_tree, train_regression_tree, TreeParams};
    use crate::learn::TrainingMatrix;
    use crate::features::schema::FeatureDef;

    fn wavy_matrix() -> TrainingMatrix {
        let rows: Vec<[f64; 4]> = (0..90)
            .map(|i| {
                let x = i as f64;
                [(x * 0.31).sin(), (x * 0.17).cos(), x % 9.0, ((x % 9.0) - 4.0).abs() * 2.0]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        numeric_matrix(&["a", "b", "c", "y"], &refs, 3)
    }

    fn fuzz_rows(n: usize) -> Vec<Vec<FeatureValue>> {
        (0..n)
            .map(|i| {
                let x = i as f64 * 0.77;
                vec![
                    FeatureValue::Num((x * 1.3).sin() * 50.0),
                    FeatureValue::Num((x * 0.7).cos() * 20.0),
                    FeatureValue::Num(x % 13.0),
                    FeatureValue::Num(0.0),
                ]
            })
            .collect()
    }

    #[test]
    fn regression_tree_round_trips_with_identical_predictions() {
        let m = wavy_matrix();
        let model = LearnedModel::Tree(train_regression_tree(&m, &TreeParams::default()).unwrap());
        let text = model_to_string(&model).unwrap();
        let parsed = model_from_str(&text, None).unwrap();
        assert_eq!(parsed, model);
        for row in fuzz_rows(200) {
            assert_eq!(parsed.predict(&row).unwrap(), model.predict(&row).unwrap());
        }
        // Serialization itself is deterministic.
        assert_eq!(model_to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn decision_table_round_trips() {
        let m = wavy_matrix();
        let model = LearnedModel::Table(train_decision_table(&m, &TableParams::default()).unwrap());
        let text = model_to_string(&model).unwrap();
        let parsed = model_from_str(&text, None).unwrap();
        assert_eq!(parsed, model);
        for row in fuzz_rows(200) {
            assert_eq!(parsed.predict(&row).unwrap(), model.predict(&row).unwrap());
        }
    }

    #[test]
    fn classification_tree_round_trips() {
        use crate::features::schema::FeatureKind;
        let columns = vec![
            FeatureDef { name: "x", kind: FeatureKind::Numeric },
            FeatureDef { name: "y", kind: FeatureKind::Categorical },
        ];
        let rows: Vec<Vec<FeatureValue>> = (0..40)
            .map(|i| {
                let cls = if i % 4 == 0 { "wifi" } else { "cellular" };
                vec![FeatureValue::Num((i % 4) as f64), FeatureValue::Cat(cls.into())]
            })
            .collect();
        let m = TrainingMatrix::new(columns, rows, 1).unwrap();
        let model =
            LearnedModel::Tree(train_classification_tree(&m, &TreeParams::default()).unwrap());
        let text = model_to_string(&model).unwrap();
        let parsed = model_from_str(&text, None).unwrap();
        assert_eq!(parsed, model);
    }

    #[test]
    fn unknown_header_is_rejected() {
        assert!(model_from_str("appnet-model v2\nkind x\nend\n", None).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let m = wavy_matrix();
        let model = LearnedModel::Tree(train_regression_tree(&m, &TreeParams::default()).unwrap());
        let text = model_to_string(&model).unwrap();
        let broken = text.replace("kind regression_tree", "kind sandwich_tree");
        let err = model_from_str(&broken, Some("m.model")).unwrap_err().to_string();
        assert!(err.contains("m.model:2"), "got: {err}");
    }
}
