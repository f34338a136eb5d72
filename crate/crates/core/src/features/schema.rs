//! The canonical feature table and the selectable feature subsets.

use std::fmt;

use crate::error::{Error, Result};
use super::AggregatedVector;

/// Whether a feature carries a number or a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// A single feature value as seen by the learners.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

impl FeatureValue {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureValue::Num(_) => FeatureKind::Numeric,
            FeatureValue::Cat(_) => FeatureKind::Categorical,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(x) => Some(*x),
            FeatureValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Num(_) => None,
            FeatureValue::Cat(s) => Some(s),
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Num(x) => write!(f, "{x}"),
            FeatureValue::Cat(s) => f.write_str(s),
        }
    }
}

/// One named feature of an [`AggregatedVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub kind: FeatureKind,
}

const fn num(name: &'static str) -> FeatureDef {
    FeatureDef { name, kind: FeatureKind::Numeric }
}

const fn cat(name: &'static str) -> FeatureDef {
    FeatureDef { name, kind: FeatureKind::Categorical }
}

/// Every aggregated feature, in canonical (CSV header) order.
pub const ALL_FEATURES: [FeatureDef; 37] = [
    num("avg_sent_bytes"),
    num("std_sent_bytes"),
    num("min_sent_bytes"),
    num("max_sent_bytes"),
    num("avg_recv_bytes"),
    num("std_recv_bytes"),
    num("min_recv_bytes"),
    num("max_recv_bytes"),
    num("avg_sent_pct"),
    num("std_sent_pct"),
    num("min_sent_pct"),
    num("max_sent_pct"),
    num("avg_recv_pct"),
    num("std_recv_pct"),
    num("min_recv_pct"),
    num("max_recv_pct"),
    num("pct_sent_bytes"),
    num("pct_recv_bytes"),
    num("inner_avg_send_interval_local"),
    num("inner_avg_recv_interval_local"),
    num("outer_avg_send_interval_local"),
    num("outer_avg_recv_interval_local"),
    num("inner_avg_send_interval_global"),
    num("inner_avg_recv_interval_global"),
    num("outer_avg_send_interval_global"),
    num("outer_avg_recv_interval_global"),
    cat("net_state"),
    num("mins_since_last_send"),
    num("mins_since_last_recv"),
    cat("app_state1"),
    cat("app_state2"),
    num("fg_time_total_secs"),
    num("bg_time_total_secs"),
    num("fg_time_local_secs"),
    num("bg_time_local_secs"),
    num("mins_since_last_active"),
    num("days_since_modified"),
];

/// Names of the 7-feature default subset: byte averages, received-bytes
/// share, and the four global interval averages.
pub const SUBSET1: [&str; 7] = [
    "avg_sent_bytes",
    "avg_recv_bytes",
    "pct_recv_bytes",
    "inner_avg_send_interval_global",
    "inner_avg_recv_interval_global",
    "outer_avg_send_interval_global",
    "outer_avg_recv_interval_global",
];

/// The 9-feature subset: [`SUBSET1`] plus the sent/received percent
/// averages.
pub const SUBSET2: [&str; 9] = [
    "avg_sent_bytes",
    "avg_recv_bytes",
    "pct_recv_bytes",
    "inner_avg_send_interval_global",
    "inner_avg_recv_interval_global",
    "outer_avg_send_interval_global",
    "outer_avg_recv_interval_global",
    "avg_sent_pct",
    "avg_recv_pct",
];

/// Looks up one feature of a vector by name.
pub fn feature_value(v: &AggregatedVector, name: &str) -> Option<FeatureValue> {
    let value = match name {
        "avg_sent_bytes" => FeatureValue::Num(v.avg_sent_bytes),
        "std_sent_bytes" => FeatureValue::Num(v.std_sent_bytes),
        "min_sent_bytes" => FeatureValue::Num(v.min_sent_bytes),
        "max_sent_bytes" => FeatureValue::Num(v.max_sent_bytes),
        "avg_recv_bytes" => FeatureValue::Num(v.avg_recv_bytes),
        "std_recv_bytes" => FeatureValue::Num(v.std_recv_bytes),
        "min_recv_bytes" => FeatureValue::Num(v.min_recv_bytes),
        "max_recv_bytes" => FeatureValue::Num(v.max_recv_bytes),
        "avg_sent_pct" => FeatureValue::Num(v.avg_sent_pct),
        "std_sent_pct" => FeatureValue::Num(v.std_sent_pct),
        "min_sent_pct" => FeatureValue::Num(v.min_sent_pct),
        "max_sent_pct" => FeatureValue::Num(v.max_sent_pct),
        "avg_recv_pct" => FeatureValue::Num(v.avg_recv_pct),
        "std_recv_pct" => FeatureValue::Num(v.std_recv_pct),
        "min_recv_pct" => FeatureValue::Num(v.min_recv_pct),
        "max_recv_pct" => FeatureValue::Num(v.max_recv_pct),
        "pct_sent_bytes" => FeatureValue::Num(v.pct_sent_bytes),
        "pct_recv_bytes" => FeatureValue::Num(v.pct_recv_bytes),
        "inner_avg_send_interval_local" => FeatureValue::Num(v.inner_avg_send_interval_local),
        "inner_avg_recv_interval_local" => FeatureValue::Num(v.inner_avg_recv_interval_local),
        "outer_avg_send_interval_local" => FeatureValue::Num(v.outer_avg_send_interval_local),
        "outer_avg_recv_interval_local" => FeatureValue::Num(v.outer_avg_recv_interval_local),
        "inner_avg_send_interval_global" => FeatureValue::Num(v.inner_avg_send_interval_global),
        "inner_avg_recv_interval_global" => FeatureValue::Num(v.inner_avg_recv_interval_global),
        "outer_avg_send_interval_global" => FeatureValue::Num(v.outer_avg_send_interval_global),
        "outer_avg_recv_interval_global" => FeatureValue::Num(v.outer_avg_recv_interval_global),
        "net_state" => FeatureValue::Cat(v.net_state.token().to_owned()),
        "mins_since_last_send" => FeatureValue::Num(v.mins_since_last_send),
        "mins_since_last_recv" => FeatureValue::Num(v.mins_since_last_recv),
        "app_state1" => FeatureValue::Cat(v.app_state1.token().to_owned()),
        "app_state2" => FeatureValue::Cat(v.app_state2.token().to_owned()),
        "fg_time_total_secs" => FeatureValue::Num(v.fg_time_total_secs),
        "bg_time_total_secs" => FeatureValue::Num(v.bg_time_total_secs),
        "fg_time_local_secs" => FeatureValue::Num(v.fg_time_local_secs),
        "bg_time_local_secs" => FeatureValue::Num(v.bg_time_local_secs),
        "mins_since_last_active" => FeatureValue::Num(v.mins_since_last_active),
        "days_since_modified" => FeatureValue::Num(v.days_since_modified),
        _ => return None,
    };
    Some(value)
}

/// An ordered selection of features used for training and classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    id: String,
    features: Vec<FeatureDef>,
}

impl FeatureSchema {
    /// All 37 aggregated features, categorical ones included.
    pub fn full() -> Self {
        FeatureSchema { id: "full".into(), features: ALL_FEATURES.to_vec() }
    }

    pub fn subset1() -> Self {
        Self::from_names("subset1", &SUBSET1).expect("built-in subset is valid")
    }

    pub fn subset2() -> Self {
        Self::from_names("subset2", &SUBSET2).expect("built-in subset is valid")
    }

    /// Valid ids for [`FeatureSchema::by_id`].
    pub const IDS: [&'static str; 3] = ["subset1", "subset2", "full"];

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "subset1" => Ok(Self::subset1()),
            "subset2" => Ok(Self::subset2()),
            "full" => Ok(Self::full()),
            other => Err(Error::invalid(format!(
                "unknown feature subset `{other}`; valid options: {}",
                Self::IDS.join(", ")
            ))),
        }
    }

    /// Builds a schema from explicit feature names; every name must be a
    /// known aggregated feature and names must be unique.
    pub fn from_names(id: &str, names: &[&str]) -> Result<Self> {
        let mut features = Vec::with_capacity(names.len());
        for name in names {
            let def = ALL_FEATURES
                .iter()
                .find(|d| d.name == *name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown feature `{name}`")))?;
            if features.contains(&def) {
                return Err(Error::invalid(format!("duplicate feature `{name}`")));
            }
            features.push(def);
        }
        Ok(FeatureSchema { id: id.to_owned(), features })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Extracts this schema's features from a vector, in schema order.
    pub fn extract_row(&self, v: &AggregatedVector) -> Vec<FeatureValue> {
        self.features
            .iter()
            .map(|def| feature_value(v, def.name).expect("schema features are known"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_have_expected_sizes_and_kinds() {
        let s1 = FeatureSchema::subset1();
        assert_eq!(s1.len(), 7);
        assert!(s1.features().iter().all(|f| f.kind == FeatureKind::Numeric));
        let s2 = FeatureSchema::subset2();
        assert_eq!(s2.len(), 9);
        assert_eq!(&s2.features()[..7], s1.features());
        assert_eq!(FeatureSchema::full().len(), ALL_FEATURES.len());
    }

    #[test]
    fn all_feature_names_are_unique_and_resolvable() {
        let v = AggregatedVector::default();
        for (i, def) in ALL_FEATURES.iter().enumerate() {
            assert!(feature_value(&v, def.name).is_some(), "{} not resolvable", def.name);
            assert!(
                ALL_FEATURES[..i].iter().all(|d| d.name != def.name),
                "{} duplicated",
                def.name
            );
        }
    }

    #[test]
    fn unknown_subset_id_is_rejected_with_options() {
        let err = FeatureSchema::by_id("subset9").unwrap_err().to_string();
        assert!(err.contains("subset1"), "message should list options: {err}");
    }

    #[test]
    fn extract_row_follows_schema_order() {
        let mut v = AggregatedVector::default();
        v.avg_sent_bytes = 12.5;
        v.net_state = super::super::AggNetState::Mixed;
        let schema = FeatureSchema::from_names("t", &["net_state", "avg_sent_bytes"]).unwrap();
        let row = schema.extract_row(&v);
        assert_eq!(row[0], FeatureValue::Cat("mixed".into()));
        assert_eq!(row[1], FeatureValue::Num(12.5));
    }
}
