//! Cross-feature model files: a header block describing the schema, the
//! frozen feature means, the learner and threshold, followed by one nested
//! base-model block per feature.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::schema::{FeatureKind, FeatureSchema};
use crate::learn::serial::{parse_block, write_block, LineCursor};
use crate::learn::MODEL_HEADER;
use super::{BaseLearner, CrossFeatureModel};

/// Serializes a cross-feature model (calibrated or not).
pub fn model_to_string(model: &CrossFeatureModel) -> Result<String> {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    out.push_str("kind cross_feature\n");
    out.push_str(&format!("schema {}\n", model.schema().id()));
    out.push_str(&format!("features {}\n", model.schema().len()));
    for (i, (def, mean)) in model
        .schema()
        .features()
        .iter()
        .zip(model.feature_means())
        .enumerate()
    {
        let kind = match def.kind {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Categorical => "categorical",
        };
        match mean {
            Some(m) => out.push_str(&format!("feature {i} {kind} {} mean {m}\n", def.name)),
            None => out.push_str(&format!("feature {i} {kind} {} mean none\n", def.name)),
        }
    }
    out.push_str(&format!("learner {}\n", model.base_learner().token()));
    match model.threshold_logp() {
        Some(t) => out.push_str(&format!("threshold {t}\n")),
        None => out.push_str("threshold none\n"),
    }
    for (i, predictor) in model.predictors().iter().enumerate() {
        out.push_str(&format!("predictor {i}\n"));
        write_block(&mut out, predictor)?;
    }
    out.push_str("end\n");
    Ok(out)
}

/// Parses a cross-feature model file.
pub fn model_from_str(text: &str, path: Option<&str>) -> Result<CrossFeatureModel> {
    let mut cursor = LineCursor::new(text, path);
    let header = cursor.next()?;
    if header != MODEL_HEADER {
        return Err(cursor.err(format!("unknown model header `{header}`, expected `{MODEL_HEADER}`")));
    }
    let kind = cursor.expect("kind")?;
    if kind != ["cross_feature"] {
        return Err(cursor.err("expected a cross_feature model"));
    }

    let schema_fields = cursor.expect("schema")?;
    let schema_id = *schema_fields
        .first()
        .ok_or_else(|| cursor.err("missing schema id"))?;

    let n_features: usize = {
        let fields = cursor.expect("features")?;
        if fields.len() != 1 {
            return Err(cursor.err("`features` expects a count"));
        }
        cursor.parse_field(fields[0], "feature count")?
    };

    let mut names = Vec::with_capacity(n_features);
    let mut kinds = Vec::with_capacity(n_features);
    let mut means = Vec::with_capacity(n_features);
    for i in 0..n_features {
        let fields = cursor.expect("feature")?;
        if fields.len() != 5 || fields[3] != "mean" {
            return Err(cursor.err("feature line expects `<idx> <kind> <name> mean <value>`"));
        }
        let idx: usize = cursor.parse_field(fields[0], "feature index")?;
        if idx != i {
            return Err(cursor.err(format!("feature {idx} out of order")));
        }
        kinds.push(match fields[1] {
            "numeric" => FeatureKind::Numeric,
            "categorical" => FeatureKind::Categorical,
            other => return Err(cursor.err(format!("unknown feature kind `{other}`"))),
        });
        names.push(fields[2].to_owned());
        means.push(if fields[4] == "none" {
            None
        } else {
            Some(cursor.parse_field(fields[4], "feature mean")?)
        });
    }

    let learner_fields = cursor.expect("learner")?;
    let learner = BaseLearner::from_str(
        learner_fields
            .first()
            .ok_or_else(|| cursor.err("missing learner id"))?,
    )?;

    let threshold_fields = cursor.expect("threshold")?;
    let threshold = match threshold_fields.as_slice() {
        ["none"] => None,
        [raw] => Some(cursor.parse_field::<f64>(raw, "threshold")?),
        _ => return Err(cursor.err("`threshold` expects one value")),
    };

    let mut predictors = Vec::with_capacity(n_features);
    for i in 0..n_features {
        let fields = cursor.expect("predictor")?;
        if fields.len() != 1 {
            return Err(cursor.err("`predictor` expects an index"));
        }
        let idx: usize = cursor.parse_field(fields[0], "predictor index")?;
        if idx != i {
            return Err(cursor.err(format!("predictor {idx} out of order")));
        }
        predictors.push(parse_block(&mut cursor)?);
    }
    let closing = cursor.next()?;
    if closing != "end" {
        return Err(cursor.err(format!("expected final `end`, found `{closing}`")));
    }
    if !cursor.at_end() {
        return Err(cursor.err("trailing content after model"));
    }

    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = FeatureSchema::from_names(schema_id, &name_refs)?;
    for (def, kind) in schema.features().iter().zip(&kinds) {
        if def.kind != *kind {
            return Err(Error::invalid(format!(
                "feature `{}` kind disagrees with the canonical table",
                def.name
            )));
        }
    }
    CrossFeatureModel::from_parts(schema, predictors, means, learner, threshold)
}

pub fn write_model_file(path: &Path, model: &CrossFeatureModel) -> Result<()> {
    fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_model_file(path: &Path) -> Result<CrossFeatureModel> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_str(&text, Some(&path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfeat::{train_cross_feature, CrossFeatureConfig};
    use crate::features::AggregatedVector;

    fn wavy_vectors(n: usize) -> Vec<AggregatedVector> {
        (0..n)
            .map(|i| {
                let x = i as f64;
                let mut v = AggregatedVector::default();
                v.avg_sent_bytes = 200.0 + (x * 0.31).sin() * 50.0;
                v.avg_recv_bytes = 400.0 + (x * 0.17).cos() * 120.0;
                v.pct_recv_bytes = 40.0 + (x * 0.11).sin() * 10.0;
                v.inner_avg_send_interval_global = 9.0 + (x * 0.07).cos();
                v.inner_avg_recv_interval_global = 11.0 + (x * 0.05).sin();
                v.outer_avg_send_interval_global = 80.0 + (x * 0.03).cos() * 15.0;
                v.outer_avg_recv_interval_global = 95.0 + (x * 0.02).sin() * 10.0;
                v
            })
            .collect()
    }

    #[test]
    fn calibrated_model_round_trips_with_identical_verdicts() {
        let vectors = wavy_vectors(80);
        let schema = FeatureSchema::subset1();
        let mut model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        let anomalies: Vec<AggregatedVector> = vectors[..8]
            .iter()
            .map(|v| {
                let mut a = v.clone();
                a.avg_sent_bytes += 5_000.0;
                a.avg_recv_bytes += 5_000.0;
                a.pct_recv_bytes += 150.0;
                a.inner_avg_send_interval_global += 100.0;
                a.inner_avg_recv_interval_global += 100.0;
                a.outer_avg_send_interval_global += 500.0;
                a.outer_avg_recv_interval_global += 500.0;
                a
            })
            .collect();
        model.calibrate(&vectors[..16], &anomalies).unwrap();

        let text = model_to_string(&model).unwrap();
        let parsed = model_from_str(&text, None).unwrap();
        assert_eq!(parsed, model);
        for v in vectors.iter().chain(&anomalies) {
            let a = model.classify_instance(v).unwrap();
            let b = parsed.classify_instance(v).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(model_to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn uncalibrated_threshold_round_trips_as_none() {
        let vectors = wavy_vectors(30);
        let schema = FeatureSchema::subset1();
        let model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        let text = model_to_string(&model).unwrap();
        assert!(text.contains("threshold none"));
        let parsed = model_from_str(&text, None).unwrap();
        assert!(!parsed.is_calibrated());
    }

    #[test]
    fn corrupted_files_are_rejected_with_position() {
        let vectors = wavy_vectors(30);
        let schema = FeatureSchema::subset1();
        let model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        let text = model_to_string(&model).unwrap();
        let broken = text.replace("learner decision_table", "learner coin_flip");
        let err = model_from_str(&broken, Some("m.model")).unwrap_err().to_string();
        assert!(err.contains("coin_flip"), "got: {err}");
    }
}
