//! Cross-feature analysis.
//!
//! For every active feature, a predictor is trained to infer that feature
//! from all the others. At test time each predictor's miss is turned into a
//! distance in `[0, 0.999]`, the per-feature normality probabilities
//! `1 - distance` are multiplied (summed in log space), and the result is
//! compared against a calibrated threshold. Instances whose features are
//! mutually inconsistent under the learned correlations score low and are
//! flagged anomalous.

mod serial;

pub use serial::{model_from_str, model_to_string, read_model_file, write_model_file};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::schema::{FeatureKind, FeatureSchema, FeatureValue};
use crate::features::AggregatedVector;
use crate::learn::{
    train_classification_tree, train_decision_table, train_regression_tree, LearnedModel,
    TableParams, TrainingMatrix, TreeParams,
};

/// Distances are capped here so a single feature can never force the
/// probability product to exactly zero.
pub const DISTANCE_CAP: f64 = 0.999;

/// Floor for each per-feature probability term, keeping log sums finite.
pub const PROBABILITY_FLOOR: f64 = 0.001;

/// Default cap on the number of training instances per model.
pub const DEFAULT_TRAIN_CAP: usize = 150;

/// Which base learner handles numeric target features. Categorical targets
/// always go to the classification tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseLearner {
    DecisionTable,
    RegressionTree,
}

impl BaseLearner {
    pub fn token(self) -> &'static str {
        match self {
            BaseLearner::DecisionTable => "decision_table",
            BaseLearner::RegressionTree => "regression_tree",
        }
    }

    /// Valid ids for CLI and manifest parsing.
    pub const IDS: [&'static str; 2] = ["decision_table", "regression_tree"];
}

impl FromStr for BaseLearner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decision_table" => Ok(BaseLearner::DecisionTable),
            "regression_tree" => Ok(BaseLearner::RegressionTree),
            other => Err(Error::invalid(format!(
                "unknown base learner `{other}`; valid options: {}",
                Self::IDS.join(", ")
            ))),
        }
    }
}

impl fmt::Display for BaseLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Training knobs for the ensemble.
#[derive(Debug, Clone)]
pub struct CrossFeatureConfig {
    pub base_learner: BaseLearner,
    /// At most this many training instances are used per model.
    pub train_cap: usize,
    pub tree: TreeParams,
    pub table: TableParams,
}

impl Default for CrossFeatureConfig {
    fn default() -> Self {
        CrossFeatureConfig {
            base_learner: BaseLearner::DecisionTable,
            train_cap: DEFAULT_TRAIN_CAP,
            tree: TreeParams::default(),
            table: TableParams::default(),
        }
    }
}

impl CrossFeatureConfig {
    pub fn with_learner(base_learner: BaseLearner) -> Self {
        CrossFeatureConfig { base_learner, ..Default::default() }
    }
}

/// Per-instance normality decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    /// Sum over active features of `ln(1 - distance)`; always <= 0.
    pub log_probability: f64,
    pub is_anomalous: bool,
    /// Distances in schema order.
    pub per_feature_distances: Vec<f64>,
}

/// The trained ensemble: one predictor per active feature, the frozen
/// per-feature training means, and (after calibration) the decision
/// threshold in log-probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFeatureModel {
    schema: FeatureSchema,
    predictors: Vec<LearnedModel>,
    /// Mean of observed training values per feature; `None` for categorical
    /// features. Frozen at training time.
    feature_means: Vec<Option<f64>>,
    base_learner: BaseLearner,
    threshold_logp: Option<f64>,
}

impl CrossFeatureModel {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn base_learner(&self) -> BaseLearner {
        self.base_learner
    }

    pub fn threshold_logp(&self) -> Option<f64> {
        self.threshold_logp
    }

    pub fn feature_means(&self) -> &[Option<f64>] {
        &self.feature_means
    }

    pub fn predictors(&self) -> &[LearnedModel] {
        &self.predictors
    }

    pub fn is_calibrated(&self) -> bool {
        self.threshold_logp.is_some()
    }

    pub(crate) fn from_parts(
        schema: FeatureSchema,
        predictors: Vec<LearnedModel>,
        feature_means: Vec<Option<f64>>,
        base_learner: BaseLearner,
        threshold_logp: Option<f64>,
    ) -> Result<Self> {
        if predictors.len() != schema.len() || feature_means.len() != schema.len() {
            return Err(Error::invalid("predictor/means arity does not match schema"));
        }
        if let Some(t) = threshold_logp {
            if !(t <= 0.0) {
                return Err(Error::invalid("threshold log-probability must be <= 0"));
            }
        }
        Ok(CrossFeatureModel { schema, predictors, feature_means, base_learner, threshold_logp })
    }

    fn check_row(&self, row: &[FeatureValue]) -> Result<()> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} features, schema `{}` has {}",
                row.len(),
                self.schema.id(),
                self.schema.len()
            )));
        }
        for (value, def) in row.iter().zip(self.schema.features()) {
            if value.kind() != def.kind {
                return Err(Error::SchemaMismatch(format!(
                    "feature `{}` has the wrong kind",
                    def.name
                )));
            }
        }
        Ok(())
    }

    /// Per-feature distances and the summed log probability for one row.
    pub fn score_row(&self, row: &[FeatureValue]) -> Result<(f64, Vec<f64>)> {
        self.check_row(row)?;
        let mut distances = Vec::with_capacity(self.schema.len());
        let mut logp = 0.0;
        for (i, predictor) in self.predictors.iter().enumerate() {
            let predicted = predictor.predict(row)?;
            let d = feature_distance(&predicted, &row[i], self.feature_means[i]);
            logp += (1.0 - d).max(PROBABILITY_FLOOR).ln();
            distances.push(d);
        }
        Ok((logp, distances))
    }

    /// Scores a vector against the model (calibration not required).
    pub fn normality_log_probability(&self, vector: &AggregatedVector) -> Result<f64> {
        let row = self.schema.extract_row(vector);
        Ok(self.score_row(&row)?.0)
    }

    /// Chooses the threshold maximizing Youden's J (TPR - FPR) over the
    /// labeled calibration scores; candidates are midpoints between
    /// consecutive distinct scores and ties break toward the highest
    /// candidate. Returns the threshold and stores it in the model.
    pub fn calibrate(
        &mut self,
        normal: &[AggregatedVector],
        anomalous: &[AggregatedVector],
    ) -> Result<f64> {
        let normal_rows: Vec<Vec<FeatureValue>> =
            normal.iter().map(|v| self.schema.extract_row(v)).collect();
        let anomalous_rows: Vec<Vec<FeatureValue>> =
            anomalous.iter().map(|v| self.schema.extract_row(v)).collect();
        self.calibrate_rows(&normal_rows, &anomalous_rows)
    }

    /// Row-level variant of [`CrossFeatureModel::calibrate`].
    pub fn calibrate_rows(
        &mut self,
        normal: &[Vec<FeatureValue>],
        anomalous: &[Vec<FeatureValue>],
    ) -> Result<f64> {
        if normal.is_empty() || anomalous.is_empty() {
            return Err(Error::invalid("calibration requires non-empty normal and anomalous sets"));
        }
        let normal_scores: Vec<f64> = normal
            .iter()
            .map(|r| self.score_row(r).map(|(logp, _)| logp))
            .collect::<Result<_>>()?;
        let anomalous_scores: Vec<f64> = anomalous
            .iter()
            .map(|r| self.score_row(r).map(|(logp, _)| logp))
            .collect::<Result<_>>()?;
        let threshold = choose_threshold(&normal_scores, &anomalous_scores);
        self.threshold_logp = Some(threshold);
        Ok(threshold)
    }

    /// Overrides the calibrated threshold; must be <= 0.
    pub fn set_threshold(&mut self, threshold_logp: f64) -> Result<()> {
        if !(threshold_logp <= 0.0) {
            return Err(Error::invalid("threshold log-probability must be <= 0"));
        }
        self.threshold_logp = Some(threshold_logp);
        Ok(())
    }

    /// Classifies one vector. Requires a calibrated threshold.
    pub fn classify_instance(&self, vector: &AggregatedVector) -> Result<Verdict> {
        let row = self.schema.extract_row(vector);
        self.classify_row(&row)
    }

    /// Row-level variant of [`CrossFeatureModel::classify_instance`].
    pub fn classify_row(&self, row: &[FeatureValue]) -> Result<Verdict> {
        let threshold = self.threshold_logp.ok_or(Error::Uncalibrated)?;
        let (log_probability, per_feature_distances) = self.score_row(row)?;
        Ok(Verdict {
            log_probability,
            is_anomalous: log_probability < threshold,
            per_feature_distances,
        })
    }
}

/// Distance between a predicted and an observed value for one feature.
///
/// Numeric features: `|predicted - actual|` divided by the absolute
/// training mean, capped at [`DISTANCE_CAP`]; when the mean is zero any
/// nonzero miss is already "worse than the mean", so it maps straight to
/// the cap. Categorical features: Hamming, with a mismatch mapped to the
/// cap instead of 1 so the probability never collapses to exactly zero.
pub fn feature_distance(
    predicted: &FeatureValue,
    actual: &FeatureValue,
    training_mean: Option<f64>,
) -> f64 {
    match (predicted, actual) {
        (FeatureValue::Num(p), FeatureValue::Num(a)) => {
            let diff = (p - a).abs();
            if diff == 0.0 {
                return 0.0;
            }
            let mean = training_mean.map(f64::abs).unwrap_or(0.0);
            if mean == 0.0 {
                return DISTANCE_CAP;
            }
            (diff / mean).min(DISTANCE_CAP)
        }
        (FeatureValue::Cat(p), FeatureValue::Cat(a)) => {
            if p == a {
                0.0
            } else {
                DISTANCE_CAP
            }
        }
        // Kind mismatches are rejected earlier; treat as maximal surprise.
        _ => DISTANCE_CAP,
    }
}

/// Threshold maximizing Youden's J over candidate midpoints; ties resolve
/// to the highest candidate. With no distinct scores at all there is no
/// candidate, so the threshold sits just below the common score and nothing
/// is flagged.
fn choose_threshold(normal_scores: &[f64], anomalous_scores: &[f64]) -> f64 {
    let mut all: Vec<f64> = normal_scores.iter().chain(anomalous_scores).copied().collect();
    all.sort_by(|a, b| a.total_cmp(b));
    all.dedup();
    if all.len() < 2 {
        return all[0] - 1.0;
    }
    let candidates = all.windows(2).map(|w| (w[0] + w[1]) / 2.0);
    let mut best: Option<(f64, f64)> = None; // (J, threshold)
    for threshold in candidates {
        let tpr = rate_below(anomalous_scores, threshold);
        let fpr = rate_below(normal_scores, threshold);
        let j = tpr - fpr;
        let better = match best {
            None => true,
            Some((best_j, best_thr)) => {
                j > best_j + 1e-12 || ((j - best_j).abs() <= 1e-12 && threshold > best_thr)
            }
        };
        if better {
            best = Some((j, threshold));
        }
    }
    best.expect("at least one candidate").1
}

fn rate_below(scores: &[f64], threshold: f64) -> f64 {
    scores.iter().filter(|&&s| s < threshold).count() as f64 / scores.len() as f64
}

/// Trains one predictor per active feature: the configured base learner for
/// numeric targets, the classification tree for categorical ones. The
/// threshold is unset until calibration.
pub fn train_cross_feature(
    vectors: &[AggregatedVector],
    schema: &FeatureSchema,
    config: &CrossFeatureConfig,
) -> Result<CrossFeatureModel> {
    let rows: Vec<Vec<FeatureValue>> =
        vectors.iter().take(config.train_cap).map(|v| schema.extract_row(v)).collect();
    train_cross_feature_rows(rows, schema, config)
}

/// Row-level variant of [`train_cross_feature`].
pub fn train_cross_feature_rows(
    rows: Vec<Vec<FeatureValue>>,
    schema: &FeatureSchema,
    config: &CrossFeatureConfig,
) -> Result<CrossFeatureModel> {
    if schema.len() < 2 {
        return Err(Error::invalid("cross-feature analysis requires at least 2 active features"));
    }
    if rows.len() < 10 {
        return Err(Error::invalid(format!(
            "cross-feature training requires at least 10 vectors, got {}",
            rows.len()
        )));
    }
    let rows: Vec<Vec<FeatureValue>> = rows.into_iter().take(config.train_cap).collect();

    let feature_means: Vec<Option<f64>> = schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, def)| match def.kind {
            FeatureKind::Numeric => {
                let sum: f64 = rows.iter().map(|r| r[i].as_num().expect("numeric")).sum();
                Some(sum / rows.len() as f64)
            }
            FeatureKind::Categorical => None,
        })
        .collect();

    let mut predictors = Vec::with_capacity(schema.len());
    for (i, def) in schema.features().iter().enumerate() {
        let matrix = TrainingMatrix::new(schema.features().to_vec(), rows.clone(), i)?;
        let model = match def.kind {
            FeatureKind::Categorical => {
                LearnedModel::Tree(train_classification_tree(&matrix, &config.tree)?)
            }
            FeatureKind::Numeric => match config.base_learner {
                BaseLearner::DecisionTable => {
                    LearnedModel::Table(train_decision_table(&matrix, &config.table)?)
                }
                BaseLearner::RegressionTree => {
                    LearnedModel::Tree(train_regression_tree(&matrix, &config.tree)?)
                }
            },
        };
        predictors.push(model);
    }

    CrossFeatureModel::from_parts(
        schema.clone(),
        predictors,
        feature_means,
        config.base_learner,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::schema::FeatureSchema;

    /// Vector with the subset1 features set from a short slice; everything
    /// else stays at its default.
    fn subset1_vector(values: [f64; 7]) -> AggregatedVector {
        let mut v = AggregatedVector::default();
        v.avg_sent_bytes = values[0];
        v.avg_recv_bytes = values[1];
        v.pct_recv_bytes = values[2];
        v.inner_avg_send_interval_global = values[3];
        v.inner_avg_recv_interval_global = values[4];
        v.outer_avg_send_interval_global = values[5];
        v.outer_avg_recv_interval_global = values[6];
        v
    }

    fn constant_vectors(n: usize) -> Vec<AggregatedVector> {
        (0..n).map(|_| subset1_vector([100.0, 200.0, 60.0, 10.0, 12.0, 45.0, 50.0])).collect()
    }

    #[test]
    fn subset1_model_holds_seven_predictors() {
        let vectors = constant_vectors(20);
        let schema = FeatureSchema::subset1();
        let model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        assert_eq!(model.predictors().len(), 7);
        assert!(!model.is_calibrated());
    }

    #[test]
    fn constant_training_data_scores_zero_distances() {
        let vectors = constant_vectors(20);
        let schema = FeatureSchema::subset1();
        let model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        for v in &vectors {
            let row = schema.extract_row(v);
            let (logp, distances) = model.score_row(&row).unwrap();
            assert_eq!(logp, 0.0);
            assert!(distances.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn planted_linear_dependency_is_learned() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let vectors: Vec<AggregatedVector> = (0..150)
            .map(|_| {
                let f1 = rng.random::<f64>() * 100.0;
                let f2 = rng.random::<f64>() * 100.0;
                let independent = rng.random::<f64>() * 100.0;
                // pct_recv_bytes (index 2) = f1 + f2; the rest vary freely.
                subset1_vector([
                    f1,
                    f2,
                    f1 + f2,
                    independent,
                    rng.random::<f64>() * 100.0,
                    rng.random::<f64>() * 100.0,
                    rng.random::<f64>() * 100.0,
                ])
            })
            .collect();
        let schema = FeatureSchema::subset1();
        let config = CrossFeatureConfig::with_learner(BaseLearner::RegressionTree);
        let model = train_cross_feature(&vectors, &schema, &config).unwrap();

        let mse_of = |target: usize| {
            vectors
                .iter()
                .map(|v| {
                    let row = schema.extract_row(v);
                    let pred = model.predictors()[target].predict(&row).unwrap();
                    let actual = row[target].as_num().unwrap();
                    let d = pred.as_num().unwrap() - actual;
                    d * d
                })
                .sum::<f64>()
                / vectors.len() as f64
        };
        let independent_values: Vec<f64> = vectors
            .iter()
            .map(|v| v.inner_avg_send_interval_global)
            .collect();
        let mean = independent_values.iter().sum::<f64>() / independent_values.len() as f64;
        let var = independent_values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / independent_values.len() as f64;
        assert!(
            mse_of(2) < 0.01 * var,
            "dependent-feature MSE {} not below 1% of independent variance {}",
            mse_of(2),
            var
        );
    }

    #[test]
    fn distance_examples_from_the_rulebook() {
        let mean = Some(100.0);
        assert_eq!(
            feature_distance(&FeatureValue::Num(55.0), &FeatureValue::Num(55.0), mean),
            0.0
        );
        let d = feature_distance(&FeatureValue::Num(120.0), &FeatureValue::Num(100.0), mean);
        assert!((d - 0.2).abs() < 1e-15);
        assert_eq!(
            feature_distance(&FeatureValue::Num(300.0), &FeatureValue::Num(100.0), mean),
            DISTANCE_CAP
        );
    }

    #[test]
    fn degenerate_mean_uses_the_cap_semantics() {
        let mean = Some(0.0);
        assert_eq!(feature_distance(&FeatureValue::Num(0.0), &FeatureValue::Num(0.0), mean), 0.0);
        assert_eq!(
            feature_distance(&FeatureValue::Num(0.5), &FeatureValue::Num(0.0), mean),
            DISTANCE_CAP
        );
    }

    #[test]
    fn categorical_distance_is_capped_hamming() {
        let wifi = FeatureValue::Cat("wifi".into());
        let mixed = FeatureValue::Cat("mixed".into());
        assert_eq!(feature_distance(&wifi, &wifi.clone(), None), 0.0);
        assert_eq!(feature_distance(&wifi, &mixed, None), DISTANCE_CAP);
    }

    #[test]
    fn log_probability_matches_hand_computation() {
        // Two features at distances 0.2 and 0.5; a third at 0.
        let expected = (0.8f64).ln() + (0.5f64).ln();
        let logp: f64 = [0.2, 0.5, 0.0]
            .iter()
            .map(|d| (1.0 - d).max(PROBABILITY_FLOOR).ln())
            .sum();
        assert!((logp - expected).abs() < 1e-12);
        // A capped feature contributes ln(0.001).
        let capped = (1.0 - DISTANCE_CAP).max(PROBABILITY_FLOOR).ln();
        assert!((capped - (0.001f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_calibration_lands_between_the_clusters() {
        assert_eq!(choose_threshold(&[-1.0, -2.0], &[-10.0, -12.0]), -6.0);
    }

    #[test]
    fn tied_j_takes_the_highest_candidate() {
        // Identical score distributions: J == 0 everywhere.
        let t = choose_threshold(&[-1.0, -2.0, -3.0], &[-1.0, -2.0, -3.0]);
        assert_eq!(t, -1.5);
    }

    #[test]
    fn all_equal_scores_flag_nothing() {
        let t = choose_threshold(&[-2.0, -2.0], &[-2.0]);
        assert_eq!(t, -3.0);
        assert!(!(-2.0 < t));
    }

    #[test]
    fn calibration_matches_an_exhaustive_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let normal: Vec<f64> = (0..20).map(|_| -rng.random::<f64>() * 10.0).collect();
            let anomalous: Vec<f64> = (0..15).map(|_| -5.0 - rng.random::<f64>() * 20.0).collect();
            let chosen = choose_threshold(&normal, &anomalous);
            let j_of = |t: f64| rate_below(&anomalous, t) - rate_below(&normal, t);
            // Brute-force sweep over a fine grid of candidate thresholds.
            let best_j = (-400..=0)
                .map(|i| j_of(i as f64 * 0.1))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                j_of(chosen) >= best_j - 1e-9,
                "chosen J {} below sweep J {}",
                j_of(chosen),
                best_j
            );
        }
    }

    #[test]
    fn classification_requires_calibration() {
        let vectors = constant_vectors(20);
        let schema = FeatureSchema::subset1();
        let model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();
        assert!(matches!(
            model.classify_instance(&vectors[0]),
            Err(Error::Uncalibrated)
        ));
    }

    #[test]
    fn memorized_vector_is_normal_and_displaced_vector_is_anomalous() {
        let vectors = constant_vectors(30);
        let schema = FeatureSchema::subset1();
        let mut model =
            train_cross_feature(&vectors, &schema, &CrossFeatureConfig::default()).unwrap();

        // Displace every numeric feature by 2x its training mean.
        let displaced: Vec<AggregatedVector> = vectors[..5]
            .iter()
            .map(|v| {
                let mut d = v.clone();
                d.avg_sent_bytes += 2.0 * 100.0 + 1.0;
                d.avg_recv_bytes += 2.0 * 200.0 + 1.0;
                d.pct_recv_bytes += 2.0 * 60.0 + 1.0;
                d.inner_avg_send_interval_global += 2.0 * 10.0 + 1.0;
                d.inner_avg_recv_interval_global += 2.0 * 12.0 + 1.0;
                d.outer_avg_send_interval_global += 2.0 * 45.0 + 1.0;
                d.outer_avg_recv_interval_global += 2.0 * 50.0 + 1.0;
                d
            })
            .collect();
        model.calibrate(&vectors[..10], &displaced).unwrap();

        let normal = model.classify_instance(&vectors[0]).unwrap();
        assert!(!normal.is_anomalous);
        let anomaly = model.classify_instance(&displaced[0]).unwrap();
        assert!(anomaly.is_anomalous);
        assert!(anomaly.per_feature_distances.iter().all(|&d| d == DISTANCE_CAP));
    }

    #[test]
    fn distances_stay_in_bounds_and_logp_is_monotone() {
        // Monotonicity of the log-sum in any single distance.
        let logp = |distances: &[f64]| -> f64 {
            distances.iter().map(|&d| (1.0 - d).max(PROBABILITY_FLOOR).ln()).sum()
        };
        let base = [0.1, 0.3, 0.0, 0.7];
        let mut bumped = base;
        bumped[1] = 0.5;
        assert!(logp(&bumped) < logp(&base));
        // Permutation invariance.
        let mut shuffled = base;
        shuffled.reverse();
        assert!((logp(&shuffled) - logp(&base)).abs() < 1e-15);
    }

    #[test]
    fn training_rejects_tiny_inputs() {
        let schema = FeatureSchema::subset1();
        let config = CrossFeatureConfig::default();
        assert!(train_cross_feature(&constant_vectors(5), &schema, &config).is_err());
        let one_feature = FeatureSchema::from_names("one", &["avg_sent_bytes"]).unwrap();
        assert!(train_cross_feature(&constant_vectors(20), &one_feature, &config).is_err());
    }
}
