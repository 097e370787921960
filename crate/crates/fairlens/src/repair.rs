//! One executable repair method per category, plus before/after accounting.
//!
//! Pre-processing: reweighing (and, on explicit request, a rank-preserving
//! quantile repair of the non-protected numeric attributes). In-processing:
//! retraining under the group-gap regularizer. Post-processing: the reject
//! option rule, which flips labels inside the low-confidence band without
//! touching the model. Every outcome is measured on the held-out test split
//! with the same seed discipline as the baseline, so deltas isolate the
//! repair effect.

use serde::{Deserialize, Serialize};

use crate::dataset::{encode, group_mask, split, valuations_over, AttributeKind, Dataset, Value};
use crate::error::{Error, Result};
use crate::metrics::{
    self, accuracy_from_predictions, encode_for_model, FairnessMetric, MetricKind,
};
use crate::model::{train_for_schema, Mlp, TrainConfig};
use crate::selector::Method;

/// Before/after scores of one repair run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub method: Method,
    pub metric: FairnessMetric,
    pub fairness_before: f64,
    pub fairness_after: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// fairness_before - fairness_after; positive means improved fairness.
    pub improvement: f64,
    /// accuracy_after - accuracy_before; negative means lost accuracy.
    pub accuracy_delta: f64,
}

impl RepairOutcome {
    fn new(
        method: Method,
        metric: FairnessMetric,
        fairness_before: f64,
        fairness_after: f64,
        accuracy_before: f64,
        accuracy_after: f64,
    ) -> RepairOutcome {
        RepairOutcome {
            method,
            metric,
            fairness_before,
            fairness_after,
            accuracy_before,
            accuracy_after,
            improvement: fairness_before - fairness_after,
            accuracy_delta: accuracy_after - accuracy_before,
        }
    }

    /// Improvement minus accuracy loss; the candidate-comparison score.
    pub fn score(&self) -> f64 {
        self.improvement + self.accuracy_delta
    }
}

/// The low-confidence band the reject option rule acts on:
/// rows with 0.5 < max class probability <= theta_band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub theta_band: f64,
}

impl CriticalRegion {
    pub fn new(theta_band: f64) -> Result<CriticalRegion> {
        if !(theta_band > 0.5 && theta_band <= 1.0) {
            return Err(Error::Config(format!(
                "theta_band {theta_band} must be in (0.5, 1]"
            )));
        }
        Ok(CriticalRegion { theta_band })
    }
}

/// Reject-option decision overlay: per-row forced labels on the split it was
/// computed for, serializable so the post-processing is auditable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionOverlay {
    pub theta_band: f64,
    pub attribute: String,
    /// Row index -> label forced by the rule (rows outside the band absent).
    pub overrides: Vec<(usize, usize)>,
}

/// Knobs for the individual methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairParams {
    /// Regularizer weight for in-processing retraining.
    pub lambda: f64,
    /// Fraction of the quantile repair applied by the remover.
    pub repair_level: f64,
    /// Reject option band.
    pub theta_band: f64,
}

impl Default for RepairParams {
    fn default() -> Self {
        RepairParams {
            lambda: 0.5,
            repair_level: 1.0,
            theta_band: 0.7,
        }
    }
}

/// Everything a repair run needs: the split, the training recipe, the metric
/// under repair and the already-trained baseline to compare against.
pub struct RepairContext<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub config: &'a TrainConfig,
    pub metric: &'a FairnessMetric,
    pub baseline: &'a Mlp,
}

impl RepairContext<'_> {
    fn before_scores(&self) -> Result<(f64, f64)> {
        Ok((
            metrics::metric_value(self.baseline, self.test, self.metric, None)?,
            metrics::accuracy(self.baseline, self.test)?,
        ))
    }

    fn retrain(&self, data: &Dataset, config: &TrainConfig) -> Result<Mlp> {
        let matrix = encode(data)?;
        let groups = match &config.penalty_attribute {
            Some(attr) if config.fairness_penalty > 0.0 => Some(data.privileged_mask(attr)?),
            _ => None,
        };
        train_for_schema(
            &matrix,
            config,
            groups.as_deref(),
            data.schema.fingerprint(),
            data.schema.favorable_label,
        )
    }
}

/// Kamiran-Calders reweighing over one protected attribute: the weight of a
/// row in group g with label c is count(g) * count(c) / (n * count(g and c)),
/// which makes group and label independent under the weighted distribution.
pub fn reweigh(data: &Dataset, attribute: &str, favorable: usize) -> Result<Vec<f64>> {
    let mask = data.privileged_mask(attribute)?;
    reweigh_cells(
        data,
        &[mask.clone(), mask.iter().map(|m| !m).collect()],
        favorable,
    )
}

/// Reweighing generalized to the full valuation grid of several protected
/// attributes; for a single attribute it reduces to [`reweigh`].
pub fn reweigh_valuations(
    data: &Dataset,
    attributes: &[String],
    favorable: usize,
) -> Result<Vec<f64>> {
    let thetas = valuations_over(&data.schema, attributes)?;
    let masks: Vec<Vec<bool>> = thetas
        .iter()
        .map(|t| group_mask(data, t))
        .collect::<Result<_>>()?;
    reweigh_cells(data, &masks, favorable)
}

fn reweigh_cells(data: &Dataset, masks: &[Vec<bool>], favorable: usize) -> Result<Vec<f64>> {
    let n = data.n_rows() as f64;
    let label_count = |is_fav: bool| {
        data.labels
            .iter()
            .filter(|&&y| (y == favorable) == is_fav)
            .count() as f64
    };
    let counts = [label_count(false), label_count(true)];
    let mut weights = vec![0.0; data.n_rows()];
    for mask in masks {
        let group_size = mask.iter().filter(|&&m| m).count() as f64;
        for is_fav in [false, true] {
            let cell = mask
                .iter()
                .zip(&data.labels)
                .filter(|(m, &y)| **m && (y == favorable) == is_fav)
                .count() as f64;
            if cell == 0.0 {
                return Err(Error::EmptyGroup(format!(
                    "reweighing cell (group, {}) has no rows",
                    if is_fav { "favorable" } else { "unfavorable" }
                )));
            }
            let w = group_size * counts[usize::from(is_fav)] / (n * cell);
            for (i, (m, &y)) in mask.iter().zip(&data.labels).enumerate() {
                if *m && (y == favorable) == is_fav {
                    weights[i] = w;
                }
            }
        }
    }
    Ok(weights)
}

/// Rank-preserving quantile repair: per non-protected numeric attribute,
/// each group's values move toward the groups' rank-matched median
/// distribution by `repair_level`. Protected columns are never touched.
pub fn disparate_impact_remove(
    data: &Dataset,
    attributes: &[String],
    repair_level: f64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&repair_level) {
        return Err(Error::Config(format!(
            "repair_level {repair_level} must be in [0, 1]"
        )));
    }
    let thetas = valuations_over(&data.schema, attributes)?;
    let masks: Vec<Vec<bool>> = thetas
        .iter()
        .map(|t| group_mask(data, t))
        .collect::<Result<_>>()?;

    // every protected attribute is off limits, not just the ones grouped over
    let numeric_columns: Vec<usize> = data
        .schema
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            matches!(a.kind, AttributeKind::Continuous { .. })
                && !data.schema.protected.contains(&a.name)
        })
        .map(|(i, _)| i)
        .collect();
    if numeric_columns.is_empty() {
        return Err(Error::Config(
            "disparate impact removal needs at least one non-protected numeric attribute".into(),
        ));
    }

    let mut rows = data.rows.clone();
    for &col in &numeric_columns {
        // per group: row indices sorted by the column value
        let sorted_groups: Vec<Vec<(usize, f64)>> = masks
            .iter()
            .map(|mask| {
                let mut entries: Vec<(usize, f64)> = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(|(i, _)| (i, data.rows[i][col].as_num().expect("numeric column")))
                    .collect();
                entries.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite values"));
                entries
            })
            .collect();
        let quantile = |group: &[(usize, f64)], q: f64| -> f64 {
            let idx = ((q * group.len() as f64).floor() as usize).min(group.len() - 1);
            group[idx].1
        };
        for group in &sorted_groups {
            if group.is_empty() {
                continue;
            }
            for (rank, &(row_idx, value)) in group.iter().enumerate() {
                let q = (rank as f64 + 0.5) / group.len() as f64;
                let mut pooled: Vec<f64> = sorted_groups
                    .iter()
                    .filter(|g| !g.is_empty())
                    .map(|g| quantile(g, q))
                    .collect();
                pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                let target = median_of_sorted(&pooled);
                rows[row_idx][col] =
                    Value::Num((1.0 - repair_level) * value + repair_level * target);
            }
        }
    }
    Dataset::with_weights(
        data.schema.clone(),
        rows,
        data.labels.clone(),
        data.weights.clone(),
    )
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Pre-processing repair: fix the training data, retrain, measure on test.
pub fn repair_pre(
    ctx: &RepairContext,
    method: Method,
    params: &RepairParams,
) -> Result<(Mlp, RepairOutcome)> {
    let (fairness_before, accuracy_before) = ctx.before_scores()?;
    let favorable = ctx.train.schema.favorable_label;
    let model = match method {
        Method::Reweigh => {
            let weights = reweigh_valuations(ctx.train, &ctx.metric.attributes, favorable)?;
            let reweighted = ctx.train.reweighted(weights)?;
            let config = TrainConfig {
                use_sample_weights: true,
                ..ctx.config.clone()
            };
            ctx.retrain(&reweighted, &config)?
        }
        Method::DisparateImpactRemover => {
            let repaired =
                disparate_impact_remove(ctx.train, &ctx.metric.attributes, params.repair_level)?;
            ctx.retrain(&repaired, ctx.config)?
        }
        other => {
            return Err(Error::Config(format!(
                "{} is not a pre-processing method",
                other.as_str()
            )))
        }
    };
    let fairness_after = metrics::metric_value(&model, ctx.test, ctx.metric, None)?;
    let accuracy_after = metrics::accuracy(&model, ctx.test)?;
    let outcome = RepairOutcome::new(
        method,
        ctx.metric.clone(),
        fairness_before,
        fairness_after,
        accuracy_before,
        accuracy_after,
    );
    Ok((model, outcome))
}

/// In-processing repair: retrain under the group-gap regularizer.
pub fn repair_in(ctx: &RepairContext, lambda: f64) -> Result<(Mlp, RepairOutcome)> {
    if lambda < 0.0 {
        return Err(Error::Config("lambda must be non-negative".into()));
    }
    let (fairness_before, accuracy_before) = ctx.before_scores()?;
    let config = TrainConfig {
        fairness_penalty: lambda,
        penalty_attribute: Some(ctx.metric.attributes[0].clone()),
        ..ctx.config.clone()
    };
    let model = ctx.retrain(ctx.train, &config)?;
    let fairness_after = metrics::metric_value(&model, ctx.test, ctx.metric, None)?;
    let accuracy_after = metrics::accuracy(&model, ctx.test)?;
    let outcome = RepairOutcome::new(
        Method::FairnessRegularizer,
        ctx.metric.clone(),
        fairness_before,
        fairness_after,
        accuracy_before,
        accuracy_after,
    );
    Ok((model, outcome))
}

/// Final predictions plus the (row, label) overrides the band rule forced.
type OverlaidPredictions = (Vec<usize>, Vec<(usize, usize)>);

/// Reject-option predictions for one feature matrix: inside the band,
/// unprivileged rows get the favorable label and privileged rows the
/// unfavorable one; outside it the argmax stands.
fn reject_option_predictions(
    model: &Mlp,
    features: &[f64],
    privileged: &[bool],
    favorable: usize,
    region: CriticalRegion,
) -> Result<OverlaidPredictions> {
    let probs = model.forward(features, None)?;
    let mut preds = Vec::with_capacity(probs.len());
    let mut overrides = Vec::new();
    for (i, p) in probs.iter().enumerate() {
        let argmax = usize::from(p[1] > p[0]);
        let max_prob = p[argmax];
        if max_prob <= region.theta_band {
            let forced = if privileged[i] {
                1 - favorable
            } else {
                favorable
            };
            preds.push(forced);
            overrides.push((i, forced));
        } else {
            preds.push(argmax);
        }
    }
    Ok((preds, overrides))
}

/// Post-processing repair: apply the reject option rule on the test split.
/// The model is untouched; the overlay records every forced label.
pub fn repair_post(
    ctx: &RepairContext,
    region: CriticalRegion,
    attribute: &str,
) -> Result<(PredictionOverlay, RepairOutcome)> {
    CriticalRegion::new(region.theta_band)?;
    let (fairness_before, accuracy_before) = ctx.before_scores()?;
    let favorable = ctx.test.schema.favorable_label;
    let features = encode_for_model(ctx.baseline, ctx.test)?;
    let privileged = ctx.test.privileged_mask(attribute)?;
    let (preds, overrides) =
        reject_option_predictions(ctx.baseline, &features, &privileged, favorable, region)?;

    let fairness_after = match ctx.metric.kind {
        MetricKind::Spd => {
            metrics::spd_from_predictions(&preds, ctx.test, &ctx.metric.attributes[0])?
        }
        MetricKind::Gds => {
            metrics::gds_from_predictions(&preds, ctx.test, &ctx.metric.attributes)?.value
        }
        MetricKind::Cds => overlay_cds(
            ctx.baseline,
            ctx.test,
            &ctx.metric.attributes,
            attribute,
            region,
            &preds,
        )?,
    };
    let accuracy_after = accuracy_from_predictions(&preds, &ctx.test.labels);
    let outcome = RepairOutcome::new(
        Method::RejectOption,
        ctx.metric.clone(),
        fairness_before,
        fairness_after,
        accuracy_before,
        accuracy_after,
    );
    let overlay = PredictionOverlay {
        theta_band: region.theta_band,
        attribute: attribute.to_string(),
        overrides,
    };
    Ok((overlay, outcome))
}

/// CDS of the composed classifier (model + reject option rule): protected
/// variants are pushed through the same rule, with their own group side.
fn overlay_cds(
    model: &Mlp,
    data: &Dataset,
    attributes: &[String],
    band_attribute: &str,
    region: CriticalRegion,
    base_preds: &[usize],
) -> Result<f64> {
    let favorable = data.schema.favorable_label;
    let base = encode_for_model(model, data)?;
    let mut flipped = vec![false; data.n_rows()];
    for theta in valuations_over(&data.schema, attributes)? {
        let mut features = base.clone();
        let mut variant_privileged = vec![false; data.n_rows()];
        let mut band_side_set = false;
        for (attr, value) in theta.representative_values(&data.schema)? {
            let col = model
                .column_index(&attr)
                .ok_or_else(|| Error::Schema(format!("attribute {attr} unknown to model")))?;
            let a = data.schema.attribute(&attr).expect("attribute exists");
            let code = crate::dataset::ordinal_code(a, &value)?;
            let encoded = model.norm_params()[col].encode(code);
            for row in features.chunks_exact_mut(model.input_dim()) {
                row[col] = encoded;
            }
            if attr == band_attribute {
                let side = data.schema.is_privileged(&attr, &value)?;
                variant_privileged = vec![side; data.n_rows()];
                band_side_set = true;
            }
        }
        if !band_side_set {
            // the band attribute is not part of this valuation; group
            // membership stays the row's own
            variant_privileged = data.privileged_mask(band_attribute)?;
        }
        let (preds, _) =
            reject_option_predictions(model, &features, &variant_privileged, favorable, region)?;
        for (flag, (a, b)) in flipped.iter_mut().zip(base_preds.iter().zip(&preds)) {
            *flag |= a != b;
        }
    }
    Ok(flipped.iter().filter(|&&f| f).count() as f64 / data.n_rows() as f64)
}

/// Run one method end to end and return its artifact and outcome.
pub fn run_method(
    ctx: &RepairContext,
    method: Method,
    params: &RepairParams,
) -> Result<(Option<Mlp>, Option<PredictionOverlay>, RepairOutcome)> {
    match method {
        Method::Reweigh | Method::DisparateImpactRemover => {
            let (model, outcome) = repair_pre(ctx, method, params)?;
            Ok((Some(model), None, outcome))
        }
        Method::FairnessRegularizer => {
            let (model, outcome) = repair_in(ctx, params.lambda)?;
            Ok((Some(model), None, outcome))
        }
        Method::RejectOption => {
            let region = CriticalRegion::new(params.theta_band)?;
            let (overlay, outcome) = repair_post(ctx, region, &ctx.metric.attributes[0])?;
            Ok((None, Some(overlay), outcome))
        }
    }
}

/// Score every candidate on a validation split carved from the training
/// data and return the winner: the method maximizing improvement minus
/// accuracy loss.
pub fn pick_best_candidate(
    train: &Dataset,
    config: &TrainConfig,
    metric: &FairnessMetric,
    candidates: &[Method],
    params: &RepairParams,
) -> Result<(Method, Vec<(Method, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate methods to compare".into()));
    }
    if candidates.len() == 1 {
        return Ok((candidates[0], vec![(candidates[0], 0.0)]));
    }
    let (subtrain, validation) = split(train, 0.8, config.seed)?;
    let baseline = {
        let matrix = encode(&subtrain)?;
        train_for_schema(
            &matrix,
            config,
            None,
            subtrain.schema.fingerprint(),
            subtrain.schema.favorable_label,
        )?
    };
    let ctx = RepairContext {
        train: &subtrain,
        test: &validation,
        config,
        metric,
        baseline: &baseline,
    };
    let mut scores = Vec::with_capacity(candidates.len());
    for &method in candidates {
        let (_, _, outcome) = run_method(&ctx, method, params)?;
        scores.push((method, outcome.score()));
    }
    let best = scores
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores"))
        .expect("non-empty");
    Ok((best.0, scores))
}
