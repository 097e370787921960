//! Fairness scores: statistical parity difference, group discrimination
//! score, causal discrimination score, plus plain accuracy.
//!
//! All scores are computed from model predictions; group membership always
//! comes from the original attribute values, even when an intervention
//! overlay is active. Intervening on a protected attribute therefore shifts
//! what the model sees without collapsing any group to empty.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    group_mask, ordinal_code, valuations_over, Dataset, ProtectedValuation, Schema, Value,
};
use crate::error::{Error, Result};
use crate::model::{Intervention, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Spd,
    Gds,
    Cds,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Spd => "spd",
            MetricKind::Gds => "gds",
            MetricKind::Cds => "cds",
        }
    }
}

/// A fairness metric together with the protected attributes it runs over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessMetric {
    pub kind: MetricKind,
    pub attributes: Vec<String>,
}

impl FairnessMetric {
    pub fn new(kind: MetricKind, attributes: Vec<String>) -> Result<FairnessMetric> {
        let metric = FairnessMetric { kind, attributes };
        metric.check()?;
        Ok(metric)
    }

    pub fn check(&self) -> Result<()> {
        match self.kind {
            MetricKind::Spd if self.attributes.len() != 1 => Err(Error::Config(
                "spd is defined over exactly one protected attribute".into(),
            )),
            _ if self.attributes.is_empty() => Err(Error::Config(
                "metric needs at least one protected attribute".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        format!("{}({})", self.kind.as_str(), self.attributes.join("+"))
    }
}

/// Metric evaluation result with the per-valuation rates behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: FairnessMetric,
    pub value: f64,
    /// Favorable-prediction rate per protected valuation (populated for
    /// group metrics).
    pub rates: Vec<(String, f64)>,
    pub accuracy: f64,
}

/// Encode a dataset into the model's input space. The model's column map
/// must match the schema's attribute list.
pub fn encode_for_model(model: &Mlp, data: &Dataset) -> Result<Vec<f64>> {
    let names: Vec<&str> = data
        .schema
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .collect();
    let model_names: Vec<&str> = model.column_map().iter().map(String::as_str).collect();
    if names != model_names {
        return Err(Error::Schema(format!(
            "dataset attributes {names:?} do not match model inputs {model_names:?}"
        )));
    }
    let mut flat = Vec::with_capacity(data.n_rows() * names.len());
    for row in &data.rows {
        for ((attr, value), norm) in data
            .schema
            .attributes
            .iter()
            .zip(row)
            .zip(model.norm_params())
        {
            flat.push(norm.encode(ordinal_code(attr, value)?));
        }
    }
    Ok(flat)
}

fn favorable_rate(preds: &[usize], mask: &[bool], favorable: usize) -> Option<f64> {
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return None;
    }
    let fav = preds
        .iter()
        .zip(mask)
        .filter(|(p, &m)| m && **p == favorable)
        .count();
    Some(fav as f64 / total as f64)
}

/// Statistical parity difference of the model on `data` over one protected
/// attribute, optionally under an intervention overlay.
pub fn spd(
    model: &Mlp,
    data: &Dataset,
    attribute: &str,
    intervention: Option<&Intervention>,
) -> Result<f64> {
    let features = encode_for_model(model, data)?;
    let preds = model.predict(&features, intervention)?;
    spd_from_predictions(&preds, data, attribute)
}

/// SPD from an explicit prediction vector (used by post-processing overlays).
pub fn spd_from_predictions(preds: &[usize], data: &Dataset, attribute: &str) -> Result<f64> {
    let mask = data.privileged_mask(attribute)?;
    let favorable = data.schema.favorable_label;
    let privileged = favorable_rate(preds, &mask, favorable)
        .ok_or_else(|| Error::EmptyGroup(format!("{attribute}: privileged group is empty")))?;
    let inverted: Vec<bool> = mask.iter().map(|m| !m).collect();
    let unprivileged = favorable_rate(preds, &inverted, favorable)
        .ok_or_else(|| Error::EmptyGroup(format!("{attribute}: unprivileged group is empty")))?;
    Ok((unprivileged - privileged).abs())
}

/// Largest absolute gap between any two rates; the GDS aggregation.
pub fn max_pairwise_gap(rates: &[f64]) -> f64 {
    let mut gap = 0.0f64;
    for (i, a) in rates.iter().enumerate() {
        for b in &rates[i + 1..] {
            gap = gap.max((a - b).abs());
        }
    }
    gap
}

/// Group discrimination score over a set of protected attributes: the
/// maximum pairwise gap between the favorable rates of all valuations.
pub fn gds(
    model: &Mlp,
    data: &Dataset,
    attributes: &[String],
    intervention: Option<&Intervention>,
) -> Result<ScoreReport> {
    let features = encode_for_model(model, data)?;
    let preds = model.predict(&features, intervention)?;
    gds_from_predictions(&preds, data, attributes)
}

/// GDS from an explicit prediction vector.
pub fn gds_from_predictions(
    preds: &[usize],
    data: &Dataset,
    attributes: &[String],
) -> Result<ScoreReport> {
    let favorable = data.schema.favorable_label;
    let thetas = valuations_over(&data.schema, attributes)?;
    let mut rates = Vec::with_capacity(thetas.len());
    for theta in &thetas {
        let mask = group_mask(data, theta)?;
        let rate = favorable_rate(preds, &mask, favorable)
            .ok_or_else(|| Error::EmptyGroup(theta.describe()))?;
        rates.push((theta.describe(), rate));
    }
    let value = max_pairwise_gap(&rates.iter().map(|(_, r)| *r).collect::<Vec<_>>());
    let correct = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(ScoreReport {
        metric: FairnessMetric {
            kind: MetricKind::Gds,
            attributes: attributes.to_vec(),
        },
        value,
        rates,
        accuracy: correct as f64 / preds.len().max(1) as f64,
    })
}

/// Encoded input value of a protected attribute's group representative.
fn encoded_representative(model: &Mlp, schema: &Schema, attr: &str, value: &Value) -> Result<f64> {
    let col = model
        .column_index(attr)
        .ok_or_else(|| Error::Schema(format!("attribute {attr} not among model inputs")))?;
    let a = schema
        .attribute(attr)
        .ok_or_else(|| Error::Schema(format!("unknown attribute {attr}")))?;
    Ok(model.norm_params()[col].encode(ordinal_code(a, value)?))
}

/// Feature matrix with all protected columns overwritten by the valuation's
/// representative values.
fn variant_features(
    model: &Mlp,
    schema: &Schema,
    base: &[f64],
    theta: &ProtectedValuation,
) -> Result<Vec<f64>> {
    let mut substitutions = Vec::with_capacity(theta.assignments.len());
    for (attr, value) in theta.representative_values(schema)? {
        let col = model
            .column_index(&attr)
            .ok_or_else(|| Error::Schema(format!("attribute {attr} not among model inputs")))?;
        substitutions.push((col, encoded_representative(model, schema, &attr, &value)?));
    }
    let d = model.input_dim();
    let mut features = base.to_vec();
    for row in features.chunks_exact_mut(d) {
        for &(col, value) in &substitutions {
            row[col] = value;
        }
    }
    Ok(features)
}

/// Whether flipping only the protected attributes (over their binarized
/// representatives) can change the model's prediction for this row.
pub fn is_discriminatory(
    model: &Mlp,
    schema: &Schema,
    row: &[Value],
    attributes: &[String],
) -> Result<bool> {
    let mut encoded = Vec::with_capacity(row.len());
    for ((attr, value), norm) in schema.attributes.iter().zip(row).zip(model.norm_params()) {
        encoded.push(norm.encode(ordinal_code(attr, value)?));
    }
    let base_pred = model.predict(&encoded, None)?[0];
    for theta in valuations_over(schema, attributes)? {
        let variant = variant_features(model, schema, &encoded, &theta)?;
        if model.predict(&variant, None)?[0] != base_pred {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Causal discrimination score: the fraction of rows whose prediction flips
/// under some protected-attribute substitution.
pub fn cds(model: &Mlp, data: &Dataset, attributes: &[String]) -> Result<f64> {
    cds_with_intervention(model, data, attributes, None)
}

/// CDS under an intervention overlay; the overlay applies to the original
/// rows and to every protected-variant copy alike.
pub fn cds_with_intervention(
    model: &Mlp,
    data: &Dataset,
    attributes: &[String],
    intervention: Option<&Intervention>,
) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::Config("cds needs a non-empty dataset".into()));
    }
    let base = encode_for_model(model, data)?;
    let base_preds = model.predict(&base, intervention)?;
    let mut flipped = vec![false; data.n_rows()];
    for theta in valuations_over(&data.schema, attributes)? {
        let variant = variant_features(model, &data.schema, &base, &theta)?;
        let preds = model.predict(&variant, intervention)?;
        for (flag, (a, b)) in flipped.iter_mut().zip(base_preds.iter().zip(&preds)) {
            *flag |= a != b;
        }
    }
    Ok(flipped.iter().filter(|&&f| f).count() as f64 / data.n_rows() as f64)
}

/// Fraction of correct predictions on `data`.
pub fn accuracy(model: &Mlp, data: &Dataset) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::Config("accuracy needs a non-empty dataset".into()));
    }
    let features = encode_for_model(model, data)?;
    let preds = model.predict(&features, None)?;
    Ok(accuracy_from_predictions(&preds, &data.labels))
}

pub fn accuracy_from_predictions(preds: &[usize], labels: &[usize]) -> f64 {
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / preds.len().max(1) as f64
}

/// Evaluate the named fairness metric, optionally under an intervention.
/// This is the `fair_metric` hook the causality sweep drives.
pub fn metric_value(
    model: &Mlp,
    data: &Dataset,
    metric: &FairnessMetric,
    intervention: Option<&Intervention>,
) -> Result<f64> {
    metric.check()?;
    match metric.kind {
        MetricKind::Spd => spd(model, data, &metric.attributes[0], intervention),
        MetricKind::Gds => Ok(gds(model, data, &metric.attributes, intervention)?.value),
        MetricKind::Cds => cds_with_intervention(model, data, &metric.attributes, intervention),
    }
}

/// Full baseline report: metric value, per-valuation rates, accuracy.
pub fn score_report(model: &Mlp, data: &Dataset, metric: &FairnessMetric) -> Result<ScoreReport> {
    metric.check()?;
    let features = encode_for_model(model, data)?;
    let preds = model.predict(&features, None)?;
    let mut report = gds_from_predictions(&preds, data, &metric.attributes)?;
    report.metric = metric.clone();
    report.value = match metric.kind {
        MetricKind::Spd => spd_from_predictions(&preds, data, &metric.attributes[0])?,
        MetricKind::Gds => report.value,
        MetricKind::Cds => cds(model, data, &metric.attributes)?,
    };
    Ok(report)
}
