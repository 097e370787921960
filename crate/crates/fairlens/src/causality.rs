//! Causal-effect analysis: sweep do-interventions over every input attribute
//! and hidden neuron, score each clamp with a fairness metric, and aggregate
//! the averaged effects into responsibility statistics.
//!
//! The sweep caches all layer activations once per dataset, then evaluates
//! each (target, value) pair with a rank-one update of the first affected
//! layer's pre-activations followed by propagation through the remaining
//! (small) layers. This is algebraically identical to re-running the full
//! forward pass with the overlay and is what keeps whole-model analysis
//! within a minutes budget at benchmark scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{group_mask, valuations_over, Dataset, ProtectedValuation};
use crate::error::{Error, Result};
use crate::metrics::{self, FairnessMetric, MetricKind};
use crate::model::{InterventionTarget, Mlp};

/// Causal effect of one attribute or neuron on the fairness score.
#[derive(Debug, Clone, Serialize)]
pub struct AieRecord {
    pub target: InterventionTarget,
    pub metric: FairnessMetric,
    /// Fairness score without any intervention.
    pub baseline: f64,
    /// Intervention values swept, in raw attribute space for attributes and
    /// post-activation space for neurons.
    pub values_used: Vec<f64>,
    /// Fairness score under each clamp.
    pub interventional_expectations: Vec<f64>,
    /// Mean of the interventional expectations.
    pub aie: f64,
}

impl AieRecord {
    /// Whether this variable counts as responsible for unfairness:
    /// strictly higher averaged effect than the no-intervention score.
    pub fn responsible(&self) -> bool {
        self.aie > self.baseline
    }
}

/// Average causal effect: averaged interventional score minus baseline.
pub fn ace(record: &AieRecord) -> f64 {
    record.aie - record.baseline
}

/// How responsibility is distributed between attributes and neurons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponsibilityStats {
    /// Fraction of input attributes with aie above baseline.
    pub p_f: f64,
    /// Fraction of hidden neurons with aie above baseline.
    pub p_n: f64,
    /// Coefficient of variation of responsible attributes' effects;
    /// undefined when no attribute is responsible.
    pub cv_f: Option<f64>,
    /// Likewise for neurons.
    pub cv_n: Option<f64>,
    pub responsible_attributes: Vec<String>,
    pub responsible_neurons: Vec<(usize, usize)>,
    pub baseline: f64,
}

/// `num_interval` evenly spaced values covering [min, max], both endpoints
/// included. A single interval or a degenerate range repeats `min`.
pub fn generate_vals(min: f64, max: f64, num_interval: usize) -> Vec<f64> {
    assert!(num_interval >= 1, "num_interval must be at least 1");
    if num_interval == 1 || min == max {
        return vec![min; num_interval];
    }
    let step = (max - min) / (num_interval - 1) as f64;
    (0..num_interval)
        .map(|i| {
            if i + 1 == num_interval {
                max
            } else {
                min + step * i as f64
            }
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return first;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population coefficient of variation (std / mean).
fn coefficient_of_variation(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    var.sqrt() / m
}

// ---------------------------------------------------------------------------
// Cached sweep machinery
// ---------------------------------------------------------------------------

/// Row-major (pre-activation, post-activation) values of one hidden layer.
type PrePost = (Vec<f64>, Vec<f64>);

/// Full forward state of one feature matrix: inputs, pre- and post-activation
/// values per hidden layer, output logits and the resulting predictions.
struct MatrixCache {
    input: Vec<f64>,
    n_rows: usize,
    hidden: Vec<PrePost>,
    /// Output logits, n x 2.
    logits: Vec<f64>,
    preds: Vec<usize>,
}

fn build_cache(model: &Mlp, features: Vec<f64>) -> MatrixCache {
    let d = model.input_dim();
    let n_rows = features.len() / d;
    let layers = model.layers();
    let n_hidden = layers.len() - 1;
    let mut hidden: Vec<PrePost> = layers[..n_hidden]
        .iter()
        .map(|l| {
            let size = l.bias.len();
            (vec![0.0; n_rows * size], vec![0.0; n_rows * size])
        })
        .collect();
    let mut logits = vec![0.0; n_rows * 2];
    let mut preds = vec![0usize; n_rows];

    let mut current = vec![0.0; d.max(1)];
    for row in 0..n_rows {
        current.clear();
        current.extend_from_slice(&features[row * d..(row + 1) * d]);
        for (l, layer) in layers.iter().enumerate() {
            let size = layer.bias.len();
            let mut next = vec![0.0; size];
            for (j, (w_row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let mut z = *b;
                for (w, x) in w_row.iter().zip(&current) {
                    z += w * x;
                }
                next[j] = z;
            }
            if l < n_hidden {
                let (pre, post) = &mut hidden[l];
                pre[row * size..(row + 1) * size].copy_from_slice(&next);
                for v in &mut next {
                    *v = v.max(0.0);
                }
                post[row * size..(row + 1) * size].copy_from_slice(&next);
                current = next;
            } else {
                logits[row * 2] = next[0];
                logits[row * 2 + 1] = next[1];
                preds[row] = usize::from(next[1] > next[0]);
            }
        }
    }
    MatrixCache {
        input: features,
        n_rows,
        hidden,
        logits,
        preds,
    }
}

/// Where a sweep clamps the computation.
#[derive(Debug, Clone, Copy)]
enum Site {
    /// Input column, value already encoded.
    Input(usize),
    /// Hidden neuron (layer, index), post-activation value.
    Hidden(usize, usize),
}

/// Predictions under a clamp, via rank-one update of the first affected
/// pre-activations and plain propagation afterwards.
fn predictions_under(model: &Mlp, cache: &MatrixCache, site: Site, value: f64) -> Vec<usize> {
    let layers = model.layers();
    let n_hidden = layers.len() - 1;
    let mut preds = vec![0usize; cache.n_rows];
    // the layer whose pre-activations absorb the rank-one update
    let (next_layer, col) = match site {
        Site::Input(col) => (0, col),
        Site::Hidden(l, j) => (l + 1, j),
    };
    let next_size = layers[next_layer].bias.len();
    let mut z = vec![0.0; next_size];
    let mut h = Vec::new();
    for (row, pred) in preds.iter_mut().enumerate() {
        let old = match site {
            Site::Input(c) => cache.input[row * model.input_dim() + c],
            Site::Hidden(l, j) => {
                let size = layers[l].bias.len();
                cache.hidden[l].1[row * size + j]
            }
        };
        let delta = value - old;
        if next_layer == n_hidden {
            // the update lands directly on the output logits
            let z0 = cache.logits[row * 2] + layers[next_layer].weights[0][col] * delta;
            let z1 = cache.logits[row * 2 + 1] + layers[next_layer].weights[1][col] * delta;
            *pred = usize::from(z1 > z0);
            continue;
        }
        let pre = &cache.hidden[next_layer].0[row * next_size..(row + 1) * next_size];
        for (j, (zj, p)) in z.iter_mut().zip(pre).enumerate() {
            *zj = (p + layers[next_layer].weights[j][col] * delta).max(0.0);
        }
        // plain propagation through the remaining layers
        h.clear();
        h.extend_from_slice(&z);
        for (l, layer) in layers.iter().enumerate().skip(next_layer + 1) {
            let last = l == n_hidden;
            let mut next = vec![0.0; layer.bias.len()];
            for (j, (w_row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let mut acc = *b;
                for (w, x) in w_row.iter().zip(&h) {
                    acc += w * x;
                }
                next[j] = if last { acc } else { acc.max(0.0) };
            }
            h = next;
        }
        *pred = usize::from(h[1] > h[0]);
    }
    preds
}

/// Precomputed sweep context for one (model, dataset, metric) triple.
pub struct SweepEngine<'a> {
    model: &'a Mlp,
    metric: FairnessMetric,
    base: MatrixCache,
    /// One cache per protected valuation, for the CDS flip counting.
    variants: Vec<MatrixCache>,
    /// One mask per valuation of the metric's attributes (group metrics).
    masks: Vec<Vec<bool>>,
    /// Observed raw (min, max) per continuous column.
    raw_ranges: Vec<Option<(f64, f64)>>,
    favorable: usize,
    baseline: f64,
}

impl<'a> SweepEngine<'a> {
    pub fn new(
        model: &'a Mlp,
        data: &'a Dataset,
        metric: &FairnessMetric,
    ) -> Result<SweepEngine<'a>> {
        metric.check()?;
        if data.n_rows() == 0 {
            return Err(Error::Config("analysis dataset is empty".into()));
        }
        let features = metrics::encode_for_model(model, data)?;
        let base = build_cache(model, features);

        let thetas = valuations_over(&data.schema, &metric.attributes)?;
        let mut masks = Vec::new();
        if metric.kind != MetricKind::Cds {
            for theta in &thetas {
                let mask = group_mask(data, theta)?;
                if !mask.iter().any(|&m| m) {
                    return Err(Error::EmptyGroup(theta.describe()));
                }
                masks.push(mask);
            }
        }

        let mut variants = Vec::new();
        if metric.kind == MetricKind::Cds {
            for theta in &thetas {
                let features = variant_matrix(model, data, &base.input, theta)?;
                variants.push(build_cache(model, features));
            }
        }

        // observed raw ranges straight from the data, no encode round-trip
        let raw_ranges = data
            .schema
            .attributes
            .iter()
            .enumerate()
            .map(|(col, attr)| {
                matches!(attr.kind, crate::dataset::AttributeKind::Continuous { .. }).then(|| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for row in &data.rows {
                        let v = row[col].as_num().expect("continuous column");
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    (lo, hi)
                })
            })
            .collect();

        let mut engine = SweepEngine {
            model,
            metric: metric.clone(),
            base,
            variants,
            masks,
            raw_ranges,
            favorable: data.schema.favorable_label,
            baseline: 0.0,
        };
        engine.baseline = engine.score_base_predictions();
        Ok(engine)
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    fn score_base_predictions(&self) -> f64 {
        match self.metric.kind {
            MetricKind::Cds => {
                let variant_preds: Vec<&[usize]> =
                    self.variants.iter().map(|v| v.preds.as_slice()).collect();
                cds_fraction(&self.base.preds, &variant_preds)
            }
            _ => self.group_score(&self.base.preds),
        }
    }

    fn group_score(&self, preds: &[usize]) -> f64 {
        let rates: Vec<f64> = self
            .masks
            .iter()
            .map(|mask| {
                let total = mask.iter().filter(|&&m| m).count();
                let fav = preds
                    .iter()
                    .zip(mask)
                    .filter(|(p, &m)| m && **p == self.favorable)
                    .count();
                fav as f64 / total as f64
            })
            .collect();
        metrics::max_pairwise_gap(&rates)
    }

    /// Fairness score under do(target = value). `value` is in raw attribute
    /// space for attribute targets.
    pub fn eval(&self, target: &InterventionTarget, value: f64) -> Result<f64> {
        let site = self.resolve(target, value)?;
        let (site, encoded) = site;
        match self.metric.kind {
            MetricKind::Cds => {
                let base_preds = predictions_under(self.model, &self.base, site, encoded);
                let variant_preds: Vec<Vec<usize>> = self
                    .variants
                    .iter()
                    .map(|v| predictions_under(self.model, v, site, encoded))
                    .collect();
                let refs: Vec<&[usize]> = variant_preds.iter().map(Vec::as_slice).collect();
                Ok(cds_fraction(&base_preds, &refs))
            }
            _ => {
                let preds = predictions_under(self.model, &self.base, site, encoded);
                Ok(self.group_score(&preds))
            }
        }
    }

    fn resolve(&self, target: &InterventionTarget, value: f64) -> Result<(Site, f64)> {
        match target {
            InterventionTarget::Attribute(name) => {
                let col = self.model.column_index(name).ok_or_else(|| {
                    Error::BadTarget(format!("attribute {name} not among model inputs"))
                })?;
                let norm = &self.model.norm_params()[col];
                if !norm.constant && !(value >= norm.min && value <= norm.max) {
                    return Err(Error::BadTarget(format!(
                        "value {value} outside the domain [{}, {}] of attribute {name}",
                        norm.min, norm.max
                    )));
                }
                Ok((Site::Input(col), norm.encode(value)))
            }
            InterventionTarget::Neuron { layer, index } => {
                let sizes = self.model.hidden_sizes();
                if *layer >= sizes.len() || *index >= sizes[*layer] {
                    return Err(Error::BadTarget(format!(
                        "neuron ({layer}, {index}) does not exist"
                    )));
                }
                Ok((Site::Hidden(*layer, *index), value))
            }
        }
    }

    /// Observed post-activation range of a neuron over the analysis data.
    pub fn neuron_range(&self, layer: usize, index: usize) -> Result<(f64, f64)> {
        let sizes = self.model.hidden_sizes();
        if layer >= sizes.len() || index >= sizes[layer] {
            return Err(Error::BadTarget(format!(
                "neuron ({layer}, {index}) does not exist"
            )));
        }
        let size = sizes[layer];
        let post = &self.base.hidden[layer].1;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in 0..self.base.n_rows {
            let v = post[row * size + index];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Observed raw-space range of a continuous attribute column.
    fn column_raw_range(&self, col: usize) -> Option<(f64, f64)> {
        self.raw_ranges[col]
    }
}

fn variant_matrix(
    model: &Mlp,
    data: &Dataset,
    base: &[f64],
    theta: &ProtectedValuation,
) -> Result<Vec<f64>> {
    let mut substitutions = Vec::new();
    for (attr, value) in theta.representative_values(&data.schema)? {
        let col = model
            .column_index(&attr)
            .ok_or_else(|| Error::Schema(format!("attribute {attr} not among model inputs")))?;
        let a = data
            .schema
            .attribute(&attr)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {attr}")))?;
        let code = crate::dataset::ordinal_code(a, &value)?;
        substitutions.push((col, model.norm_params()[col].encode(code)));
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

fn cds_fraction(base: &[usize], variants: &[&[usize]]) -> f64 {
    let n = base.len();
    let mut flipped = 0usize;
    for i in 0..n {
        if variants.iter().any(|v| v[i] != base[i]) {
            flipped += 1;
        }
    }
    flipped as f64 / n as f64
}

// ---------------------------------------------------------------------------
// Public sweep operations
// ---------------------------------------------------------------------------

fn sweep_target(
    engine: &SweepEngine,
    data: &Dataset,
    target: InterventionTarget,
    num_interval: usize,
) -> Result<AieRecord> {
    let values_used = match &target {
        InterventionTarget::Neuron { layer, index } => {
            let (lo, hi) = engine.neuron_range(*layer, *index)?;
            generate_vals(lo, hi, num_interval)
        }
        InterventionTarget::Attribute(name) => {
            let attr = data
                .schema
                .attribute(name)
                .ok_or_else(|| Error::Schema(format!("unknown attribute {name}")))?;
            match &attr.kind {
                crate::dataset::AttributeKind::Categorical { values } => {
                    (0..values.len()).map(|i| i as f64).collect()
                }
                crate::dataset::AttributeKind::Continuous { .. } => {
                    let col = engine
                        .model
                        .column_index(name)
                        .ok_or_else(|| Error::BadTarget(format!("attribute {name} unknown")))?;
                    let (lo, hi) = engine
                        .column_raw_range(col)
                        .ok_or_else(|| Error::BadTarget(format!("{name} is not continuous")))?;
                    generate_vals(lo, hi, num_interval)
                }
            }
        }
    };
    let mut interventional_expectations = Vec::with_capacity(values_used.len());
    for &alpha in &values_used {
        interventional_expectations.push(engine.eval(&target, alpha)?);
    }
    let aie = mean(&interventional_expectations);
    Ok(AieRecord {
        target,
        metric: engine.metric.clone(),
        baseline: engine.baseline,
        values_used,
        interventional_expectations,
        aie,
    })
}

/// AIE of one hidden neuron: sweep its observed output range and average the
/// fairness score under each clamp.
pub fn causality_neuron(
    model: &Mlp,
    data: &Dataset,
    layer: usize,
    index: usize,
    metric: &FairnessMetric,
    num_interval: usize,
) -> Result<AieRecord> {
    let engine = SweepEngine::new(model, data, metric)?;
    sweep_target(
        &engine,
        data,
        InterventionTarget::Neuron { layer, index },
        num_interval,
    )
}

/// AIE of one input attribute: categorical attributes sweep their whole
/// domain, continuous ones an even grid over the observed range.
pub fn causality_attribute(
    model: &Mlp,
    data: &Dataset,
    attribute: &str,
    metric: &FairnessMetric,
    num_interval: usize,
) -> Result<AieRecord> {
    let engine = SweepEngine::new(model, data, metric)?;
    sweep_target(
        &engine,
        data,
        InterventionTarget::Attribute(attribute.into()),
        num_interval,
    )
}

/// Sweep every attribute and every hidden neuron, then aggregate into
/// responsibility statistics. Target evaluations run in parallel.
pub fn analyze_all(
    model: &Mlp,
    data: &Dataset,
    metric: &FairnessMetric,
    num_interval: usize,
) -> Result<(Vec<AieRecord>, ResponsibilityStats)> {
    let engine = SweepEngine::new(model, data, metric)?;
    let mut targets: Vec<InterventionTarget> = data
        .schema
        .attributes
        .iter()
        .map(|a| InterventionTarget::Attribute(a.name.clone()))
        .collect();
    for (layer, &size) in model.hidden_sizes().iter().enumerate() {
        for index in 0..size {
            targets.push(InterventionTarget::Neuron { layer, index });
        }
    }
    let records: Vec<AieRecord> = targets
        .into_par_iter()
        .map(|t| sweep_target(&engine, data, t, num_interval))
        .collect::<Result<Vec<_>>>()?;
    let stats = responsibility_stats(&records, engine.baseline());
    Ok((records, stats))
}

/// Aggregate sweep records into the selector's inputs. Exposed separately so
/// the statistics can be recomputed against a shifted baseline.
pub fn responsibility_stats(records: &[AieRecord], baseline: f64) -> ResponsibilityStats {
    let mut attr_total = 0usize;
    let mut neuron_total = 0usize;
    let mut responsible_attributes = Vec::new();
    let mut responsible_neurons = Vec::new();
    let mut attr_effects = Vec::new();
    let mut neuron_effects = Vec::new();
    for record in records {
        let responsible = record.aie > baseline;
        match &record.target {
            InterventionTarget::Attribute(name) => {
                attr_total += 1;
                if responsible {
                    responsible_attributes.push(name.clone());
                    attr_effects.push(record.aie);
                }
            }
            InterventionTarget::Neuron { layer, index } => {
                neuron_total += 1;
                if responsible {
                    responsible_neurons.push((*layer, *index));
                    neuron_effects.push(record.aie);
                }
            }
        }
    }
    let cv = |effects: &Vec<f64>| {
        if effects.is_empty() {
            None
        } else {
            Some(coefficient_of_variation(effects))
        }
    };
    ResponsibilityStats {
        p_f: if attr_total == 0 {
            0.0
        } else {
            attr_effects.len() as f64 / attr_total as f64
        },
        p_n: if neuron_total == 0 {
            0.0
        } else {
            neuron_effects.len() as f64 / neuron_total as f64
        },
        cv_f: cv(&attr_effects),
        cv_n: cv(&neuron_effects),
        responsible_attributes,
        responsible_neurons,
        baseline,
    }
}
