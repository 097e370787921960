//! Feed-forward binary classifier with an intervention-aware forward pass.
//!
//! Interventions are overlays on the forward computation, never mutations of
//! stored weights: a neuron intervention replaces one post-activation value
//! before propagation continues, an attribute intervention replaces one input
//! column (given in raw attribute space, encoded through the model's norm
//! params). The model is immutable after training, so sweeps can share it
//! across threads.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{EncodedMatrix, NormParam};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN_SIZES: &[usize] = &[64, 32, 16, 8, 4];
const OUTPUT_CLASSES: usize = 2;
const MODEL_FORMAT_VERSION: u32 = 1;

/// One dense layer; `weights[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weights: vec![vec![0.0; self.weights[0].len()]; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn out_dim(&self) -> usize {
        self.bias.len()
    }

    fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// What a do-intervention clamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionTarget {
    /// An input attribute, addressed by name.
    Attribute(String),
    /// A hidden neuron: 0-based hidden layer, index within the layer.
    Neuron { layer: usize, index: usize },
}

/// A do(x = alpha) directive. For attribute targets the value is in raw
/// attribute space (ordinal code for categorical attributes); for neuron
/// targets it is the post-activation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub target: InterventionTarget,
    pub value: f64,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub use_sample_weights: bool,
    /// Weight of the group-gap penalty added to the cross-entropy loss.
    pub fairness_penalty: f64,
    /// Protected attribute whose privileged mask feeds the penalty.
    pub penalty_attribute: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_sizes: DEFAULT_HIDDEN_SIZES.to_vec(),
            epochs: 50,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            use_sample_weights: false,
            fairness_penalty: 0.0,
            penalty_attribute: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.fairness_penalty < 0.0 {
            return Err(Error::Config(
                "fairness penalty must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden_sizes: Vec<usize>,
    input_dim: usize,
    column_map: Vec<String>,
    norm_params: Vec<NormParam>,
    schema_fingerprint: String,
    favorable_label: usize,
}

impl Mlp {
    /// Assemble a model from explicit layers; used for hand-built fixtures
    /// and by the loader. Checks that layer dimensions chain correctly.
    pub fn from_parts(
        layers: Vec<Layer>,
        column_map: Vec<String>,
        norm_params: Vec<NormParam>,
        schema_fingerprint: String,
        favorable_label: usize,
    ) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least an output layer".into()));
        }
        let input_dim = layers[0].in_dim();
        if column_map.len() != input_dim || norm_params.len() != input_dim {
            return Err(Error::Config(format!(
                "column map ({}) and norm params ({}) must match input dim {input_dim}",
                column_map.len(),
                norm_params.len()
            )));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != prev || layer.weights.iter().any(|row| row.len() != prev) {
                return Err(Error::Config(format!(
                    "layer {i}: input dim does not chain"
                )));
            }
            if layer.weights.len() != layer.out_dim() {
                return Err(Error::Config(format!(
                    "layer {i}: weight/bias shape mismatch"
                )));
            }
            prev = layer.out_dim();
        }
        if prev != OUTPUT_CLASSES {
            return Err(Error::Config(format!(
                "output layer must have {OUTPUT_CLASSES} units"
            )));
        }
        let hidden_sizes = layers[..layers.len() - 1]
            .iter()
            .map(Layer::out_dim)
            .collect();
        Ok(Mlp {
            layers,
            hidden_sizes,
            input_dim,
            column_map,
            norm_params,
            schema_fingerprint,
            favorable_label,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn column_map(&self) -> &[String] {
        &self.column_map
    }

    pub fn norm_params(&self) -> &[NormParam] {
        &self.norm_params
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn favorable_label(&self) -> usize {
        self.favorable_label
    }

    /// Total number of hidden neurons (124 for the default architecture).
    pub fn neuron_count(&self) -> usize {
        self.hidden_sizes.iter().sum()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_map.iter().position(|c| c == name)
    }

    fn check_intervention(&self, iv: &Intervention) -> Result<(usize, usize, f64)> {
        match &iv.target {
            InterventionTarget::Attribute(name) => {
                let col = self.column_index(name).ok_or_else(|| {
                    Error::BadTarget(format!("attribute {name} not among model inputs"))
                })?;
                let norm = &self.norm_params[col];
                if !norm.constant && !(iv.value >= norm.min && iv.value <= norm.max) {
                    return Err(Error::BadTarget(format!(
                        "value {} outside the domain [{}, {}] of attribute {name}",
                        iv.value, norm.min, norm.max
                    )));
                }
                // raw attribute space -> encoded input space
                Ok((usize::MAX, col, norm.encode(iv.value)))
            }
            InterventionTarget::Neuron { layer, index } => {
                let size = *self.hidden_sizes.get(*layer).ok_or_else(|| {
                    Error::BadTarget(format!("hidden layer {layer} does not exist"))
                })?;
                if *index >= size {
                    return Err(Error::BadTarget(format!(
                        "neuron {index} out of range for layer {layer} (size {size})"
                    )));
                }
                Ok((*layer, *index, iv.value))
            }
        }
    }

    /// Forward pass over a flat row-major batch, optionally under an
    /// intervention overlay. Returns one probability pair per row.
    pub fn forward(
        &self,
        features: &[f64],
        intervention: Option<&Intervention>,
    ) -> Result<Vec<[f64; 2]>> {
        if !features.len().is_multiple_of(self.input_dim) {
            return Err(Error::Config(format!(
                "batch length {} is not a multiple of input dim {}",
                features.len(),
                self.input_dim
            )));
        }
        let overlay = intervention
            .map(|iv| self.check_intervention(iv))
            .transpose()?;
        let n_rows = features.len() / self.input_dim;
        let mut out = Vec::with_capacity(n_rows);
        for row in features.chunks_exact(self.input_dim) {
            let (_, probs) = self.propagate(row, overlay, false);
            out.push(probs);
        }
        Ok(out)
    }

    /// Shared layer walk. `overlay` is (layer, index, value) with layer ==
    /// usize::MAX meaning an input column. Returns the per-layer trace (empty
    /// unless requested) and the output probabilities.
    fn propagate(
        &self,
        row: &[f64],
        overlay: Option<(usize, usize, f64)>,
        keep_trace: bool,
    ) -> (Vec<Vec<f64>>, [f64; 2]) {
        let mut current = row.to_vec();
        if let Some((usize::MAX, col, value)) = overlay {
            current[col] = value;
        }
        let mut trace = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == self.layers.len();
            let mut next = vec![0.0; layer.out_dim()];
            for (j, (w_row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let mut z = *b;
                for (w, x) in w_row.iter().zip(&current) {
                    z += w * x;
                }
                next[j] = if last { z } else { z.max(0.0) };
            }
            if !last {
                if let Some((layer_idx, index, value)) = overlay {
                    if layer_idx == l {
                        next[index] = value;
                    }
                }
            }
            if keep_trace && !last {
                trace.push(next.clone());
            }
            current = next;
        }
        let probs = softmax2(current[0], current[1]);
        if keep_trace {
            trace.push(probs.to_vec());
        }
        (trace, probs)
    }

    /// Post-activation values of every hidden layer (and the output
    /// probabilities as the last entry) for one row, under an optional
    /// intervention. Used by range scans and locality checks.
    pub fn forward_trace(
        &self,
        row: &[f64],
        intervention: Option<&Intervention>,
    ) -> Result<Vec<Vec<f64>>> {
        let overlay = intervention
            .map(|iv| self.check_intervention(iv))
            .transpose()?;
        let (trace, _) = self.propagate(row, overlay, true);
        Ok(trace)
    }

    /// Predicted class per row: argmax, ties toward class 0.
    pub fn predict(
        &self,
        features: &[f64],
        intervention: Option<&Intervention>,
    ) -> Result<Vec<usize>> {
        Ok(self
            .forward(features, intervention)?
            .into_iter()
            .map(|p| usize::from(p[1] > p[0]))
            .collect())
    }

    /// Exact (min, max) of one neuron's post-activation value over a dataset.
    pub fn neuron_range(
        &self,
        data: &EncodedMatrix,
        layer: usize,
        index: usize,
    ) -> Result<(f64, f64)> {
        if data.n_rows() == 0 {
            return Err(Error::Config(
                "neuron_range needs a non-empty dataset".into(),
            ));
        }
        if layer >= self.hidden_sizes.len() || index >= self.hidden_sizes[layer] {
            return Err(Error::BadTarget(format!(
                "neuron ({layer}, {index}) does not exist"
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in data.rows() {
            let trace = self.forward_trace(row, None)?;
            let v = trace[layer][index];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("model serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::Deserialize(format!("model: {e}")))?;
        let m = file.model;
        // re-run the dimension checks rather than trusting the file
        Mlp::from_parts(
            m.layers,
            m.column_map,
            m.norm_params,
            m.schema_fingerprint,
            m.favorable_label,
        )
        .map_err(|e| Error::Deserialize(format!("model: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: Mlp,
}

fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let sum = ea + eb;
    [ea / sum, eb / sum]
}

/// Train a classifier on an encoded matrix.
///
/// The loss is weight-normalized cross-entropy plus, when `fairness_penalty`
/// is positive, `lambda * |mean favorable probability (privileged) - mean
/// favorable probability (unprivileged)|` computed per mini-batch from the
/// supplied privileged mask.
pub fn train(data: &EncodedMatrix, config: &TrainConfig, groups: Option<&[bool]>) -> Result<Mlp> {
    config.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Config("training data is empty".into()));
    }
    if config.fairness_penalty > 0.0 {
        let mask = groups.ok_or_else(|| {
            Error::Config("fairness penalty requires a privileged group mask".into())
        })?;
        if mask.len() != n {
            return Err(Error::Config(
                "group mask length must match row count".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = init_layers(data.n_cols(), &config.hidden_sizes, &mut rng);

    let weights: Vec<f64> = if config.use_sample_weights {
        data.weights.clone()
    } else {
        vec![1.0; n]
    };

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        // fresh shuffle each epoch, driven by the same seeded stream
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(config.batch_size) {
            let (loss, grads) = batch_loss_gradients(
                &layers,
                data,
                batch,
                &weights,
                config.fairness_penalty,
                groups,
            );
            epoch_loss += loss;
            for (layer, grad) in layers.iter_mut().zip(&grads) {
                for (w_row, g_row) in layer.weights.iter_mut().zip(&grad.weights) {
                    for (w, g) in w_row.iter_mut().zip(g_row) {
                        *w -= config.learning_rate * g;
                    }
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                    *b -= config.learning_rate * g;
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }

    Mlp::from_parts(
        layers,
        data.column_map.clone(),
        data.norm_params.clone(),
        String::new(),
        data.favorable_label,
    )
}

/// Train and stamp the model with schema identity. This is what the pipeline
/// uses; `train` keeps the minimal signature for direct library use.
pub fn train_for_schema(
    data: &EncodedMatrix,
    config: &TrainConfig,
    groups: Option<&[bool]>,
    schema_fingerprint: String,
    favorable_label: usize,
) -> Result<Mlp> {
    let mut model = train(data, config, groups)?;
    model.schema_fingerprint = schema_fingerprint;
    model.favorable_label = favorable_label;
    Ok(model)
}

fn init_layers(input_dim: usize, hidden_sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden_sizes);
    dims.push(OUTPUT_CLASSES);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_out)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
            .collect();
        layers.push(Layer {
            weights,
            bias: vec![0.0; fan_out],
        });
    }
    layers
}

/// Loss of the full batch under the penalized objective; the counterpart of
/// [`loss_gradients`] used for finite-difference checks.
pub fn loss_value(
    layers: &[Layer],
    data: &EncodedMatrix,
    lambda: f64,
    groups: Option<&[bool]>,
) -> f64 {
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    batch_loss(layers, data, &idx, &data.weights, lambda, groups)
}

/// Analytic gradients of the penalized objective over the full batch.
pub fn loss_gradients(
    layers: &[Layer],
    data: &EncodedMatrix,
    lambda: f64,
    groups: Option<&[bool]>,
) -> (f64, Vec<Layer>) {
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    batch_loss_gradients(layers, data, &idx, &data.weights, lambda, groups)
}

fn forward_layers(layers: &[Layer], row: &[f64]) -> (Vec<Vec<f64>>, [f64; 2]) {
    let mut activations = Vec::with_capacity(layers.len());
    let mut current = row.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let last = l + 1 == layers.len();
        let mut next = vec![0.0; layer.out_dim()];
        for (j, (w_row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let mut z = *b;
            for (w, x) in w_row.iter().zip(&current) {
                z += w * x;
            }
            next[j] = if last { z } else { z.max(0.0) };
        }
        activations.push(next.clone());
        current = next;
    }
    let probs = softmax2(current[0], current[1]);
    (activations, probs)
}

fn batch_loss(
    layers: &[Layer],
    data: &EncodedMatrix,
    idx: &[usize],
    weights: &[f64],
    lambda: f64,
    groups: Option<&[bool]>,
) -> f64 {
    let favorable = data_favorable(data);
    let mut total_weight = 0.0;
    let mut ce = 0.0;
    let mut fav_sum = [0.0f64; 2];
    let mut fav_count = [0usize; 2];
    for &i in idx {
        let (_, probs) = forward_layers(layers, data.row(i));
        let w = weights[i];
        total_weight += w;
        // clamp keeps log finite but still propagates NaN from a blown-up net
        ce -= w * probs[data.labels[i]].clamp(1e-15, 1.0).ln();
        if let Some(mask) = groups {
            let side = usize::from(mask[i]);
            fav_sum[side] += probs[favorable];
            fav_count[side] += 1;
        }
    }
    let mut loss = ce / total_weight;
    if lambda > 0.0 {
        if let Some(gap) = group_gap(&fav_sum, &fav_count) {
            loss += lambda * gap.abs();
        }
    }
    loss
}

fn data_favorable(data: &EncodedMatrix) -> usize {
    data.favorable_label
}

fn group_gap(fav_sum: &[f64; 2], fav_count: &[usize; 2]) -> Option<f64> {
    if fav_count[0] == 0 || fav_count[1] == 0 {
        return None;
    }
    Some(fav_sum[1] / fav_count[1] as f64 - fav_sum[0] / fav_count[0] as f64)
}

fn batch_loss_gradients(
    layers: &[Layer],
    data: &EncodedMatrix,
    idx: &[usize],
    weights: &[f64],
    lambda: f64,
    groups: Option<&[bool]>,
) -> (f64, Vec<Layer>) {
    let favorable = data_favorable(data);
    let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();

    // first pass: forward to get total weight and group means
    let mut caches = Vec::with_capacity(idx.len());
    let mut total_weight = 0.0;
    let mut fav_sum = [0.0f64; 2];
    let mut fav_count = [0usize; 2];
    for &i in idx {
        let (activations, probs) = forward_layers(layers, data.row(i));
        total_weight += weights[i];
        if let Some(mask) = groups {
            let side = usize::from(mask[i]);
            fav_sum[side] += probs[favorable];
            fav_count[side] += 1;
        }
        caches.push((i, activations, probs));
    }
    let gap = if lambda > 0.0 {
        group_gap(&fav_sum, &fav_count)
    } else {
        None
    };

    let mut ce = 0.0;
    for (i, activations, probs) in &caches {
        let i = *i;
        let label = data.labels[i];
        let w = weights[i];
        ce -= w * probs[label].clamp(1e-15, 1.0).ln();

        // dL/dz at the output: weighted cross-entropy plus penalty pull
        let mut delta = vec![0.0; OUTPUT_CLASSES];
        for k in 0..OUTPUT_CLASSES {
            let one_hot = f64::from(k == label);
            delta[k] = w * (probs[k] - one_hot) / total_weight;
        }
        if let (Some(gap), Some(mask)) = (gap, groups) {
            let sign = if gap > 0.0 {
                1.0
            } else if gap < 0.0 {
                -1.0
            } else {
                0.0
            };
            let side = usize::from(mask[i]);
            let direction = if mask[i] { 1.0 } else { -1.0 };
            let coeff = lambda * sign * direction / fav_count[side] as f64;
            for k in 0..OUTPUT_CLASSES {
                let kron = f64::from(k == favorable);
                delta[k] += coeff * probs[favorable] * (kron - probs[k]);
            }
        }

        // backward through the stack
        for l in (0..layers.len()).rev() {
            let input: &[f64] = if l == 0 {
                data.row(i)
            } else {
                &activations[l - 1]
            };
            for (j, d) in delta.iter().enumerate() {
                grads[l].bias[j] += d;
                for (g, x) in grads[l].weights[j].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; layers[l].in_dim()];
                for (j, d) in delta.iter().enumerate() {
                    for (p, w) in prev_delta.iter_mut().zip(&layers[l].weights[j]) {
                        *p += d * w;
                    }
                }
                // relu mask from the recorded post-activation values
                for (p, a) in prev_delta.iter_mut().zip(&activations[l - 1]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
    }

    let mut loss = ce / total_weight;
    if let Some(gap) = gap {
        loss += lambda * gap.abs();
    }
    (loss, grads)
}
