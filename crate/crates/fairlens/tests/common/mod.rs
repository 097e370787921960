//! Brute-force re-implementations used as oracles by the acceptance suite.
//!
//! Everything here takes the long way around on purpose: full forward passes
//! over materialized intervened copies of the data, hand-rolled encoding and
//! group handling, and metric counting from scratch. None of it shares logic
//! with the library's cached sweep path beyond reading public model state.

// each integration test target compiles this module and uses its own subset
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fairlens::dataset::{Attribute, AttributeKind, Dataset, PrivilegedPredicate, Schema, Value};
use fairlens::metrics::{FairnessMetric, MetricKind};
use fairlens::model::{Layer, Mlp};

/// Full forward pass with an optional post-activation clamp on one hidden
/// neuron. Returns per-hidden-layer activations and the output probabilities.
pub fn brute_forward(
    layers: &[Layer],
    input: &[f64],
    clamp: Option<(usize, usize, f64)>,
) -> (Vec<Vec<f64>>, [f64; 2]) {
    let n_hidden = layers.len() - 1;
    let mut hidden = Vec::with_capacity(n_hidden);
    let mut current = input.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut next = vec![0.0; layer.bias.len()];
        for (j, (w_row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let mut z = *b;
            for (w, x) in w_row.iter().zip(&current) {
                z += w * x;
            }
            next[j] = z;
        }
        if l < n_hidden {
            for v in &mut next {
                *v = v.max(0.0);
            }
            if let Some((cl, cj, alpha)) = clamp {
                if cl == l {
                    next[cj] = alpha;
                }
            }
            hidden.push(next.clone());
            current = next;
        } else {
            current = next;
        }
    }
    let m = current[0].max(current[1]);
    let e0 = (current[0] - m).exp();
    let e1 = (current[1] - m).exp();
    (hidden, [e0 / (e0 + e1), e1 / (e0 + e1)])
}

pub fn brute_predict(layers: &[Layer], input: &[f64], clamp: Option<(usize, usize, f64)>) -> usize {
    let (_, probs) = brute_forward(layers, input, clamp);
    usize::from(probs[1] > probs[0])
}

/// Hand-rolled ordinal + min-max encoding of one row.
pub fn brute_encode_row(schema: &Schema, model: &Mlp, row: &[Value]) -> Vec<f64> {
    schema
        .attributes
        .iter()
        .zip(row)
        .enumerate()
        .map(|(col, (attr, value))| {
            let code = match (&attr.kind, value) {
                (AttributeKind::Categorical { values }, Value::Cat(v)) => {
                    values.iter().position(|x| x == v).expect("value in domain") as f64
                }
                (AttributeKind::Continuous { .. }, Value::Num(v)) => *v,
                _ => panic!("kind mismatch"),
            };
            let norm = &model.norm_params()[col];
            if norm.constant {
                0.0
            } else {
                (code - norm.min) / (norm.max - norm.min)
            }
        })
        .collect()
}

fn privileged_side(pred: &PrivilegedPredicate, value: &Value) -> bool {
    match (pred, value) {
        (PrivilegedPredicate::Equals(v), Value::Cat(x)) => x == v,
        (PrivilegedPredicate::OneOf(set), Value::Cat(x)) => set.iter().any(|v| v == x),
        (PrivilegedPredicate::GreaterThan(t), Value::Num(x)) => x > t,
        _ => false,
    }
}

/// Representative raw value for one side of a protected attribute.
fn side_representative(schema: &Schema, attr: &str, privileged: bool) -> Value {
    let a = schema.attribute(attr).expect("attribute exists");
    let pred = &schema.privileged[attr];
    match &a.kind {
        AttributeKind::Categorical { values } => values
            .iter()
            .map(|v| Value::Cat(v.clone()))
            .find(|v| privileged_side(pred, v) == privileged)
            .expect("predicate partitions domain"),
        AttributeKind::Continuous { min, max } => Value::Num(if privileged { *max } else { *min }),
    }
}

/// All privileged/unprivileged side combinations over `attrs`.
fn side_combinations(attrs: &[String]) -> Vec<Vec<(String, bool)>> {
    let mut combos: Vec<Vec<(String, bool)>> = vec![Vec::new()];
    for attr in attrs {
        let mut next = Vec::new();
        for combo in &combos {
            for side in [true, false] {
                let mut c = combo.clone();
                c.push((attr.clone(), side));
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// What a sweep clamps, in oracle terms.
#[derive(Clone, Copy)]
pub enum BruteTarget<'a> {
    Neuron(usize, usize),
    Attribute(&'a str),
}

/// Fairness score of the model on `data` with `target` forced to `alpha`,
/// computed entirely from materialized copies and fresh forward passes.
pub fn brute_metric_under(
    model: &Mlp,
    data: &Dataset,
    metric: &FairnessMetric,
    target: Option<(BruteTarget, f64)>,
    encode_row: impl Fn(&[Value]) -> Vec<f64>,
) -> f64 {
    let layers = model.layers();
    let schema = &data.schema;
    // encode + apply an attribute overwrite; neuron clamps ride the forward
    let encode_with_target = |row: &[Value]| -> (Vec<f64>, Option<(usize, usize, f64)>) {
        let mut encoded = encode_row(row);
        match target {
            Some((BruteTarget::Attribute(name), alpha)) => {
                let col = schema.attr_index(name).expect("attribute exists");
                let norm = &model.norm_params()[col];
                let enc = if norm.constant {
                    0.0
                } else {
                    (alpha - norm.min) / (norm.max - norm.min)
                };
                encoded[col] = enc;
                (encoded, None)
            }
            Some((BruteTarget::Neuron(l, j), alpha)) => (encoded, Some((l, j, alpha))),
            None => (encoded, None),
        }
    };

    match metric.kind {
        MetricKind::Spd | MetricKind::Gds => {
            let combos = if metric.kind == MetricKind::Spd {
                side_combinations(&metric.attributes[0..1])
            } else {
                side_combinations(&metric.attributes)
            };
            let mut rates = Vec::new();
            for combo in &combos {
                let mut total = 0usize;
                let mut favorable = 0usize;
                for row in &data.rows {
                    let belongs = combo.iter().all(|(attr, side)| {
                        let idx = schema.attr_index(attr).unwrap();
                        privileged_side(&schema.privileged[attr], &row[idx]) == *side
                    });
                    if !belongs {
                        continue;
                    }
                    total += 1;
                    let (encoded, clamp) = encode_with_target(row);
                    if brute_predict(layers, &encoded, clamp) == schema.favorable_label {
                        favorable += 1;
                    }
                }
                assert!(total > 0, "oracle fixture must populate every group");
                rates.push(favorable as f64 / total as f64);
            }
            let mut gap = 0.0f64;
            for (i, a) in rates.iter().enumerate() {
                for b in &rates[i + 1..] {
                    gap = gap.max((a - b).abs());
                }
            }
            gap
        }
        MetricKind::Cds => {
            let combos = side_combinations(&metric.attributes);
            let mut discriminatory = 0usize;
            for row in &data.rows {
                let (encoded, clamp) = encode_with_target(row);
                let base = brute_predict(layers, &encoded, clamp);
                let mut flipped = false;
                for combo in &combos {
                    let mut variant = row.clone();
                    for (attr, side) in combo {
                        let idx = schema.attr_index(attr).unwrap();
                        variant[idx] = side_representative(schema, attr, *side);
                    }
                    let (encoded, clamp) = encode_with_target(&variant);
                    if brute_predict(layers, &encoded, clamp) != base {
                        flipped = true;
                        break;
                    }
                }
                if flipped {
                    discriminatory += 1;
                }
            }
            discriminatory as f64 / data.rows.len() as f64
        }
    }
}

fn brute_grid(min: f64, max: f64, k: usize) -> Vec<f64> {
    if k == 1 || min == max {
        return vec![min; k];
    }
    let step = (max - min) / (k - 1) as f64;
    (0..k)
        .map(|i| {
            if i + 1 == k {
                max
            } else {
                min + step * i as f64
            }
        })
        .collect()
}

/// Brute-force AIE of one hidden neuron.
pub fn brute_aie_neuron(
    model: &Mlp,
    data: &Dataset,
    layer: usize,
    index: usize,
    metric: &FairnessMetric,
    num_interval: usize,
) -> f64 {
    let encode = |row: &[Value]| brute_encode_row(&data.schema, model, row);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in &data.rows {
        let (hidden, _) = brute_forward(model.layers(), &encode(row), None);
        lo = lo.min(hidden[layer][index]);
        hi = hi.max(hidden[layer][index]);
    }
    let vals = brute_grid(lo, hi, num_interval);
    let sum: f64 = vals
        .iter()
        .map(|&alpha| {
            brute_metric_under(
                model,
                data,
                metric,
                Some((BruteTarget::Neuron(layer, index), alpha)),
                encode,
            )
        })
        .sum();
    sum / vals.len() as f64
}

/// Brute-force AIE of one input attribute.
pub fn brute_aie_attribute(
    model: &Mlp,
    data: &Dataset,
    attribute: &str,
    metric: &FairnessMetric,
    num_interval: usize,
) -> f64 {
    let encode = |row: &[Value]| brute_encode_row(&data.schema, model, row);
    let attr = data.schema.attribute(attribute).expect("attribute exists");
    let idx = data.schema.attr_index(attribute).unwrap();
    let vals = match &attr.kind {
        AttributeKind::Categorical { values } => (0..values.len()).map(|i| i as f64).collect(),
        AttributeKind::Continuous { .. } => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &data.rows {
                let v = row[idx].as_num().unwrap();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            brute_grid(lo, hi, num_interval)
        }
    };
    let sum: f64 = vals
        .iter()
        .map(|&alpha| {
            brute_metric_under(
                model,
                data,
                metric,
                Some((BruteTarget::Attribute(attribute), alpha)),
                encode,
            )
        })
        .sum();
    sum / vals.len() as f64
}

/// One published responsibility row:
/// (p_f, p_n, cv_f, cv_n, expected category, label).
pub type SelectorRow = (
    f64,
    f64,
    Option<f64>,
    Option<f64>,
    &'static str,
    &'static str,
);

/// The twenty published responsibility rows: ten group-fairness analyses
/// followed by ten individual-discrimination analyses, with the expected
/// repair category for each.
pub const SELECTOR_TABLE: &[SelectorRow] = &[
    (
        0.250,
        0.266,
        Some(0.041),
        Some(0.152),
        "in",
        "adult gender group",
    ),
    (
        0.166,
        0.282,
        Some(0.104),
        Some(0.215),
        "in",
        "adult race group",
    ),
    (
        0.273,
        0.267,
        Some(0.095),
        Some(0.163),
        "in",
        "adult gender+race group",
    ),
    (
        0.737,
        0.460,
        Some(0.339),
        Some(0.323),
        "pre",
        "credit gender group",
    ),
    (
        0.211,
        0.096,
        Some(0.160),
        Some(0.096),
        "pre",
        "credit age group",
    ),
    (
        0.778,
        0.532,
        Some(0.269),
        Some(0.235),
        "pre",
        "credit gender+age group",
    ),
    (
        0.333,
        0.379,
        Some(0.183),
        Some(0.142),
        "pre",
        "bank age group",
    ),
    (
        0.636,
        0.435,
        Some(0.052),
        Some(0.045),
        "pre",
        "compas gender group",
    ),
    (
        0.364,
        0.194,
        Some(0.056),
        Some(0.034),
        "pre",
        "compas race group",
    ),
    (
        0.600,
        0.863,
        Some(0.0018),
        Some(0.002),
        "in",
        "compas gender+race group",
    ),
    (
        0.750,
        0.588,
        Some(0.033),
        Some(0.058),
        "in",
        "adult gender individual",
    ),
    (
        0.750,
        0.387,
        Some(0.128),
        Some(0.141),
        "in",
        "adult race individual",
    ),
    (
        0.633,
        0.468,
        Some(0.091),
        Some(0.105),
        "in",
        "adult gender+race individual",
    ),
    (
        0.947,
        0.702,
        Some(0.114),
        Some(0.096),
        "pre",
        "credit gender individual",
    ),
    (
        0.632,
        0.290,
        Some(0.041),
        Some(0.053),
        "in",
        "credit age individual",
    ),
    (
        0.833,
        0.103,
        Some(0.061),
        Some(0.066),
        "in",
        "credit gender+age individual",
    ),
    (
        0.400,
        0.508,
        Some(0.076),
        Some(0.047),
        "pre",
        "bank age individual",
    ),
    (
        0.0,
        0.153,
        None,
        Some(0.026),
        "in",
        "compas gender individual",
    ),
    (
        0.0,
        0.210,
        None,
        Some(0.133),
        "in",
        "compas race individual",
    ),
    (
        0.300,
        0.395,
        Some(0.075),
        Some(0.1),
        "in",
        "compas gender+race individual",
    ),
];

/// Schema with two protected attributes and three informative columns.
pub fn two_protected_schema() -> Schema {
    Schema {
        attributes: vec![
            Attribute {
                name: "gender".into(),
                kind: AttributeKind::Categorical {
                    values: vec!["Female".into(), "Male".into()],
                },
            },
            Attribute {
                name: "race".into(),
                kind: AttributeKind::Categorical {
                    values: vec!["Other".into(), "White".into()],
                },
            },
            Attribute {
                name: "age".into(),
                kind: AttributeKind::Continuous {
                    min: 18.0,
                    max: 80.0,
                },
            },
            Attribute {
                name: "score".into(),
                kind: AttributeKind::Continuous { min: 0.0, max: 1.0 },
            },
            Attribute {
                name: "grade".into(),
                kind: AttributeKind::Categorical {
                    values: vec!["low".into(), "mid".into(), "high".into()],
                },
            },
        ],
        protected: vec!["gender".into(), "race".into()],
        privileged: BTreeMap::from([
            ("gender".into(), PrivilegedPredicate::Equals("Male".into())),
            ("race".into(), PrivilegedPredicate::Equals("White".into())),
        ]),
        favorable_label: 1,
        label: "y".into(),
        label_values: vec!["0".into(), "1".into()],
    }
}

/// Small random dataset over the two-protected schema. The first four rows
/// pin one row into each protected valuation so group metrics are total.
pub fn two_protected_dataset(n: usize, seed: u64) -> Dataset {
    assert!(n >= 4);
    let schema = two_protected_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genders = ["Female", "Male"];
    let races = ["Other", "White"];
    let grades = ["low", "mid", "high"];
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (g, r) = if i < 4 {
            (genders[i % 2], races[i / 2])
        } else {
            (genders[rng.gen_range(0..2)], races[rng.gen_range(0..2)])
        };
        rows.push(vec![
            Value::Cat(g.into()),
            Value::Cat(r.into()),
            Value::Num(18.0 + 62.0 * rng.gen::<f64>()),
            Value::Num(rng.gen::<f64>()),
            Value::Cat(grades[rng.gen_range(0..3)].into()),
        ]);
        labels.push(rng.gen_range(0..2usize));
    }
    Dataset::new(schema, rows, labels).unwrap()
}

/// Random fixed-weight network over the two-protected schema's five inputs.
pub fn random_network(hidden: &[usize], seed: u64) -> Mlp {
    let schema = two_protected_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![schema.attributes.len()];
    dims.extend_from_slice(hidden);
    dims.push(2);
    let layers: Vec<Layer> = dims
        .windows(2)
        .map(|pair| Layer {
            weights: (0..pair[1])
                .map(|_| (0..pair[0]).map(|_| rng.gen_range(-1.5..1.5)).collect())
                .collect(),
            bias: (0..pair[1]).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        })
        .collect();
    let norm_params = schema
        .attributes
        .iter()
        .map(fairlens::dataset::norm_param_for)
        .collect();
    let column_map = schema.attributes.iter().map(|a| a.name.clone()).collect();
    Mlp::from_parts(layers, column_map, norm_params, schema.fingerprint(), 1).unwrap()
}
