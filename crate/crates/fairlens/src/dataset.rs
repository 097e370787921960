//! Tabular datasets: schema declaration, CSV ingestion, ordinal encoding,
//! protected-group machinery, and a synthetic fixture generator.
//!
//! Attributes are encoded one column per attribute (categorical values get
//! ordinal codes), then min-max scaled to the unit interval. Interventions are expressed
//! in raw attribute space and mapped through the recorded norm params, so a
//! 1:1 attribute-to-column mapping is load-bearing for the causality sweep.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value domain of a single attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// Finite set of named values; order fixes the ordinal code.
    Categorical { values: Vec<String> },
    /// Closed numeric interval.
    Continuous { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

/// Splits one protected attribute's domain into privileged / unprivileged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivilegedPredicate {
    /// Privileged iff the categorical value equals this one.
    Equals(String),
    /// Privileged iff the categorical value is in this set.
    OneOf(Vec<String>),
    /// Privileged iff the numeric value is strictly greater.
    GreaterThan(f64),
}

/// One cell of a row.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Cat(String),
    Num(f64),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Cat(s) => write!(f, "{s}"),
            Value::Num(v) => write!(f, "{v}"),
        }
    }
}

/// Declarative description of a tabular classification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
    /// Protected attribute names (the set F).
    pub protected: Vec<String>,
    /// Per protected attribute, the predicate defining the privileged group.
    pub privileged: BTreeMap<String, PrivilegedPredicate>,
    /// Class index of the favorable prediction.
    pub favorable_label: usize,
    /// Name of the label column in CSV files.
    pub label: String,
    /// Class names in index order; the label column must hold one of these.
    pub label_values: Vec<String>,
}

impl Schema {
    /// Check the structural invariants. Called by every loader.
    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Schema("no attributes declared".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for attr in &self.attributes {
            if !seen.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute {}", attr.name)));
            }
            if let AttributeKind::Categorical { values } = &attr.kind {
                if values.is_empty() {
                    return Err(Error::Schema(format!(
                        "attribute {} has empty domain",
                        attr.name
                    )));
                }
            }
            if let AttributeKind::Continuous { min, max } = &attr.kind {
                if !min.is_finite() || !max.is_finite() || min > max {
                    return Err(Error::Schema(format!(
                        "attribute {}: invalid range",
                        attr.name
                    )));
                }
            }
        }
        if self.favorable_label > 1 {
            return Err(Error::Schema("favorable_label must be 0 or 1".into()));
        }
        if self.label_values.len() != 2 {
            return Err(Error::Schema(
                "label_values must name exactly 2 classes".into(),
            ));
        }
        for name in &self.protected {
            let attr = self
                .attribute(name)
                .ok_or_else(|| Error::Schema(format!("protected attribute {name} not declared")))?;
            let pred = self
                .privileged
                .get(name)
                .ok_or_else(|| Error::Schema(format!("no privileged predicate for {name}")))?;
            check_partition(attr, pred)?;
        }
        for name in self.privileged.keys() {
            if !self.protected.iter().any(|p| p == name) {
                return Err(Error::Schema(format!(
                    "predicate for non-protected attribute {name}"
                )));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// True iff `value` falls on the privileged side of `attr`'s predicate.
    pub fn is_privileged(&self, attr: &str, value: &Value) -> Result<bool> {
        let pred = self
            .privileged
            .get(attr)
            .ok_or_else(|| Error::Schema(format!("{attr} has no privileged predicate")))?;
        Ok(predicate_holds(pred, value))
    }

    /// Representative raw value for one side of a protected attribute's
    /// binarized domain, used for counterfactual variants and interventions.
    pub fn representative(&self, attr: &str, side: GroupSide) -> Result<Value> {
        let a = self
            .attribute(attr)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {attr}")))?;
        let pred = self
            .privileged
            .get(attr)
            .ok_or_else(|| Error::Schema(format!("{attr} has no privileged predicate")))?;
        let want = side == GroupSide::Privileged;
        match (&a.kind, pred) {
            (AttributeKind::Categorical { values }, _) => values
                .iter()
                .find(|v| predicate_holds(pred, &Value::Cat((*v).clone())) == want)
                .map(|v| Value::Cat(v.clone()))
                .ok_or_else(|| {
                    Error::Schema(format!("{attr}: predicate does not partition domain"))
                }),
            (AttributeKind::Continuous { min, max }, PrivilegedPredicate::GreaterThan(_)) => {
                Ok(Value::Num(if want { *max } else { *min }))
            }
            (AttributeKind::Continuous { .. }, _) => Err(Error::Schema(format!(
                "{attr}: categorical predicate on continuous attribute"
            ))),
        }
    }

    /// Stable identifier tying models to the schema they were trained on.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }

    pub fn from_path(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema =
            serde_json::from_str(&text).map_err(|e| Error::Deserialize(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_path(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Bundled schema for one of the benchmark datasets:
    /// `adult`, `german`, `bank` or `compas`.
    pub fn preset(name: &str) -> Result<Schema> {
        let text = match name {
            "adult" => include_str!("../presets/adult.json"),
            "german" => include_str!("../presets/german.json"),
            "bank" => include_str!("../presets/bank.json"),
            "compas" => include_str!("../presets/compas.json"),
            other => return Err(Error::Config(format!("unknown preset {other}"))),
        };
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| Error::Deserialize(format!("preset: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }
}

fn predicate_holds(pred: &PrivilegedPredicate, value: &Value) -> bool {
    match (pred, value) {
        (PrivilegedPredicate::Equals(v), Value::Cat(x)) => x == v,
        (PrivilegedPredicate::OneOf(set), Value::Cat(x)) => set.iter().any(|v| v == x),
        (PrivilegedPredicate::GreaterThan(t), Value::Num(x)) => x > t,
        _ => false,
    }
}

fn check_partition(attr: &Attribute, pred: &PrivilegedPredicate) -> Result<()> {
    let bad = |msg: &str| Err(Error::Schema(format!("attribute {}: {msg}", attr.name)));
    match (&attr.kind, pred) {
        (AttributeKind::Categorical { values }, PrivilegedPredicate::Equals(_))
        | (AttributeKind::Categorical { values }, PrivilegedPredicate::OneOf(_)) => {
            let priv_count = values
                .iter()
                .filter(|v| predicate_holds(pred, &Value::Cat((*v).clone())))
                .count();
            if priv_count == 0 || priv_count == values.len() {
                return bad("privileged predicate must split the domain into two non-empty groups");
            }
            Ok(())
        }
        (AttributeKind::Continuous { min, max }, PrivilegedPredicate::GreaterThan(t)) => {
            if !(*t >= *min && *t < *max) {
                return bad("threshold must leave values on both sides of the domain");
            }
            Ok(())
        }
        _ => bad("predicate kind does not match attribute kind"),
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Validated rows + labels (+ per-row weights, default 1.0).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>, labels: Vec<usize>) -> Result<Dataset> {
        let n = rows.len();
        Dataset::with_weights(schema, rows, labels, vec![1.0; n])
    }

    pub fn with_weights(
        schema: Schema,
        rows: Vec<Vec<Value>>,
        labels: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Dataset> {
        schema.validate()?;
        if rows.len() != labels.len() || rows.len() != weights.len() {
            return Err(Error::Schema(format!(
                "length mismatch: {} rows, {} labels, {} weights",
                rows.len(),
                labels.len(),
                weights.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            validate_row(&schema, i, row)?;
            if labels[i] > 1 {
                return Err(Error::RowValidation {
                    row: i,
                    message: format!("label {} out of range", labels[i]),
                });
            }
            if !weights[i].is_finite() || weights[i] <= 0.0 {
                return Err(Error::RowValidation {
                    row: i,
                    message: format!("weight {} must be positive", weights[i]),
                });
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
            weights,
        })
    }

    /// Same rows and labels under new sample weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Dataset> {
        Dataset::with_weights(
            self.schema.clone(),
            self.rows.clone(),
            self.labels.clone(),
            weights,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Mask of rows on the privileged side of a single protected attribute.
    pub fn privileged_mask(&self, attr: &str) -> Result<Vec<bool>> {
        let idx = self
            .schema
            .attr_index(attr)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {attr}")))?;
        self.rows
            .iter()
            .map(|row| self.schema.is_privileged(attr, &row[idx]))
            .collect()
    }
}

fn validate_row(schema: &Schema, row_idx: usize, row: &[Value]) -> Result<()> {
    if row.len() != schema.attributes.len() {
        return Err(Error::RowValidation {
            row: row_idx,
            message: format!(
                "expected {} values, got {}",
                schema.attributes.len(),
                row.len()
            ),
        });
    }
    for (attr, value) in schema.attributes.iter().zip(row) {
        let ok = match (&attr.kind, value) {
            (AttributeKind::Categorical { values }, Value::Cat(v)) => values.iter().any(|x| x == v),
            (AttributeKind::Continuous { min, max }, Value::Num(v)) => {
                v.is_finite() && *v >= *min && *v <= *max
            }
            _ => false,
        };
        if !ok {
            return Err(Error::RowValidation {
                row: row_idx,
                message: format!("value {value} outside domain of attribute {}", attr.name),
            });
        }
    }
    Ok(())
}

/// Load a headered CSV against a schema. Rows with missing values (empty
/// cell or `?`) are dropped; the drop count is returned alongside the data.
/// Any other out-of-domain value is an error naming the offending row.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<(Dataset, usize)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_of = |name: &str| headers.iter().position(|h| h == name);
    let mut attr_cols = Vec::with_capacity(schema.attributes.len());
    for attr in &schema.attributes {
        attr_cols.push(
            col_of(&attr.name)
                .ok_or_else(|| Error::Schema(format!("missing column {}", attr.name)))?,
        );
    }
    let label_col = col_of(&schema.label)
        .ok_or_else(|| Error::Schema(format!("missing column {}", schema.label)))?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let fields: Vec<&str> = attr_cols
            .iter()
            .chain(std::iter::once(&label_col))
            .map(|&c| record.get(c).unwrap_or(""))
            .collect();
        if fields.iter().any(|f| f.is_empty() || *f == "?") {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(schema.attributes.len());
        for (attr, &field) in schema.attributes.iter().zip(&fields) {
            let value = match &attr.kind {
                AttributeKind::Categorical { .. } => Value::Cat(field.to_string()),
                AttributeKind::Continuous { .. } => {
                    Value::Num(field.parse::<f64>().map_err(|_| Error::RowValidation {
                        row: i,
                        message: format!("cannot parse {field} as number for {}", attr.name),
                    })?)
                }
            };
            row.push(value);
        }
        validate_row(schema, i, &row)?;
        let label_field = fields[fields.len() - 1];
        let label = schema
            .label_values
            .iter()
            .position(|v| v == label_field)
            .ok_or_else(|| Error::RowValidation {
                row: i,
                message: format!("unknown label value {label_field}"),
            })?;
        rows.push(row);
        labels.push(label);
    }
    let n = rows.len();
    Ok((
        Dataset {
            schema: schema.clone(),
            rows,
            labels,
            weights: vec![1.0; n],
        },
        dropped,
    ))
}

/// Write a dataset back out as CSV (attribute columns then label).
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = data
        .schema
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .collect();
    header.push(&data.schema.label);
    writer.write_record(&header)?;
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(data.schema.label_values[label].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Deterministic shuffled split into (train, test).
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {train_fraction} must be in (0, 1)"
        )));
    }
    let n = data.n_rows();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let take = |idx: &[usize]| Dataset {
        schema: data.schema.clone(),
        rows: idx.iter().map(|&i| data.rows[i].clone()).collect(),
        labels: idx.iter().map(|&i| data.labels[i]).collect(),
        weights: idx.iter().map(|&i| data.weights[i]).collect(),
    };
    Ok((take(&indices[..n_train]), take(&indices[n_train..])))
}

/// Per-column scaling record; `decode(encode(v))` recovers raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParam {
    pub min: f64,
    pub max: f64,
    /// Degenerate domain (min == max); encoded as 0.
    pub constant: bool,
}

impl NormParam {
    pub fn encode(&self, raw: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (raw - self.min) / (self.max - self.min)
        }
    }

    pub fn decode(&self, encoded: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            self.min + encoded * (self.max - self.min)
        }
    }
}

/// Numeric view of a dataset: one column per attribute, all values in the unit interval.
#[derive(Debug, Clone)]
pub struct EncodedMatrix {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    /// Column index -> attribute name, in schema order.
    pub column_map: Vec<String>,
    pub norm_params: Vec<NormParam>,
    pub favorable_label: usize,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_cols)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_map.iter().position(|c| c == name)
    }
}

/// Ordinal code of a raw value within its attribute, before scaling.
pub fn ordinal_code(attr: &Attribute, value: &Value) -> Result<f64> {
    match (&attr.kind, value) {
        (AttributeKind::Categorical { values }, Value::Cat(v)) => values
            .iter()
            .position(|x| x == v)
            .map(|i| i as f64)
            .ok_or_else(|| Error::Schema(format!("value {v} not in domain of {}", attr.name))),
        (AttributeKind::Continuous { .. }, Value::Num(v)) => Ok(*v),
        _ => Err(Error::Schema(format!(
            "value kind mismatch for {}",
            attr.name
        ))),
    }
}

/// Scaling parameters implied by an attribute's declared domain.
pub fn norm_param_for(attr: &Attribute) -> NormParam {
    let (min, max) = match &attr.kind {
        AttributeKind::Categorical { values } => (0.0, (values.len() - 1) as f64),
        AttributeKind::Continuous { min, max } => (*min, *max),
    };
    NormParam {
        min,
        max,
        constant: min == max,
    }
}

/// Encode a dataset into its numeric matrix form.
pub fn encode(data: &Dataset) -> Result<EncodedMatrix> {
    let n_cols = data.schema.attributes.len();
    let norm_params: Vec<NormParam> = data.schema.attributes.iter().map(norm_param_for).collect();
    let mut features = Vec::with_capacity(data.n_rows() * n_cols);
    for row in &data.rows {
        for ((attr, value), norm) in data.schema.attributes.iter().zip(row).zip(&norm_params) {
            features.push(norm.encode(ordinal_code(attr, value)?));
        }
    }
    Ok(EncodedMatrix {
        features,
        n_rows: data.n_rows(),
        n_cols,
        labels: data.labels.clone(),
        weights: data.weights.clone(),
        column_map: data
            .schema
            .attributes
            .iter()
            .map(|a| a.name.clone())
            .collect(),
        norm_params,
        favorable_label: data.schema.favorable_label,
    })
}

/// Decode one encoded cell back to its raw value.
pub fn decode_value(schema: &Schema, column: usize, encoded: f64) -> Result<Value> {
    let attr = &schema.attributes[column];
    let norm = norm_param_for(attr);
    let raw = norm.decode(encoded);
    match &attr.kind {
        AttributeKind::Categorical { values } => {
            let idx = raw.round() as usize;
            values
                .get(idx)
                .map(|v| Value::Cat(v.clone()))
                .ok_or_else(|| Error::Schema(format!("code {raw} out of domain for {}", attr.name)))
        }
        AttributeKind::Continuous { .. } => Ok(Value::Num(raw)),
    }
}

/// Which side of a protected attribute's binarized domain a row is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSide {
    Privileged,
    Unprivileged,
}

/// One valuation theta of the protected attributes: an assignment of each
/// attribute in F to a binarized group side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedValuation {
    pub assignments: Vec<(String, GroupSide)>,
}

impl ProtectedValuation {
    /// Human-readable form used in reports and error messages.
    pub fn describe(&self) -> String {
        self.assignments
            .iter()
            .map(|(attr, side)| {
                let tag = match side {
                    GroupSide::Privileged => "privileged",
                    GroupSide::Unprivileged => "unprivileged",
                };
                format!("{attr}={tag}")
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Representative raw values, usable as counterfactual substitutions.
    pub fn representative_values(&self, schema: &Schema) -> Result<Vec<(String, Value)>> {
        self.assignments
            .iter()
            .map(|(attr, side)| Ok((attr.clone(), schema.representative(attr, *side)?)))
            .collect()
    }
}

/// All 2^|F| valuations over the binarized protected attributes, enumerated
/// over a chosen subset (in `schema.protected` order when `attrs` follows it).
pub fn valuations_over(schema: &Schema, attrs: &[String]) -> Result<Vec<ProtectedValuation>> {
    if attrs.is_empty() {
        return Err(Error::Config("protected attribute set is empty".into()));
    }
    for a in attrs {
        if !schema.protected.iter().any(|p| p == a) {
            return Err(Error::Schema(format!("{a} is not a protected attribute")));
        }
    }
    let mut result = vec![ProtectedValuation {
        assignments: Vec::new(),
    }];
    for attr in attrs {
        let mut next = Vec::with_capacity(result.len() * 2);
        for valuation in &result {
            for side in [GroupSide::Privileged, GroupSide::Unprivileged] {
                let mut assignments = valuation.assignments.clone();
                assignments.push((attr.clone(), side));
                next.push(ProtectedValuation { assignments });
            }
        }
        result = next;
    }
    Ok(result)
}

/// All valuations over the schema's full protected set.
pub fn valuations(schema: &Schema) -> Result<Vec<ProtectedValuation>> {
    valuations_over(schema, &schema.protected.clone())
}

/// Mask of rows whose protected values fall in valuation theta's groups.
pub fn group_mask(data: &Dataset, theta: &ProtectedValuation) -> Result<Vec<bool>> {
    let mut resolved = Vec::with_capacity(theta.assignments.len());
    for (attr, side) in &theta.assignments {
        let idx = data
            .schema
            .attr_index(attr)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {attr}")))?;
        resolved.push((idx, attr.clone(), *side));
    }
    let mut mask = Vec::with_capacity(data.n_rows());
    for row in &data.rows {
        let mut hit = true;
        for (idx, attr, side) in &resolved {
            let privileged = data.schema.is_privileged(attr, &row[*idx])?;
            if privileged != (*side == GroupSide::Privileged) {
                hit = false;
                break;
            }
        }
        mask.push(hit);
    }
    Ok(mask)
}

/// Synthetic fixture: one binary protected attribute (`group`, privileged A)
/// plus four informative non-protected attributes. The favorable-label rate
/// of the privileged group exceeds the unprivileged group's by `bias` in
/// expectation: with probability `bias` the label copies the group bit,
/// otherwise it is drawn from a feature-driven base rate common to both.
pub fn synth_generate(n: usize, bias: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if !(0.0..=1.0).contains(&bias) {
        return Err(Error::Config(format!("bias {bias} must be in [0, 1]")));
    }
    let schema = synth_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shades = ["low", "mid", "high"];
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let privileged = rng.gen::<f64>() < 0.5;
        let x1 = rng.gen::<f64>();
        let x2 = rng.gen::<f64>();
        let x3 = rng.gen::<f64>();
        let shade = rng.gen_range(0..3usize);
        let z = 2.0 * (x1 - 0.5) + 1.4 * (x2 - 0.5) + 1.0 * (x3 - 0.5) + 0.5 * (shade as f64 - 1.0);
        let base_rate = 0.5 + 0.45 * (1.6 * z).tanh();
        let copy_group = rng.gen::<f64>() < bias;
        let label = if copy_group {
            privileged as usize
        } else {
            (rng.gen::<f64>() < base_rate) as usize
        };
        rows.push(vec![
            Value::Cat(if privileged { "A" } else { "B" }.to_string()),
            Value::Num(x1),
            Value::Num(x2),
            Value::Num(x3),
            Value::Cat(shades[shade].to_string()),
        ]);
        labels.push(label);
    }
    Dataset::new(schema, rows, labels)
}

/// Schema of the synthetic fixture.
pub fn synth_schema() -> Schema {
    Schema {
        attributes: vec![
            Attribute {
                name: "group".into(),
                kind: AttributeKind::Categorical {
                    values: vec!["A".into(), "B".into()],
                },
            },
            Attribute {
                name: "x1".into(),
                kind: AttributeKind::Continuous { min: 0.0, max: 1.0 },
            },
            Attribute {
                name: "x2".into(),
                kind: AttributeKind::Continuous { min: 0.0, max: 1.0 },
            },
            Attribute {
                name: "x3".into(),
                kind: AttributeKind::Continuous { min: 0.0, max: 1.0 },
            },
            Attribute {
                name: "shade".into(),
                kind: AttributeKind::Categorical {
                    values: vec!["low".into(), "mid".into(), "high".into()],
                },
            },
        ],
        protected: vec!["group".into()],
        privileged: BTreeMap::from([("group".into(), PrivilegedPredicate::Equals("A".into()))]),
        favorable_label: 1,
        label: "outcome".into(),
        label_values: vec!["0".into(), "1".into()],
    }
}
