//! On-disk artifact formats for the audit pipeline. Every file carries a
//! format_version; JSON artifacts keep their phase wall-clock alongside the
//! payload so the merged report can account for time without re-running.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::causality::{ace, AieRecord, ResponsibilityStats};
use crate::error::{Error, Result};
use crate::metrics::{FairnessMetric, ScoreReport};
use crate::model::{InterventionTarget, TrainConfig};
use crate::repair::{PredictionOverlay, RepairOutcome};
use crate::selector::Recommendation;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainArtifact {
    pub format_version: u32,
    pub schema_fingerprint: String,
    pub dataset_path: String,
    pub schema_path: String,
    pub train_fraction: f64,
    pub metric: FairnessMetric,
    pub config: TrainConfig,
    pub score: ScoreReport,
    pub timing_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub format_version: u32,
    pub schema_fingerprint: String,
    pub metric: FairnessMetric,
    pub num_interval: usize,
    pub stats: ResponsibilityStats,
    pub timing_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendationArtifact {
    pub format_version: u32,
    pub recommendation: Recommendation,
    /// Validation-split scores per candidate when several methods competed.
    pub candidate_scores: Vec<(String, f64)>,
    pub timing_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeArtifact {
    pub format_version: u32,
    pub outcome: RepairOutcome,
    pub timing_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlayArtifact {
    pub format_version: u32,
    pub overlay: PredictionOverlay,
}

/// One line of the plot-ready causal-effect table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AieTableRow {
    pub kind: String,
    pub layer: Option<usize>,
    pub index: Option<usize>,
    pub name: String,
    pub baseline: f64,
    pub aie: f64,
    pub ace: f64,
    pub responsible: bool,
}

impl AieTableRow {
    pub fn from_record(record: &AieRecord) -> AieTableRow {
        let (kind, layer, index, name) = match &record.target {
            InterventionTarget::Attribute(name) => {
                ("attribute".to_string(), None, None, name.clone())
            }
            InterventionTarget::Neuron { layer, index } => (
                "neuron".to_string(),
                Some(*layer),
                Some(*index),
                String::new(),
            ),
        };
        AieTableRow {
            kind,
            layer,
            index,
            name,
            baseline: record.baseline,
            aie: record.aie,
            ace: ace(record),
            responsible: record.responsible(),
        }
    }
}

/// The merged audit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub format_version: u32,
    pub train: TrainArtifact,
    pub stats: StatsArtifact,
    pub recommendation: RecommendationArtifact,
    pub outcome: OutcomeArtifact,
    pub aie_rows: Vec<AieTableRow>,
    /// Phase name -> wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Deserialize(format!("{}: {e}", path.display())))
}

/// Write the scatter-ready table: a version comment line, a header, then one
/// row per analyzed variable.
pub fn write_aie_table(path: &Path, records: &[AieRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# format_version={FORMAT_VERSION}")?;
    writeln!(file, "kind,layer,index,name,baseline,aie,ace,responsible")?;
    for record in records {
        let row = AieTableRow::from_record(record);
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            row.kind,
            row.layer.map_or(String::new(), |v| v.to_string()),
            row.index.map_or(String::new(), |v| v.to_string()),
            row.name,
            row.baseline,
            row.aie,
            row.ace,
            row.responsible
        )?;
    }
    Ok(())
}

pub fn read_aie_table(path: &Path) -> Result<Vec<AieTableRow>> {
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    let bad = |msg: String| Error::Deserialize(format!("{}: {msg}", path.display()));
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("kind,") || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("line {}: expected 8 fields", i + 1)));
        }
        let opt_usize = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| bad(format!("line {}: {e}", i + 1)))
            }
        };
        let num =
            |s: &str| -> Result<f64> { s.parse().map_err(|e| bad(format!("line {}: {e}", i + 1))) };
        rows.push(AieTableRow {
            kind: fields[0].to_string(),
            layer: opt_usize(fields[1])?,
            index: opt_usize(fields[2])?,
            name: fields[3].to_string(),
            baseline: num(fields[4])?,
            aie: num(fields[5])?,
            ace: num(fields[6])?,
            responsible: fields[7] == "true",
        });
    }
    Ok(rows)
}
