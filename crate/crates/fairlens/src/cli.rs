//! Batch command-line surface. Commands hand off through files in the output
//! directory, so a full audit is `synth` (or your own CSV) -> `train` ->
//! `analyze` -> `recommend` -> `repair` -> `report` with no hidden state.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::causality::{analyze_all, ResponsibilityStats};
use crate::dataset::{self, encode, load_csv, split, Schema};
use crate::error::{Error, Result};
use crate::metrics::{score_report, FairnessMetric, MetricKind};
use crate::model::{train_for_schema, Mlp, TrainConfig, DEFAULT_HIDDEN_SIZES};
use crate::repair::{run_method, RepairContext, RepairParams};
use crate::report::{
    read_aie_table, read_json, write_aie_table, write_json, AuditReport, OutcomeArtifact,
    OverlayArtifact, RecommendationArtifact, StatsArtifact, TrainArtifact, FORMAT_VERSION,
};
use crate::selector::{
    self, candidates, default_methods, rationale, select_category, select_method, Method,
    Recommendation,
};

pub const THREADS_ENV: &str = "FAIRLENS_THREADS";

#[derive(Parser)]
#[command(
    name = "fairlens",
    version,
    about = "Fairness diagnosis and adaptive repair for tabular classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Spd,
    Gds,
    Cds,
}

impl From<MetricArg> for MetricKind {
    fn from(value: MetricArg) -> MetricKind {
        match value {
            MetricArg::Spd => MetricKind::Spd,
            MetricArg::Gds => MetricKind::Gds,
            MetricArg::Cds => MetricKind::Cds,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    dataset: PathBuf,
    /// Schema config (JSON); see the bundled presets.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct MetricArgs {
    /// Fairness metric driving the audit.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Protected attributes the metric runs over (defaults to the schema's;
    /// spd defaults to the first one).
    #[arg(long, value_delimiter = ',')]
    protected: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixture dataset with a planted label bias.
    Synth {
        #[arg(long)]
        n: usize,
        /// Expected favorable-rate gap between the groups.
        #[arg(long, default_value_t = 0.3)]
        bias: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the baseline classifier and score it on the test split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Hidden layer sizes.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep do-interventions over every attribute and neuron.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        metric: MetricArgs,
        /// Model file (defaults to <out>/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        num_interval: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the repair category and method from the analysis statistics.
    Recommend {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = selector::DEFAULT_P_THRES)]
        p_thres: f64,
        /// Also consider the disparate impact remover as a pre-processing
        /// candidate (scored against reweighing on a validation split).
        #[arg(long, default_value_t = false)]
        enable_dir: bool,
        /// Replay mode: bypass the analysis files and decide directly from
        /// published statistics.
        #[arg(long)]
        pf: Option<f64>,
        #[arg(long)]
        pn: Option<f64>,
        #[arg(long)]
        cvf: Option<f64>,
        #[arg(long)]
        cvn: Option<f64>,
        /// Dataset/schema, needed only when several candidates must be
        /// compared empirically.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Execute the recommended repair and measure the outcome.
    Repair {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Regularizer weight for in-processing retraining.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Reject-option confidence band.
        #[arg(long, default_value_t = 0.7)]
        theta_band: f64,
        /// Quantile repair fraction for the disparate impact remover.
        #[arg(long, default_value_t = 1.0)]
        repair_level: f64,
    },
    /// Merge all phase artifacts into one audit report.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn out_dir(&self) -> PathBuf {
        match self {
            Command::Synth { out, .. }
            | Command::Train { out, .. }
            | Command::Analyze { out, .. }
            | Command::Recommend { out, .. }
            | Command::Repair { out, .. }
            | Command::Report { out } => out.clone(),
        }
    }
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let out = cli.command.out_dir();
    let result = dispatch(cli.command);
    if let Err(e) = &result {
        log_error(&out, e);
    }
    result
}

fn log_error(out: &Path, error: &Error) {
    if !out.exists() {
        return;
    }
    if let Ok(mut file) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("errors.log"))
    {
        let _ = writeln!(file, "{error}");
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { n, bias, seed, out } => cmd_synth(n, bias, seed, &out),
        Command::Train {
            data,
            metric,
            train_fraction,
            epochs,
            learning_rate,
            batch_size,
            hidden,
            seed,
            out,
        } => {
            let config = TrainConfig {
                hidden_sizes: if hidden.is_empty() {
                    DEFAULT_HIDDEN_SIZES.to_vec()
                } else {
                    hidden
                },
                epochs,
                learning_rate,
                batch_size,
                seed,
                ..TrainConfig::default()
            };
            cmd_train(&data, &metric, train_fraction, config, &out)
        }
        Command::Analyze {
            data,
            metric,
            model,
            num_interval,
            out,
        } => cmd_analyze(&data, &metric, model, num_interval, &out),
        Command::Recommend {
            out,
            p_thres,
            enable_dir,
            pf,
            pn,
            cvf,
            cvn,
            dataset,
            schema,
        } => cmd_recommend(
            &out,
            p_thres,
            enable_dir,
            ReplayStats { pf, pn, cvf, cvn },
            dataset,
            schema,
        ),
        Command::Repair {
            data,
            out,
            lambda,
            theta_band,
            repair_level,
        } => {
            let params = RepairParams {
                lambda,
                theta_band,
                repair_level,
            };
            cmd_repair(&data, &params, &out)
        }
        Command::Report { out } => cmd_report(&out),
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn load_inputs(data: &DataArgs) -> Result<(Schema, crate::dataset::Dataset)> {
    require_exists(&data.schema, "schema file")?;
    require_exists(&data.dataset, "dataset file")?;
    let schema = Schema::from_path(&data.schema)?;
    let (loaded, dropped) = load_csv(&data.dataset, &schema)?;
    if dropped > 0 {
        println!("dropped {dropped} rows with missing values");
    }
    Ok((schema, loaded))
}

fn resolve_metric(
    args: &MetricArgs,
    schema: &Schema,
    fallback: Option<&FairnessMetric>,
) -> Result<FairnessMetric> {
    match (args.metric, fallback) {
        (None, Some(metric)) if args.protected.is_empty() => Ok(metric.clone()),
        (kind, _) => {
            let kind: MetricKind = kind.map_or(MetricKind::Spd, MetricKind::from);
            let attributes = if args.protected.is_empty() {
                match kind {
                    MetricKind::Spd => schema.protected.iter().take(1).cloned().collect(),
                    _ => schema.protected.clone(),
                }
            } else {
                args.protected.clone()
            };
            FairnessMetric::new(kind, attributes)
        }
    }
}

fn cmd_synth(n: usize, bias: f64, seed: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = dataset::synth_generate(n, bias, seed)?;
    dataset::write_csv(&data, &out.join("synth.csv"))?;
    data.schema.to_path(&out.join("schema.json"))?;
    println!(
        "wrote {} rows to {}",
        data.n_rows(),
        out.join("synth.csv").display()
    );
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    metric_args: &MetricArgs,
    train_fraction: f64,
    config: TrainConfig,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let (schema, loaded) = load_inputs(data)?;
    let metric = resolve_metric(metric_args, &schema, None)?;
    let (train_set, test_set) = split(&loaded, train_fraction, config.seed)?;
    let matrix = encode(&train_set)?;
    let model = train_for_schema(
        &matrix,
        &config,
        None,
        schema.fingerprint(),
        schema.favorable_label,
    )?;
    model.save(&out.join("model.json"))?;
    let score = score_report(&model, &test_set, &metric)?;
    let artifact = TrainArtifact {
        format_version: FORMAT_VERSION,
        schema_fingerprint: schema.fingerprint(),
        dataset_path: data.dataset.display().to_string(),
        schema_path: data.schema.display().to_string(),
        train_fraction,
        metric: metric.clone(),
        config,
        score: score.clone(),
        timing_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("baseline.json"), &artifact)?;
    println!("accuracy: {:.4}", score.accuracy);
    println!("{}: {:.4}", metric.describe(), score.value);
    Ok(())
}

fn sweep_pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var(THREADS_ENV) {
        Ok(value) => {
            let threads: usize = value
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV}={value} is not a number")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(Some(pool))
        }
        Err(_) => Ok(None),
    }
}

fn cmd_analyze(
    data: &DataArgs,
    metric_args: &MetricArgs,
    model_path: Option<PathBuf>,
    num_interval: usize,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let baseline: TrainArtifact = read_json(&out.join("baseline.json"))?;
    let (schema, loaded) = load_inputs(data)?;
    let model_path = model_path.unwrap_or_else(|| out.join("model.json"));
    require_exists(&model_path, "model file")?;
    let model = Mlp::load(&model_path)?;
    if model.schema_fingerprint() != schema.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: schema.fingerprint(),
            found: model.schema_fingerprint().to_string(),
        });
    }
    let metric = resolve_metric(metric_args, &schema, Some(&baseline.metric))?;
    // causal effects are measured on the training split
    let (train_set, _) = split(&loaded, baseline.train_fraction, baseline.config.seed)?;
    let (records, stats) = match sweep_pool()? {
        Some(pool) => pool.install(|| analyze_all(&model, &train_set, &metric, num_interval))?,
        None => analyze_all(&model, &train_set, &metric, num_interval)?,
    };
    write_aie_table(&out.join("aie_table.csv"), &records)?;
    let artifact = StatsArtifact {
        format_version: FORMAT_VERSION,
        schema_fingerprint: schema.fingerprint(),
        metric,
        num_interval,
        stats,
        timing_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("stats.json"), &artifact)?;
    let s = &artifact.stats;
    println!("baseline: {:.4}", s.baseline);
    println!(
        "P_f: {:.4}  P_n: {:.4}  CV_f: {}  CV_n: {}",
        s.p_f,
        s.p_n,
        s.cv_f.map_or("-".into(), |v| format!("{v:.4}")),
        s.cv_n.map_or("-".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

struct ReplayStats {
    pf: Option<f64>,
    pn: Option<f64>,
    cvf: Option<f64>,
    cvn: Option<f64>,
}

fn cmd_recommend(
    out: &Path,
    p_thres: f64,
    enable_dir: bool,
    replay: ReplayStats,
    dataset_path: Option<PathBuf>,
    schema_path: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let mut enabled = default_methods();
    if enable_dir {
        enabled.push(Method::DisparateImpactRemover);
    }

    let stats = match (replay.pf, replay.pn) {
        (Some(p_f), Some(p_n)) => ResponsibilityStats {
            p_f,
            p_n,
            cv_f: replay.cvf,
            cv_n: replay.cvn,
            responsible_attributes: Vec::new(),
            responsible_neurons: Vec::new(),
            baseline: 0.0,
        },
        (None, None) => read_json::<StatsArtifact>(&out.join("stats.json"))?.stats,
        _ => return Err(Error::Config("replay mode needs both --pf and --pn".into())),
    };

    let category = select_category(&stats, p_thres)?;
    let mut candidate_scores: Vec<(String, f64)> = Vec::new();
    let pool = candidates(category, &enabled);
    let method = if pool.len() > 1 {
        let dataset_path = dataset_path
            .ok_or_else(|| Error::Config("comparing candidates needs --dataset".into()))?;
        let schema_path = schema_path
            .ok_or_else(|| Error::Config("comparing candidates needs --schema".into()))?;
        let baseline: TrainArtifact = read_json(&out.join("baseline.json"))?;
        let data = DataArgs {
            dataset: dataset_path,
            schema: schema_path,
        };
        let (_, loaded) = load_inputs(&data)?;
        let (train_set, _) = split(&loaded, baseline.train_fraction, baseline.config.seed)?;
        let (best, scores) = crate::repair::pick_best_candidate(
            &train_set,
            &baseline.config,
            &baseline.metric,
            &pool,
            &RepairParams::default(),
        )?;
        candidate_scores = scores
            .into_iter()
            .map(|(m, s)| (m.as_str().to_string(), s))
            .collect();
        best
    } else {
        select_method(category, &enabled)?
    };

    let recommendation = Recommendation {
        category,
        method,
        rationale: rationale(&stats, p_thres, category),
        stats,
        p_thres,
    };
    let artifact = RecommendationArtifact {
        format_version: FORMAT_VERSION,
        recommendation,
        candidate_scores,
        timing_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("recommendation.json"), &artifact)?;
    let r = &artifact.recommendation;
    println!("category: {}", r.category.as_str());
    println!("method: {}", r.method.as_str());
    println!("rationale: {}", r.rationale);
    Ok(())
}

fn cmd_repair(data: &DataArgs, params: &RepairParams, out: &Path) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let baseline_artifact: TrainArtifact = read_json(&out.join("baseline.json"))?;
    let rec_artifact: RecommendationArtifact = read_json(&out.join("recommendation.json"))?;
    let (schema, loaded) = load_inputs(data)?;
    let model = Mlp::load(&out.join("model.json"))?;
    if model.schema_fingerprint() != schema.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: schema.fingerprint(),
            found: model.schema_fingerprint().to_string(),
        });
    }
    let (train_set, test_set) = split(
        &loaded,
        baseline_artifact.train_fraction,
        baseline_artifact.config.seed,
    )?;
    let ctx = RepairContext {
        train: &train_set,
        test: &test_set,
        config: &baseline_artifact.config,
        metric: &baseline_artifact.metric,
        baseline: &model,
    };
    let (repaired, overlay, outcome) =
        run_method(&ctx, rec_artifact.recommendation.method, params)?;
    if let Some(repaired) = repaired {
        repaired.save(&out.join("repaired_model.json"))?;
    }
    if let Some(overlay) = overlay {
        write_json(
            &out.join("overlay.json"),
            &OverlayArtifact {
                format_version: FORMAT_VERSION,
                overlay,
            },
        )?;
    }
    let artifact = OutcomeArtifact {
        format_version: FORMAT_VERSION,
        outcome,
        timing_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("outcome.json"), &artifact)?;
    let o = &artifact.outcome;
    println!("method: {}", o.method.as_str());
    println!(
        "{}: {:.4} -> {:.4}  (improvement {:+.4})",
        o.metric.describe(),
        o.fairness_before,
        o.fairness_after,
        o.improvement
    );
    println!(
        "accuracy: {:.4} -> {:.4}  (delta {:+.4})",
        o.accuracy_before, o.accuracy_after, o.accuracy_delta
    );
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let required = [
        "baseline.json",
        "aie_table.csv",
        "stats.json",
        "recommendation.json",
        "outcome.json",
    ];
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|f| !out.join(f).exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing artifacts: {}",
            missing.join(", ")
        )));
    }
    let train: TrainArtifact = read_json(&out.join("baseline.json"))?;
    let stats: StatsArtifact = read_json(&out.join("stats.json"))?;
    let recommendation: RecommendationArtifact = read_json(&out.join("recommendation.json"))?;
    let outcome: OutcomeArtifact = read_json(&out.join("outcome.json"))?;
    let aie_rows = read_aie_table(&out.join("aie_table.csv"))?;

    // internal consistency before merging
    let o = &outcome.outcome;
    if (o.improvement - (o.fairness_before - o.fairness_after)).abs() > 1e-12
        || (o.accuracy_delta - (o.accuracy_after - o.accuracy_before)).abs() > 1e-12
    {
        return Err(Error::Config(
            "outcome deltas do not recompute from stored scores".into(),
        ));
    }
    if train.schema_fingerprint != stats.schema_fingerprint {
        return Err(Error::Config(
            "analysis was run against a different schema".into(),
        ));
    }
    let timings: std::collections::BTreeMap<String, f64> = [
        ("train".to_string(), train.timing_seconds),
        ("analyze".to_string(), stats.timing_seconds),
        ("recommend".to_string(), recommendation.timing_seconds),
        ("repair".to_string(), outcome.timing_seconds),
    ]
    .into();
    if timings.values().any(|&t| t <= 0.0) {
        return Err(Error::Config("artifact timings must be positive".into()));
    }
    let report = AuditReport {
        format_version: FORMAT_VERSION,
        train,
        stats,
        recommendation,
        outcome,
        aie_rows,
        timings,
    };
    write_json(&out.join("report.json"), &report)?;
    println!("report: {}", out.join("report.json").display());
    for (phase, seconds) in &report.timings {
        println!("  {phase}: {seconds:.2}s");
    }
    Ok(())
}
