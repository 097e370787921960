//! Adaptive repair selection: turn responsibility statistics into a repair
//! category and a concrete method.
//!
//! The rule: when neither attributes nor neurons carry enough responsibility
//! (both proportions at or below the threshold), only post-processing can
//! help. Otherwise pre-processing wins when the responsible attributes'
//! effects are spread more unevenly than the neurons' (CV_f > CV_n), and
//! in-processing wins the rest. An undefined CV_f (no responsible attribute)
//! never selects pre-processing; an undefined CV_n with a defined CV_f does.

use serde::{Deserialize, Serialize};

use crate::causality::{analyze_all, ResponsibilityStats};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::FairnessMetric;
use crate::model::Mlp;

pub const DEFAULT_P_THRES: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairCategory {
    Pre,
    In,
    Post,
}

impl RepairCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            RepairCategory::Pre => "pre-processing",
            RepairCategory::In => "in-processing",
            RepairCategory::Post => "post-processing",
        }
    }
}

/// The repair methods the toolkit can execute, one-plus per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Reweigh,
    DisparateImpactRemover,
    FairnessRegularizer,
    RejectOption,
}

impl Method {
    pub fn category(self) -> RepairCategory {
        match self {
            Method::Reweigh | Method::DisparateImpactRemover => RepairCategory::Pre,
            Method::FairnessRegularizer => RepairCategory::In,
            Method::RejectOption => RepairCategory::Post,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Reweigh => "reweigh",
            Method::DisparateImpactRemover => "disparate_impact_remover",
            Method::FairnessRegularizer => "fairness_regularizer",
            Method::RejectOption => "reject_option",
        }
    }
}

/// Methods enabled by default; the disparate impact remover is opt-in
/// because reweighing is preferred whenever pre-processing is selected.
pub fn default_methods() -> Vec<Method> {
    vec![
        Method::Reweigh,
        Method::FairnessRegularizer,
        Method::RejectOption,
    ]
}

/// Selection result with everything the audit report needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recommendation {
    pub category: RepairCategory,
    pub method: Method,
    pub stats: ResponsibilityStats,
    pub p_thres: f64,
    pub rationale: String,
}

fn fmt_cv(cv: Option<f64>) -> String {
    cv.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// The category decision rule over (P_f, P_n, CV_f, CV_n).
pub fn select_category(stats: &ResponsibilityStats, p_thres: f64) -> Result<RepairCategory> {
    if stats.p_f <= p_thres && stats.p_n <= p_thres {
        return Ok(RepairCategory::Post);
    }
    match (stats.cv_f, stats.cv_n) {
        (None, None) => Err(Error::Config(
            "responsibility exceeds the threshold but both CVs are undefined".into(),
        )),
        (None, Some(_)) => Ok(RepairCategory::In),
        (Some(_), None) => Ok(RepairCategory::Pre),
        (Some(cv_f), Some(cv_n)) => Ok(if cv_f > cv_n {
            RepairCategory::Pre
        } else {
            RepairCategory::In
        }),
    }
}

/// Why the category fired, in report-ready prose.
pub fn rationale(stats: &ResponsibilityStats, p_thres: f64, category: RepairCategory) -> String {
    match category {
        RepairCategory::Post => format!(
            "P_f={:.3} <= {p_thres} and P_n={:.3} <= {p_thres}: too few responsible variables, \
             only the predictions themselves are worth adjusting",
            stats.p_f, stats.p_n
        ),
        RepairCategory::Pre => format!(
            "responsibility above threshold (P_f={:.3}, P_n={:.3}); CV_f={} > CV_n={}: \
             a few input attributes dominate, so repair the training data",
            stats.p_f,
            stats.p_n,
            fmt_cv(stats.cv_f),
            fmt_cv(stats.cv_n)
        ),
        RepairCategory::In => format!(
            "responsibility above threshold (P_f={:.3}, P_n={:.3}); CV_f={} <= CV_n={}: \
             hidden neurons carry the unevenness, so repair the model",
            stats.p_f,
            stats.p_n,
            fmt_cv(stats.cv_f),
            fmt_cv(stats.cv_n)
        ),
    }
}

/// Enabled methods of a category, in preference order (reweighing before the
/// disparate impact remover).
pub fn candidates(category: RepairCategory, enabled: &[Method]) -> Vec<Method> {
    let order: &[Method] = match category {
        RepairCategory::Pre => &[Method::Reweigh, Method::DisparateImpactRemover],
        RepairCategory::In => &[Method::FairnessRegularizer],
        RepairCategory::Post => &[Method::RejectOption],
    };
    order
        .iter()
        .copied()
        .filter(|m| enabled.contains(m))
        .collect()
}

/// Preferred method of the category among the enabled ones. Callers with
/// more than one candidate can instead score each on a validation split
/// (see the repair module) and keep the best.
pub fn select_method(category: RepairCategory, enabled: &[Method]) -> Result<Method> {
    candidates(category, enabled)
        .first()
        .copied()
        .ok_or_else(|| Error::Config(format!("no enabled method for {}", category.as_str())))
}

/// Build a recommendation from already-computed statistics.
pub fn recommend_from_stats(
    stats: ResponsibilityStats,
    p_thres: f64,
    enabled: &[Method],
) -> Result<Recommendation> {
    let category = select_category(&stats, p_thres)?;
    let method = select_method(category, enabled)?;
    let rationale = rationale(&stats, p_thres, category);
    Ok(Recommendation {
        category,
        method,
        stats,
        p_thres,
        rationale,
    })
}

/// Full pipeline: sweep causal effects, then choose category and method.
pub fn recommend(
    model: &Mlp,
    data: &Dataset,
    metric: &FairnessMetric,
    p_thres: f64,
    num_interval: usize,
    enabled: &[Method],
) -> Result<Recommendation> {
    let (_, stats) = analyze_all(model, data, metric, num_interval)?;
    recommend_from_stats(stats, p_thres, enabled)
}
