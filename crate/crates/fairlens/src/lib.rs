//! Fairness diagnosis and adaptive repair for feed-forward tabular classifiers.
//!
//! The toolkit answers two questions about a trained binary classifier:
//! where does its unfairness live (input attributes vs. hidden neurons),
//! and which category of repair (pre-, in-, or post-processing) is most
//! likely to improve fairness without wrecking accuracy. Diagnosis works
//! by sweeping do-interventions over every attribute and hidden neuron,
//! scoring each sweep with a fairness metric, and aggregating the causal
//! effects into responsibility statistics that drive the selection rule.

pub mod causality;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod repair;
pub mod report;
pub mod selector;

pub use error::{Error, Result};
