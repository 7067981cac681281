//! The motion-trial analysis pipeline: frame transforms, smoothing and
//! differentiation, delay detection, peak displacement, responder
//! clustering, delay mixtures, OLS regression, ANOVA with Bonferroni
//! pairwise comparisons, confusion statistics, and study-level reports.
//!
//! Every statistic is a deterministic function of the input logs: iteration
//! orders are canonical, clustering restarts use fixed seeds, and the EM
//! initialization is percentile-based.

mod cluster;
mod confusion;
mod features;
mod filter;
mod frames;
mod mixture;
mod report;
mod stats;

pub use cluster::{cluster_responders, ResponderClusters, SubjectFeatures};
pub use confusion::{confusion_stats, ConfusionStats};
pub use features::{detect_delay, extract_features, peak_displacement, TrialFeatures};
pub use filter::{filtfilt, kinematics_of_trial, Biquad, TrialKinematics};
pub use frames::{to_handle_frame, RigidOffset};
pub use mixture::{delay_mixture, MixtureFit};
pub use report::{
    summarize_study, write_report_csvs, write_report_json, AnalysisInputs, StudySummary,
};
pub use stats::{
    anova_with_bonferroni, ols_fit, welch_t_test, AnovaResult, AnovaRow, Design, OlsFit,
    PairwiseComparison, WelchResult,
};

// The log loaders live with the data model; re-exported here because the
// pipeline is their main consumer.
pub use crate::trial::{load_choices, load_subjects, load_trials};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series too short: need at least {needed} samples, found {got}")]
    TooShort { needed: usize, got: usize },
    #[error("no motion detected: no acceleration peak exceeds the threshold")]
    NoMotionDetected,
    #[error("degenerate features: all points identical")]
    DegenerateFeatures,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("rank-deficient design; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("unknown direction label: {label:?}")]
    UnknownLabel { label: String },
    #[error("no metadata for subject {subject_id:?}")]
    MissingSubjectInfo { subject_id: String },
    #[error(transparent)]
    Io(#[from] crate::trial::TrialIoError),
}
