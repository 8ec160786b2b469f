//! End-to-end experiment orchestration: corpus generation, filter
//! synthesis, correlation, CNN training, and the set-level evaluation
//! reports comparing peak height, PCE, and the CNN.

mod baseline;
mod experiment;
mod report;

pub use baseline::{baseline_classify, fit_threshold, BaselineFit};
pub use experiment::{
    cross_domain_eval, load_trained_model, run_experiment, stage_correlate, stage_gen_data,
    stage_prep, stage_train_cnn, stage_train_filter, ExperimentConfig,
};
pub use report::{
    parse_csv, render_csv, render_text, summarize, BucketSummary, CnnStats, EvalReport, Method,
    MethodReport, ResolutionAccuracy, RoleCount, SetError, CSV_HEADER, HIGH_ERROR_PCT,
    NEAR_ZERO_PCT,
};

use serde::{Deserialize, Serialize};

/// Every sample holds exactly one role; the held-out false class is
/// always `CnnTest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    FilterTrain,
    CnnTrain,
    CnnTest,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::FilterTrain => "filter_train",
            Role::CnnTrain => "cnn_train",
            Role::CnnTest => "cnn_test",
        })
    }
}
