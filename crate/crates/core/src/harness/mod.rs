//! Configuration, model files, studies and their table output.

pub mod artifact;
pub mod config;
pub mod output;
pub mod studies;

pub use artifact::{AnyModel, ModelArtifact};
pub use config::{Method, StudyConfig};
pub use studies::{
    online, study_naive_points, study_rbm_convergence, study_timing, study_truth_convergence, train, ConvergenceRecord,
    NaiveRow, OnlineResult, TestSet, TimingRow, TruthRow,
};
