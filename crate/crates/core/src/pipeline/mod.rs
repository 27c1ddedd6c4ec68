//! End-to-end orchestration: cohort, labels, tokens, features, training and
//! evaluation, with every artifact written to one run directory.

mod compare;
mod config;
mod fixture;
mod run;

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use compare::{
    benchmark_table, compare_reports, load_report, reference_column, Comparison, REPORTED_BASELINES,
    REPORTED_STRUCTURED,
};
pub use config::{CohortConfig, Mode, Paths, RunConfig, SplitConfig, TfidfConfig, CONFIG_FILE};
pub use fixture::{synthetic_pretrained, write_fixture, Fixture, PRETRAINED_FILE};
pub use run::{
    evaluate_run, prepare_cohort, run_pipeline, split_admissions, Cohort, Featurizer, RunArtifacts, RunLog, RunReport,
    Split, TrainedModel, CHECKPOINT_FILE, LABELS_FILE, REPORT_JSON, REPORT_TEXT, RUN_LOG, TFIDF_FILE, WORD2VEC_FILE,
};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Labels,
    Text,
    Embed,
    Features,
    Scale,
    Train,
    Evaluate,
    Output,
    Compare,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Labels => "labels",
            Stage::Text => "text",
            Stage::Embed => "embed",
            Stage::Features => "features",
            Stage::Scale => "scale",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
            Stage::Compare => "compare",
        };
        f.write_str(s)
    }
}

/// Broad failure class, mapped onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: ErrorKind, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn usage(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Usage, message)
    }

    pub fn data(stage: Stage, err: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Data, err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl From<(Stage, crate::net::NetError)> for PipelineError {
    fn from((stage, err): (Stage, crate::net::NetError)) -> Self {
        use crate::net::NetError;
        let kind = match err {
            NetError::NonFinite(_) | NetError::NonFiniteLoss { .. } => ErrorKind::Numeric,
            NetError::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        PipelineError::new(stage, kind, err.to_string())
    }
}

/// Per-stage seed: the first eight bytes of SHA-256 over the top-level seed and a fixed label.
pub fn stage_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_by_label_and_seed() {
        let a = stage_seed(7, "split");
        assert_eq!(a, stage_seed(7, "split"));
        assert_ne!(a, stage_seed(7, "train"));
        assert_ne!(a, stage_seed(8, "split"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ErrorKind::Usage.exit_code(), 1);
        assert_eq!(ErrorKind::Data.exit_code(), 2);
        assert_eq!(ErrorKind::Numeric.exit_code(), 3);
        let e = PipelineError::data(Stage::Embed, "missing file");
        assert_eq!(e.to_string(), "embed stage: missing file");
    }
}
