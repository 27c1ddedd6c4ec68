use std::path::{Path, PathBuf};

use super::{PipelineError, Stage};
use crate::embed::{standin_pretrained, EmbeddingTable};
use crate::ingest::{generate_synthetic, SyntheticConfig};

pub const PRETRAINED_FILE: &str = "pretrained.txt";

/// Paths of a generated corpus plus its stand-in pretrained table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub notes: PathBuf,
    pub diagnoses: PathBuf,
    pub pretrained: PathBuf,
}

/// Stand-in pretrained table for a synthetic corpus. It knows the filler
/// vocabulary and one keyword tier: the rare tier when the config has one,
/// otherwise the regular keywords. Each group's words cluster around a
/// shared direction.
pub fn synthetic_pretrained(cfg: &SyntheticConfig, dim: usize, seed: u64) -> EmbeddingTable {
    let topics = if cfg.rare_keywords.iter().any(|t| !t.is_empty()) {
        &cfg.rare_keywords
    } else {
        &cfg.keywords
    };
    standin_pretrained(topics, &cfg.filler, dim, 2.0, seed)
}

/// Writes the notes CSV, diagnoses CSV and stand-in pretrained table into `dir`.
pub fn write_fixture(dir: &Path, cfg: &SyntheticConfig, seed: u64, dim: usize) -> Result<Fixture, PipelineError> {
    let data = generate_synthetic(cfg, seed).map_err(|e| PipelineError::usage(Stage::Ingest, e.to_string()))?;
    let (notes, diagnoses) = data
        .write_to(dir)
        .map_err(|e| PipelineError::data(Stage::Output, format!("{}: {e}", dir.display())))?;
    let pretrained = dir.join(PRETRAINED_FILE);
    synthetic_pretrained(cfg, dim, seed ^ 0x5eed)
        .save_text(&pretrained)
        .map_err(|e| PipelineError::data(Stage::Output, e))?;
    Ok(Fixture {
        notes,
        diagnoses,
        pretrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standin_covers_one_tier() {
        let standard = SyntheticConfig::standard(100, 20);
        let t = synthetic_pretrained(&standard, 16, 1);
        assert!(standard.keywords.iter().flatten().all(|w| t.contains(w)));
        assert_eq!(t.len(), 20 * 12 + standard.filler.len());

        let mixed = SyntheticConfig::mixed_signal(100, 20);
        let t = synthetic_pretrained(&mixed, 16, 1);
        assert!(mixed.rare_keywords.iter().flatten().all(|w| t.contains(w)));
        assert!(mixed.keywords.iter().flatten().all(|w| !t.contains(w)));
    }
}
