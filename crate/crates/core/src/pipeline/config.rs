use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::baseline::DEFAULT_TOP_K;
use crate::embed::SkipgramConfig;
use crate::ingest::DEFAULT_MIN_WORDS;
use crate::net::TrainConfig;

/// Name of the config snapshot inside a run directory.
pub const CONFIG_FILE: &str = "config.toml";

/// Feature wiring. `Hybrid` fuses two embedding channels; the rest feed one
/// channel straight into the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hybrid,
    Tfidf,
    Word2vecOnly,
    PretrainedOnly,
}

impl Mode {
    /// Display order of comparison tables.
    pub const ALL: [Mode; 4] = [Mode::Hybrid, Mode::Tfidf, Mode::Word2vecOnly, Mode::PretrainedOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hybrid => "hybrid",
            Mode::Tfidf => "tfidf",
            Mode::Word2vecOnly => "word2vec_only",
            Mode::PretrainedOnly => "pretrained_only",
        }
    }

    pub fn column_title(self) -> &'static str {
        match self {
            Mode::Hybrid => "Hybrid",
            Mode::Tfidf => "TF-IDF",
            Mode::Word2vecOnly => "Word2Vec",
            Mode::PretrainedOnly => "Pretrained",
        }
    }

    pub fn needs_pretrained(self) -> bool {
        matches!(self, Mode::Hybrid | Mode::PretrainedOnly)
    }

    pub fn needs_word2vec(self) -> bool {
        matches!(self, Mode::Hybrid | Mode::Word2vecOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected hybrid, tfidf, word2vec_only or pretrained_only)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub notes: PathBuf,
    pub diagnoses: PathBuf,
    /// Word-vector text file; required by `hybrid` and `pretrained_only`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Replaces the bundled English stopword list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stoplist: Option<PathBuf>,
    /// Replaces the standard 20-group ICD9 table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    /// Note categories to keep, compared after trimming. Empty keeps all.
    pub categories: Vec<String>,
    pub min_words: usize,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            categories: vec!["Physician".to_string()],
            min_words: DEFAULT_MIN_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of admissions held out for evaluation.
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    pub top_k: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig { top_k: DEFAULT_TOP_K }
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// One pipeline run. The nested `seed` keys of `skipgram` and `train` are
/// overwritten by seeds derived from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub paths: Paths,
    #[serde(default)]
    pub cohort: CohortConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub skipgram: SkipgramConfig,
    #[serde(default)]
    pub tfidf: TfidfConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    /// Defaults for everything except the input paths.
    pub fn new(mode: Mode, seed: u64, paths: Paths) -> Self {
        RunConfig {
            mode,
            seed,
            threshold: default_threshold(),
            paths,
            cohort: CohortConfig::default(),
            split: SplitConfig::default(),
            skipgram: SkipgramConfig::default(),
            tfidf: TfidfConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::usage(Stage::Config, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::usage(Stage::Config, format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::usage(Stage::Config, m));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        let v = self.split.validation_fraction;
        if !(v > 0.0 && v < 1.0) {
            return bad(format!("split.validation_fraction must lie in (0, 1), got {v}"));
        }
        if self.tfidf.top_k == 0 {
            return bad("tfidf.top_k must be at least 1".into());
        }
        if self.train.epochs == 0 {
            return bad("train.epochs must be at least 1".into());
        }
        if self.mode.needs_pretrained() && self.paths.pretrained.is_none() {
            return bad(format!("mode {} needs paths.pretrained", self.mode));
        }
        self.train
            .validate()
            .map_err(|e| PipelineError::usage(Stage::Config, e.to_string()))
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.notes);
        fix(&mut self.diagnoses);
        fix(&mut self.output_dir);
        for p in [&mut self.pretrained, &mut self.stoplist, &mut self.grouping]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Makes every path absolute against the working directory, so a copy
    /// of the config stays valid wherever it is written.
    pub(crate) fn absolutize(&mut self) -> std::io::Result<()> {
        let base = std::env::current_dir()?;
        self.resolve_against(&base);
        Ok(())
    }
}
