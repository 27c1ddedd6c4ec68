use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig, CONFIG_FILE};
use super::{file_sha256, stage_seed, ErrorKind, PipelineError, Stage};
use crate::baseline::{fit_tfidf, TfidfModel};
use crate::embed::{load_pretrained, load_table, train_skipgram, vectorize_corpus, EmbeddingSource, EmbeddingTable};
use crate::eval::{evaluate, EvalReport};
use crate::icd9::{label_distribution, GroupingTable, GROUP_COUNT};
use crate::ingest::{build_cohort, load_diagnoses, load_notes, FilterCounts, LabeledCorpus};
use crate::net::{
    predict_scores, train_model, Architecture, ChannelScaler, Checkpoint, Dataset, EpochRecord, Inputs, ModelParams,
    Scaler,
};
use crate::text::{preprocess_note, StopList, TokenSequence};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const WORD2VEC_FILE: &str = "word2vec.txt";
pub const TFIDF_FILE: &str = "tfidf.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const RUN_LOG: &str = "run_log.json";
pub const LABELS_FILE: &str = "label_distribution.csv";

/// Filtered, labeled corpus with one token sequence per note.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub corpus: LabeledCorpus,
    pub tokens: Vec<TokenSequence>,
    pub grouping: GroupingTable,
}

impl Cohort {
    /// `rows x 20` target matrix.
    pub fn targets(&self, rows: &[usize]) -> Array2<f64> {
        let entries = self.corpus.entries();
        let mut y = Array2::zeros((rows.len(), GROUP_COUNT));
        for (i, &r) in rows.iter().enumerate() {
            for (j, &b) in entries[r].labels.bits().iter().enumerate() {
                y[[i, j]] = f64::from(b);
            }
        }
        y
    }

    fn select_tokens(&self, rows: &[usize]) -> Vec<TokenSequence> {
        rows.iter().map(|&r| self.tokens[r].clone()).collect()
    }
}

pub fn prepare_cohort(cfg: &RunConfig) -> Result<Cohort, PipelineError> {
    let grouping = match &cfg.paths.grouping {
        Some(p) => GroupingTable::load(p).map_err(|e| PipelineError::data(Stage::Labels, e))?,
        None => GroupingTable::standard(),
    };
    let categories: BTreeSet<String> = cfg.cohort.categories.iter().map(|c| c.trim().to_string()).collect();
    let notes = load_notes(&cfg.paths.notes, &categories).map_err(|e| PipelineError::data(Stage::Ingest, e))?;
    let diagnoses = load_diagnoses(&cfg.paths.diagnoses).map_err(|e| PipelineError::data(Stage::Ingest, e))?;
    let corpus = build_cohort(notes, &diagnoses.records, &grouping, cfg.cohort.min_words)
        .map_err(|e| PipelineError::data(Stage::Ingest, e))?
        .with_source(cfg.paths.notes.display().to_string());
    let stoplist = load_stoplist(cfg)?;
    let tokens = corpus.notes().map(|n| preprocess_note(&n.text, &stoplist)).collect();
    Ok(Cohort {
        corpus,
        tokens,
        grouping,
    })
}

fn load_stoplist(cfg: &RunConfig) -> Result<StopList, PipelineError> {
    match &cfg.paths.stoplist {
        Some(p) => StopList::load(p).map_err(|e| PipelineError::data(Stage::Text, e)),
        None => Ok(StopList::english()),
    }
}

/// Row indices of the two halves of an admission-grouped split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub train_admissions: usize,
    pub validation_admissions: usize,
}

/// Shuffles distinct admissions and holds out `round(fraction * admissions)`
/// of them (at least one on each side). Notes follow their admission.
pub fn split_admissions(corpus: &LabeledCorpus, fraction: f64, seed: u64) -> Result<Split, PipelineError> {
    let admissions: BTreeSet<(u64, u64)> = corpus.notes().map(|n| n.admission()).collect();
    if admissions.len() < 2 {
        return Err(PipelineError::data(
            Stage::Ingest,
            format!("need at least two admissions to split, found {}", admissions.len()),
        ));
    }
    let mut order: Vec<(u64, u64)> = admissions.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = ((fraction * order.len() as f64).round() as usize).clamp(1, order.len() - 1);
    let held_out: BTreeSet<(u64, u64)> = order[..held].iter().copied().collect();
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (i, note) in corpus.notes().enumerate() {
        if held_out.contains(&note.admission()) {
            validation.push(i);
        } else {
            train.push(i);
        }
    }
    Ok(Split {
        seed,
        train,
        validation,
        train_admissions: order.len() - held,
        validation_admissions: held,
    })
}

/// Turns token sequences into the one or two raw input channels of a mode.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Embeddings {
        first: EmbeddingTable,
        second: Option<EmbeddingTable>,
    },
    Tfidf(TfidfModel),
}

impl Featurizer {
    pub fn input_width(&self) -> usize {
        match self {
            Featurizer::Embeddings { first, .. } => first.dim(),
            Featurizer::Tfidf(m) => m.len(),
        }
    }

    pub fn channel_count(&self) -> usize {
        match self {
            Featurizer::Embeddings { second: Some(_), .. } => 2,
            _ => 1,
        }
    }

    /// Raw channel matrices plus the mean OOV fraction of each embedding channel.
    pub fn channels(&self, docs: &[TokenSequence]) -> Result<(Vec<Array2<f64>>, Vec<f64>), PipelineError> {
        match self {
            Featurizer::Embeddings { first, second } => {
                let mut mats = Vec::new();
                let mut oov = Vec::new();
                for table in std::iter::once(first).chain(second) {
                    let fm = vectorize_corpus(docs, table).map_err(|e| PipelineError::data(Stage::Features, e))?;
                    oov.push(fm.mean_oov());
                    mats.push(fm.matrix);
                }
                Ok((mats, oov))
            }
            Featurizer::Tfidf(m) => Ok((vec![m.transform_corpus(docs)], Vec::new())),
        }
    }

    /// Scaled model inputs in the network's precision.
    fn inputs(&self, scaler: &Scaler, docs: &[TokenSequence]) -> Result<Vec<Array2<f32>>, PipelineError> {
        let (raw, _) = self.channels(docs)?;
        scale_channels(scaler, &raw)
    }
}

fn scale_channels(scaler: &Scaler, raw: &[Array2<f64>]) -> Result<Vec<Array2<f32>>, PipelineError> {
    if scaler.channels.len() != raw.len() {
        return Err(PipelineError::data(
            Stage::Scale,
            format!(
                "scaler has {} channels, features have {}",
                scaler.channels.len(),
                raw.len()
            ),
        ));
    }
    scaler
        .channels
        .iter()
        .zip(raw)
        .map(|(s, m)| {
            s.transform(m.view())
                .map(|t| t.mapv(|v| v as f32))
                .map_err(|e| PipelineError::from((Stage::Scale, e)))
        })
        .collect()
}

fn score(params: &ModelParams<f32>, inputs: &[Array2<f32>]) -> Result<Array2<f64>, PipelineError> {
    let x = Inputs {
        primary: inputs[0].view(),
        secondary: inputs.get(1).map(|m| m.view()),
    };
    let probs = predict_scores(params, x).map_err(|e| PipelineError::from((Stage::Evaluate, e)))?;
    Ok(probs.mapv(f64::from))
}

/// Headline output of a run; `compare` reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub cohort_fingerprint: String,
    pub split_seed: u64,
    pub validation_fraction: f64,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub metrics: EvalReport,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        format!(
            "mode: {}\ncohort: {}\nsplit seed: {}\ntrain rows: {}\nvalidation rows: {}\n\n{}",
            self.mode,
            self.cohort_fingerprint,
            self.split_seed,
            self.train_rows,
            self.validation_rows,
            self.metrics.to_table()
        )
    }
}

/// Intermediate counts and hashes; enough to re-run and audit a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub mode: Mode,
    /// SHA-256 of every input file by role.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub filters: FilterCounts,
    pub unique_codes: usize,
    pub train_admissions: usize,
    pub validation_admissions: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub word2vec_vocabulary: Option<usize>,
    pub skipgram_epoch_losses: Vec<f64>,
    pub pretrained_vocabulary: Option<usize>,
    pub tfidf_features: Option<usize>,
    /// Mean OOV fraction over training notes, per embedding channel.
    pub train_oov: BTreeMap<String, f64>,
    pub input_width: usize,
    pub parameter_count: usize,
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
    pub log: RunLog,
    pub checkpoint: Checkpoint,
}

fn channel_names(mode: Mode) -> Vec<&'static str> {
    match mode {
        Mode::Hybrid => vec!["word2vec", "pretrained"],
        Mode::Word2vecOnly => vec!["word2vec"],
        Mode::PretrainedOnly => vec!["pretrained"],
        Mode::Tfidf => vec![],
    }
}

fn output_error(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::data(Stage::Output, e)
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|e| output_error(format!("{}: {e}", path.display())))
}

fn hash_input(inputs: &mut BTreeMap<String, String>, role: &str, path: &Path) -> Result<(), PipelineError> {
    let h = file_sha256(path).map_err(|e| PipelineError::data(Stage::Ingest, format!("{}: {e}", path.display())))?;
    inputs.insert(role.to_string(), h);
    Ok(())
}

/// Runs every stage and writes the run directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let mode = cfg.mode;
    let seeds: BTreeMap<String, u64> = ["split", "skipgram", "train"]
        .iter()
        .map(|l| (l.to_string(), stage_seed(cfg.seed, l)))
        .collect();

    let pretrained = match (&cfg.paths.pretrained, mode.needs_pretrained()) {
        (Some(p), true) => {
            Some(load_pretrained(p, cfg.skipgram.dimension).map_err(|e| PipelineError::data(Stage::Embed, e))?)
        }
        _ => None,
    };

    let cohort = prepare_cohort(cfg)?;
    let mut inputs = BTreeMap::new();
    hash_input(&mut inputs, "notes", &cfg.paths.notes)?;
    hash_input(&mut inputs, "diagnoses", &cfg.paths.diagnoses)?;
    for (role, path) in [
        (
            "pretrained",
            cfg.paths.pretrained.as_ref().filter(|_| mode.needs_pretrained()),
        ),
        ("stoplist", cfg.paths.stoplist.as_ref()),
        ("grouping", cfg.paths.grouping.as_ref()),
    ] {
        if let Some(p) = path {
            hash_input(&mut inputs, role, p)?;
        }
    }

    let split = split_admissions(&cohort.corpus, cfg.split.validation_fraction, seeds["split"])?;
    let train_docs = cohort.select_tokens(&split.train);
    let validation_docs = cohort.select_tokens(&split.validation);
    log::info!(
        "split: {} train / {} validation notes ({} / {} admissions)",
        split.train.len(),
        split.validation.len(),
        split.train_admissions,
        split.validation_admissions
    );

    let mut skipgram_losses = Vec::new();
    let word2vec = if mode.needs_word2vec() {
        let sg = crate::embed::SkipgramConfig {
            seed: seeds["skipgram"],
            ..cfg.skipgram.clone()
        };
        let model = train_skipgram(train_docs.iter(), &sg).map_err(|e| {
            let kind = match e {
                crate::embed::EmbedError::InvalidConfig(_) => ErrorKind::Usage,
                _ => ErrorKind::Data,
            };
            PipelineError::new(Stage::Embed, kind, e.to_string())
        })?;
        skipgram_losses = model.epoch_losses;
        Some(model.table)
    } else {
        None
    };
    let word2vec_vocabulary = word2vec.as_ref().map(|t| t.len());
    let pretrained_vocabulary = pretrained.as_ref().map(|t| t.len());

    let featurizer = match mode {
        Mode::Hybrid => Featurizer::Embeddings {
            first: word2vec.expect("trained"),
            second: pretrained,
        },
        Mode::Word2vecOnly => Featurizer::Embeddings {
            first: word2vec.expect("trained"),
            second: None,
        },
        Mode::PretrainedOnly => Featurizer::Embeddings {
            first: pretrained.expect("loaded"),
            second: None,
        },
        Mode::Tfidf => Featurizer::Tfidf(
            fit_tfidf(&train_docs, cfg.tfidf.top_k).map_err(|e| PipelineError::data(Stage::Features, e))?,
        ),
    };

    let (train_raw, train_oov) = featurizer.channels(&train_docs)?;
    let scaler = Scaler {
        channels: train_raw
            .iter()
            .map(|m| ChannelScaler::fit(m.view()))
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::from((Stage::Scale, e)))?,
    };
    let mut train_x = scale_channels(&scaler, &train_raw)?.into_iter();
    let train_y = cohort.targets(&split.train).mapv(|v| v as f32);
    let train_set = Dataset::new(train_x.next().expect("one channel"), train_x.next(), train_y)
        .map_err(|e| PipelineError::from((Stage::Train, e)))?;
    let mut val_x = featurizer.inputs(&scaler, &validation_docs)?;
    let val_y = cohort.targets(&split.validation);
    let val_second = (val_x.len() > 1).then(|| val_x.remove(1));
    let val_set = Dataset::new(val_x.remove(0), val_second, val_y.mapv(|v| v as f32))
        .map_err(|e| PipelineError::from((Stage::Train, e)))?;

    let width = featurizer.input_width();
    let arch = if featurizer.channel_count() == 2 {
        Architecture::hybrid(width)
    } else {
        Architecture::single(width)
    };
    let train_cfg = crate::net::TrainConfig {
        seed: seeds["train"],
        ..cfg.train.clone()
    };
    let outcome = train_model(arch, &train_set, Some(&val_set), &train_cfg)
        .map_err(|e| PipelineError::from((Stage::Train, e)))?;

    let val_inputs: Vec<Array2<f32>> = std::iter::once(val_set.primary.clone())
        .chain(val_set.secondary.clone())
        .collect();
    let scores = score(&outcome.params, &val_inputs)?;
    let metrics =
        evaluate(scores.view(), val_y.view(), cfg.threshold).map_err(|e| PipelineError::data(Stage::Evaluate, e))?;

    let mut checkpoint = Checkpoint::new(mode.as_str(), &outcome.params, train_cfg);
    checkpoint.scaler = Some(scaler);
    match &featurizer {
        Featurizer::Embeddings { first, second } => {
            let names = channel_names(mode);
            for (name, table) in names.iter().zip(std::iter::once(first).chain(second)) {
                checkpoint
                    .embedding_hashes
                    .insert(name.to_string(), table.content_hash());
            }
        }
        Featurizer::Tfidf(m) => checkpoint.feature_hash = Some(m.content_hash()),
    }

    let report = RunReport {
        mode,
        cohort_fingerprint: cohort.corpus.fingerprint(),
        split_seed: split.seed,
        validation_fraction: cfg.split.validation_fraction,
        train_rows: split.train.len(),
        validation_rows: split.validation.len(),
        metrics,
    };
    let provenance = cohort.corpus.provenance();
    let log = RunLog {
        mode,
        inputs,
        seeds,
        filters: provenance.filters,
        unique_codes: provenance.unique_codes,
        train_admissions: split.train_admissions,
        validation_admissions: split.validation_admissions,
        train_rows: split.train.len(),
        validation_rows: split.validation.len(),
        word2vec_vocabulary,
        skipgram_epoch_losses: skipgram_losses,
        pretrained_vocabulary,
        tfidf_features: match &featurizer {
            Featurizer::Tfidf(m) => Some(m.len()),
            _ => None,
        },
        train_oov: channel_names(mode)
            .iter()
            .map(|s| s.to_string())
            .zip(train_oov)
            .collect(),
        input_width: width,
        parameter_count: outcome.params.parameter_count(),
        initial_train_loss: outcome.initial_train_loss,
        history: outcome.history,
    };

    let dir = cfg.paths.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| output_error(format!("{}: {e}", dir.display())))?;
    let mut stored = cfg.clone();
    stored.paths.absolutize().map_err(output_error)?;
    write_file(&dir.join(CONFIG_FILE), &stored.to_toml_string())?;
    checkpoint.save(&dir.join(CHECKPOINT_FILE)).map_err(output_error)?;
    match &featurizer {
        Featurizer::Embeddings { first, .. } if mode.needs_word2vec() => {
            first.save_text(&dir.join(WORD2VEC_FILE)).map_err(output_error)?
        }
        Featurizer::Tfidf(m) => m.save(&dir.join(TFIDF_FILE)).map_err(output_error)?,
        _ => {}
    }
    let distribution = label_distribution(cohort.corpus.labels(), &cohort.grouping)
        .map_err(|e| PipelineError::data(Stage::Labels, e))?;
    write_file(&dir.join(LABELS_FILE), &distribution.to_csv())?;
    write_file(&dir.join(REPORT_JSON), &to_json(&report))?;
    write_file(&dir.join(REPORT_TEXT), &report.to_text())?;
    write_file(&dir.join(RUN_LOG), &to_json(&log))?;
    log::info!("{} run written to {}", mode, dir.display());

    Ok(RunArtifacts {
        dir,
        report,
        log,
        checkpoint,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// A finished run reloaded from its directory, ready to score new notes.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: RunConfig,
    pub checkpoint: Checkpoint,
    pub params: ModelParams<f32>,
    pub featurizer: Featurizer,
    stoplist: StopList,
}

impl TrainedModel {
    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
        let checkpoint =
            Checkpoint::load(&run_dir.join(CHECKPOINT_FILE)).map_err(|e| PipelineError::data(Stage::Config, e))?;
        let params = checkpoint
            .params::<f32>()
            .map_err(|e| PipelineError::data(Stage::Config, e))?;
        let mode = config.mode;
        if checkpoint.mode != mode.as_str() {
            return Err(PipelineError::data(
                Stage::Config,
                format!("checkpoint mode {} does not match config mode {mode}", checkpoint.mode),
            ));
        }
        let dim = config.skipgram.dimension;
        let embed_err = |e: crate::embed::EmbedError| PipelineError::data(Stage::Embed, e);
        let word2vec = if mode.needs_word2vec() {
            Some(load_table(&run_dir.join(WORD2VEC_FILE), dim, EmbeddingSource::Trained).map_err(embed_err)?)
        } else {
            None
        };
        let pretrained = match (&config.paths.pretrained, mode.needs_pretrained()) {
            (Some(p), true) => Some(load_pretrained(p, dim).map_err(embed_err)?),
            _ => None,
        };
        let featurizer = match mode {
            Mode::Hybrid => Featurizer::Embeddings {
                first: word2vec.expect("loaded"),
                second: pretrained,
            },
            Mode::Word2vecOnly => Featurizer::Embeddings {
                first: word2vec.expect("loaded"),
                second: None,
            },
            Mode::PretrainedOnly => Featurizer::Embeddings {
                first: pretrained.expect("loaded"),
                second: None,
            },
            Mode::Tfidf => Featurizer::Tfidf(
                TfidfModel::load(&run_dir.join(TFIDF_FILE)).map_err(|e| PipelineError::data(Stage::Features, e))?,
            ),
        };
        match &featurizer {
            Featurizer::Embeddings { first, second } => {
                for (name, table) in channel_names(mode)
                    .into_iter()
                    .zip(std::iter::once(first).chain(second))
                {
                    let expected = checkpoint.embedding_hashes.get(name);
                    if expected != Some(&table.content_hash()) {
                        return Err(PipelineError::data(
                            Stage::Embed,
                            format!("{name} embedding table does not match the one the model was trained with"),
                        ));
                    }
                }
            }
            Featurizer::Tfidf(m) => {
                if checkpoint.feature_hash.as_deref() != Some(m.content_hash().as_str()) {
                    return Err(PipelineError::data(
                        Stage::Features,
                        "tf-idf vocabulary does not match the one the model was trained with",
                    ));
                }
            }
        }
        if featurizer.input_width() != params.arch.input_width {
            return Err(PipelineError::data(
                Stage::Features,
                format!(
                    "features are {} wide, model expects {}",
                    featurizer.input_width(),
                    params.arch.input_width
                ),
            ));
        }
        let stoplist = load_stoplist(&config)?;
        Ok(TrainedModel {
            config,
            checkpoint,
            params,
            featurizer,
            stoplist,
        })
    }

    /// `docs x 20` probabilities.
    pub fn score_tokens(&self, docs: &[TokenSequence]) -> Result<Array2<f64>, PipelineError> {
        if docs.is_empty() {
            return Ok(Array2::zeros((0, self.params.arch.outputs)));
        }
        let scaler = self
            .checkpoint
            .scaler
            .as_ref()
            .ok_or_else(|| PipelineError::data(Stage::Scale, "checkpoint has no scaler"))?;
        let inputs = self.featurizer.inputs(scaler, docs)?;
        score(&self.params, &inputs)
    }

    pub fn score_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Array2<f64>, PipelineError> {
        let docs: Vec<TokenSequence> = texts
            .iter()
            .map(|t| preprocess_note(t.as_ref(), &self.stoplist))
            .collect();
        self.score_tokens(&docs)
    }
}

/// Rebuilds the cohort and split of a finished run and re-scores the held-out notes.
pub fn evaluate_run(run_dir: &Path) -> Result<RunReport, PipelineError> {
    let model = TrainedModel::load(run_dir)?;
    let cfg = &model.config;
    let cohort = prepare_cohort(cfg)?;
    let split = split_admissions(
        &cohort.corpus,
        cfg.split.validation_fraction,
        stage_seed(cfg.seed, "split"),
    )?;
    let scores = model.score_tokens(&cohort.select_tokens(&split.validation))?;
    let targets = cohort.targets(&split.validation);
    let metrics =
        evaluate(scores.view(), targets.view(), cfg.threshold).map_err(|e| PipelineError::data(Stage::Evaluate, e))?;
    Ok(RunReport {
        mode: cfg.mode,
        cohort_fingerprint: cohort.corpus.fingerprint(),
        split_seed: split.seed,
        validation_fraction: cfg.split.validation_fraction,
        train_rows: split.train.len(),
        validation_rows: split.validation.len(),
        metrics,
    })
}
