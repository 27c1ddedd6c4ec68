//! Word embedding tables, skipgram training with negative sampling, and
//! averaged document vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{build_vocabulary, TextError, TokenSequence};

/// Embedding width used by both feature channels.
pub const EMBEDDING_DIM: usize = 200;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected dimension {expected}, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate token {token:?}")]
    Duplicate { line: usize, token: String },
    #[error("skipgram vocabulary: {0}")]
    Vocabulary(#[from] TextError),
    #[error("invalid skipgram configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot vectorize an empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Pretrained,
    Trained,
}

/// Token to fixed-width vector map, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    source: EmbeddingSource,
    words: Vec<String>,
    vectors: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source: EmbeddingSource) -> Self {
        EmbeddingTable {
            dim,
            source,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a token; returns `false` (and leaves the table unchanged) if it is already present.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> bool {
        assert_eq!(vector.len(), self.dim, "vector width must match table dimension");
        if self.index.contains_key(token) {
            return false;
        }
        self.index.insert(token.to_string(), self.words.len());
        self.words.push(token.to_string());
        self.vectors.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Drops the listed tokens.
    pub fn without<'a, I: IntoIterator<Item = &'a str>>(&self, tokens: I) -> Self {
        let drop: std::collections::HashSet<&str> = tokens.into_iter().collect();
        let mut out = EmbeddingTable::new(self.dim, self.source);
        for (i, w) in self.words.iter().enumerate() {
            if !drop.contains(w.as_str()) {
                out.insert(w, self.row(i));
            }
        }
        out
    }

    /// SHA-256 over dimension, tokens and vector bits in table order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (i, w) in self.words.iter().enumerate() {
            h.update((w.len() as u64).to_le_bytes());
            h.update(w.as_bytes());
            for v in self.row(i) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// word2vec text format: header `V D`, then `token v1 .. vD` per line.
    /// Values use shortest round-trip formatting so reloading is exact.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, w) in self.words.iter().enumerate() {
            out.write_all(w.as_bytes())?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_text(&self, path: &Path) -> Result<(), EmbedError> {
        let io_err = |source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        self.write_text(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn read_text<R: BufRead>(reader: R, expected_dim: usize, source: EmbeddingSource) -> Result<Self, EmbedError> {
        let mut lines = reader.lines().enumerate();
        let io = |e: std::io::Error, line: usize| EmbedError::Malformed {
            line,
            message: e.to_string(),
        };
        let (_, header) = lines.next().ok_or(EmbedError::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.map_err(|e| io(e, 1))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_header = |s: &str| {
            s.parse::<usize>().map_err(|_| EmbedError::Malformed {
                line: 1,
                message: format!("header must be \"<count> <dimension>\", found {header:?}"),
            })
        };
        if fields.len() != 2 {
            return Err(EmbedError::Malformed {
                line: 1,
                message: format!("header must be \"<count> <dimension>\", found {header:?}"),
            });
        }
        let count = parse_header(fields[0])?;
        let dim = parse_header(fields[1])?;
        if dim != expected_dim {
            return Err(EmbedError::DimensionMismatch {
                line: 1,
                expected: expected_dim,
                found: dim,
            });
        }
        let mut table = EmbeddingTable::new(dim, source);
        let mut buf = Vec::with_capacity(dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| io(e, line_no))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line");
            buf.clear();
            for p in parts {
                buf.push(p.parse::<f32>().map_err(|_| EmbedError::Malformed {
                    line: line_no,
                    message: format!("bad number {p:?}"),
                })?);
            }
            if buf.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    found: buf.len(),
                });
            }
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::Malformed {
                    line: line_no,
                    message: "non-finite value".into(),
                });
            }
            if !table.insert(token, &buf) {
                return Err(EmbedError::Duplicate {
                    line: line_no,
                    token: token.to_string(),
                });
            }
        }
        if table.len() != count {
            return Err(EmbedError::Malformed {
                line: 1,
                message: format!("header announces {count} vectors, file holds {}", table.len()),
            });
        }
        Ok(table)
    }
}

/// Loads an externally trained table in word2vec text format.
pub fn load_pretrained(path: &Path, expected_dim: usize) -> Result<EmbeddingTable, EmbedError> {
    load_table(path, expected_dim, EmbeddingSource::Pretrained)
}

pub fn load_table(path: &Path, expected_dim: usize, source: EmbeddingSource) -> Result<EmbeddingTable, EmbedError> {
    let file = File::open(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    EmbeddingTable::read_text(BufReader::new(file), expected_dim, source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipgramConfig {
    pub dimension: usize,
    pub initial_learning_rate: f64,
    pub min_learning_rate: f64,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub subsample_threshold: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dimension: EMBEDDING_DIM,
            initial_learning_rate: 0.025,
            min_learning_rate: 1e-4,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            subsample_threshold: 1e-3,
            seed: 1,
        }
    }
}

/// Trained input vectors plus the mean negative-sampling loss of each epoch.
#[derive(Debug, Clone)]
pub struct SkipgramModel {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
struct NoiseSampler {
    cumulative: Vec<f64>,
}

impl NoiseSampler {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseSampler { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Skipgram with negative sampling, single-threaded and deterministic for a
/// fixed seed. The learning rate decays linearly with the number of center
/// tokens processed, down to `min_learning_rate`.
pub fn train_skipgram<'a, I>(corpus: I, config: &SkipgramConfig) -> Result<SkipgramModel, EmbedError>
where
    I: IntoIterator<Item = &'a TokenSequence>,
    I::IntoIter: Clone,
{
    if config.dimension == 0 || config.negatives == 0 || config.window == 0 || config.epochs == 0 {
        return Err(EmbedError::InvalidConfig(
            "dimension, negatives, window and epochs must be positive".into(),
        ));
    }
    let corpus = corpus.into_iter();
    let vocab = build_vocabulary(corpus.clone(), config.min_count)?;
    let sentences: Vec<Vec<usize>> = corpus
        .map(|s| s.iter().filter_map(|t| vocab.index_of(t)).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let total_words = vocab.total_count() as f64;
    let dim = config.dimension;
    let v = vocab.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f32> = (0..v * dim).map(|_| (rng.random::<f32>() - 0.5) / dim as f32).collect();
    let mut output = vec![0f32; v * dim];
    let noise = NoiseSampler::new(vocab.counts());

    let keep_probability: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| {
            let t = config.subsample_threshold;
            if t <= 0.0 {
                return 1.0;
            }
            let f = c as f64 / total_words;
            ((f / t).sqrt() + 1.0) * t / f
        })
        .collect();

    let schedule_total = config.epochs as f64 * total_words;
    let lr0 = config.initial_learning_rate;
    let mut processed = 0f64;
    let mut grad = vec![0f32; dim];
    let mut kept = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let (mut loss_sum, mut pairs) = (0f64, 0u64);
        for sentence in &sentences {
            processed += sentence.len() as f64;
            let lr = (lr0 * (1.0 - processed / schedule_total)).max(config.min_learning_rate) as f32;
            kept.clear();
            kept.extend(
                sentence
                    .iter()
                    .copied()
                    .filter(|&w| keep_probability[w] >= 1.0 || rng.random::<f64>() < keep_probability[w]),
            );
            for pos in 0..kept.len() {
                let center = kept[pos];
                let reach = config.window - rng.random_range(0..config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = kept[ctx_pos];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let h = &input[center * dim..(center + 1) * dim];
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0f32)
                        } else {
                            let n = noise.sample(&mut rng);
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let out = &mut output[target * dim..(target + 1) * dim];
                        let score: f32 = h.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        let prob_of_label = if label == 1.0 { p } else { 1.0 - p };
                        loss_sum -= (prob_of_label.max(1e-7) as f64).ln();
                        let step = (label - p) * lr;
                        for j in 0..dim {
                            grad[j] += step * out[j];
                            out[j] += step * h[j];
                        }
                    }
                    let h = &mut input[center * dim..(center + 1) * dim];
                    h.iter_mut().zip(&grad).for_each(|(a, g)| *a += g);
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    let mut table = EmbeddingTable::new(dim, EmbeddingSource::Trained);
    for i in 0..v {
        table.insert(vocab.word(i), &input[i * dim..(i + 1) * dim]);
    }
    Ok(SkipgramModel { table, epoch_losses })
}

/// Seeded stand-in for an externally pretrained table. Each topic gets a
/// random direction; its words sit near that direction. Background words get
/// unrelated random vectors.
pub fn standin_pretrained(
    topics: &[Vec<String>],
    background: &[String],
    dim: usize,
    topic_strength: f32,
    seed: u64,
) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect() };
    let mut table = EmbeddingTable::new(dim, EmbeddingSource::Pretrained);
    let directions: Vec<Vec<f32>> = topics.iter().map(|_| uniform(dim)).collect();
    for (topic, direction) in topics.iter().zip(&directions) {
        for w in topic {
            let noise = uniform(dim);
            let v: Vec<f32> = direction
                .iter()
                .zip(&noise)
                .map(|(d, n)| topic_strength * d + n)
                .collect();
            table.insert(w, &v);
        }
    }
    for w in background {
        let v = uniform(dim);
        table.insert(w, &v);
    }
    table
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub values: Vec<f64>,
    /// Fraction of tokens absent from the table (1.0 for an empty document).
    pub oov_fraction: f64,
}

/// Elementwise mean of the vectors of in-table tokens. Sums run in table
/// index order so the result does not depend on token order.
pub fn embed_document(tokens: &TokenSequence, table: &EmbeddingTable) -> DocumentVector {
    let mut present: Vec<usize> = tokens.iter().filter_map(|t| table.index_of(t)).collect();
    let total = tokens.len();
    let mut values = vec![0f64; table.dim()];
    if present.is_empty() {
        return DocumentVector {
            values,
            oov_fraction: 1.0,
        };
    }
    present.sort_unstable();
    for &i in &present {
        for (acc, &v) in values.iter_mut().zip(table.row(i)) {
            *acc += v as f64;
        }
    }
    let n = present.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    DocumentVector {
        values,
        oov_fraction: (total - present.len()) as f64 / total as f64,
    }
}

/// Document vectors for a corpus, one row per document in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: Array2<f64>,
    pub oov_fractions: Vec<f64>,
}

impl FeatureMatrix {
    pub fn mean_oov(&self) -> f64 {
        self.oov_fractions.iter().sum::<f64>() / self.oov_fractions.len().max(1) as f64
    }
}

pub fn vectorize_corpus(corpus: &[TokenSequence], table: &EmbeddingTable) -> Result<FeatureMatrix, EmbedError> {
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let mut matrix = Array2::zeros((corpus.len(), table.dim()));
    let mut oov_fractions = Vec::with_capacity(corpus.len());
    for (mut row, doc) in matrix.outer_iter_mut().zip(corpus) {
        let d = embed_document(doc, table);
        row.assign(&ndarray::ArrayView1::from(&d.values));
        oov_fractions.push(d.oov_fraction);
    }
    Ok(FeatureMatrix { matrix, oov_fractions })
}

/// Cosine similarity of two equal-length vectors (0 if either is zero).
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{preprocess_note, StopList};
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        preprocess_note(&words.join(" "), &StopList::empty())
    }

    fn small_table() -> EmbeddingTable {
        let text = "3 3\napple 1 0 0\npear 0 1 0\nplum 0.5 -2 4\n";
        EmbeddingTable::read_text(text.as_bytes(), 3, EmbeddingSource::Pretrained).unwrap()
    }

    #[test]
    fn parses_word2vec_text() {
        let t = EmbeddingTable::read_text(
            "2 3\napple 1 0 0\npear 0 1 0".as_bytes(),
            3,
            EmbeddingSource::Pretrained,
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("pear").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reports_format_errors_with_lines() {
        let read = |s: &str, d| EmbeddingTable::read_text(s.as_bytes(), d, EmbeddingSource::Pretrained);
        assert!(matches!(
            read("2 100\na 1\n", 200),
            Err(EmbedError::DimensionMismatch {
                line: 1,
                expected: 200,
                found: 100
            })
        ));
        assert!(matches!(
            read("2 2\na 1 2\na 3 4\n", 2),
            Err(EmbedError::Duplicate { line: 3, .. })
        ));
        assert!(matches!(
            read("2 2\na 1 2\nb 3 x\n", 2),
            Err(EmbedError::Malformed { line: 3, .. })
        ));
        assert!(matches!(
            read("1 2\na 1 2 3\n", 2),
            Err(EmbedError::DimensionMismatch { line: 2, .. })
        ));
        assert!(matches!(
            read("3 2\na 1 2\n", 2),
            Err(EmbedError::Malformed { line: 1, .. })
        ));
        assert!(matches!(read("", 2), Err(EmbedError::Malformed { line: 1, .. })));
    }

    #[test]
    fn text_format_round_trips_exactly() {
        let t = standin_pretrained(&[vec!["aa".into(), "bb".into()]], &["cc".into()], 16, 1.5, 3);
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let back = EmbeddingTable::read_text(buf.as_slice(), 16, EmbeddingSource::Pretrained).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.content_hash(), t.content_hash());
    }

    #[test]
    fn document_means() {
        let t = small_table();
        let one = embed_document(&seq(&["plum"]), &t);
        assert_eq!(one.values, vec![0.5, -2.0, 4.0]);
        assert_eq!(one.oov_fraction, 0.0);
        let two = embed_document(&seq(&["apple", "pear"]), &t);
        assert_eq!(two.values, vec![0.5, 0.5, 0.0]);
        let mixed = embed_document(&seq(&["apple", "kiwi"]), &t);
        assert_eq!(mixed.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(mixed.oov_fraction, 0.5);
        let none = embed_document(&seq(&["kiwi", "fig"]), &t);
        assert_eq!(none.values, vec![0.0; 3]);
        assert_eq!(none.oov_fraction, 1.0);
        let empty = embed_document(&seq(&[]), &t);
        assert_eq!(empty.oov_fraction, 1.0);
    }

    #[test]
    fn corpus_matrix_matches_naive_loop() {
        let t = small_table();
        let corpus = vec![
            seq(&["apple"]),
            seq(&["pear", "plum", "kiwi"]),
            seq(&["plum", "plum", "apple"]),
        ];
        let fm = vectorize_corpus(&corpus, &t).unwrap();
        assert_eq!(fm.matrix.dim(), (3, 3));
        for (r, doc) in corpus.iter().enumerate() {
            let mut sum = [0f64; 3];
            let mut n = 0;
            for tok in doc.iter() {
                if let Some(v) = t.get(tok) {
                    n += 1;
                    for j in 0..3 {
                        sum[j] += v[j] as f64;
                    }
                }
            }
            for j in 0..3 {
                assert!((fm.matrix[[r, j]] - sum[j] / n as f64).abs() < 1e-12);
            }
        }
        assert_eq!(fm.matrix.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(vectorize_corpus(&[], &t), Err(EmbedError::EmptyCorpus)));
    }

    // alpha and beta share their contexts; gamma never does.
    fn two_topic_corpus() -> Vec<TokenSequence> {
        let mut corpus = Vec::new();
        for _ in 0..1000 {
            corpus.push(seq(&["alpha", "delta"]));
            corpus.push(seq(&["beta", "delta"]));
            corpus.push(seq(&["gamma", "epsilon"]));
        }
        corpus
    }

    #[test]
    fn skipgram_is_deterministic_and_learns_cooccurrence() {
        let corpus = two_topic_corpus();
        let cfg = SkipgramConfig {
            dimension: 32,
            seed: 9,
            subsample_threshold: 0.0,
            ..SkipgramConfig::default()
        };
        let a = train_skipgram(&corpus, &cfg).unwrap();
        let b = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let t = &a.table;
        let ab = cosine(t.get("alpha").unwrap(), t.get("beta").unwrap());
        let ag = cosine(t.get("alpha").unwrap(), t.get("gamma").unwrap());
        assert!(ab > ag, "cos(alpha,beta)={ab} cos(alpha,gamma)={ag}");
        assert!(a.epoch_losses.last().unwrap() < a.epoch_losses.first().unwrap());
    }

    #[test]
    fn skipgram_applies_min_count() {
        let mut corpus = two_topic_corpus();
        for _ in 0..4 {
            corpus.push(seq(&["rare", "alpha"]));
        }
        let cfg = SkipgramConfig {
            dimension: 8,
            epochs: 1,
            ..SkipgramConfig::default()
        };
        let m = train_skipgram(&corpus, &cfg).unwrap();
        assert!(!m.table.contains("rare"));
        assert!(m.table.contains("alpha"));
        assert_eq!(m.table.dim(), 8);

        let tiny = vec![seq(&["once"])];
        assert!(matches!(train_skipgram(&tiny, &cfg), Err(EmbedError::Vocabulary(_))));
    }

    proptest! {
        #[test]
        fn averaging_ignores_order(idx in proptest::collection::vec(0usize..5, 0..30), seed in 0u64..1000) {
            let t = standin_pretrained(&[], &["aa", "bb", "cc", "dd"].map(String::from), 8, 0.0, seed);
            let words = ["aa", "bb", "cc", "dd", "zz"];
            let tokens: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let mut reversed = tokens.clone();
            reversed.reverse();
            prop_assert_eq!(embed_document(&seq(&tokens), &t), embed_document(&seq(&reversed), &t));
        }

        #[test]
        fn averaging_is_linear(idx in proptest::collection::vec(0usize..4, 1..20), c in -4i32..5) {
            let t = standin_pretrained(&[], &["aa", "bb", "cc", "dd"].map(String::from), 8, 0.0, 5);
            let words = ["aa", "bb", "cc", "dd"];
            let tokens: Vec<&str> = idx.iter().map(|&i| words[i]).collect();
            let base = embed_document(&seq(&tokens), &t);
            let scaled = embed_document(&seq(&tokens), &t.scaled(c as f32));
            for (s, b) in scaled.values.iter().zip(&base.values) {
                prop_assert!((s - c as f64 * b).abs() < 1e-5);
            }
        }
    }
}
