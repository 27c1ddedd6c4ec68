//! TF-IDF bag-of-n-grams baseline features.
//!
//! Candidates are all 1- to 3-grams of the preprocessed tokens. Features are
//! ranked by their summed tf-idf mass over the training documents and the
//! top `k` kept.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::TokenSequence;

pub const DEFAULT_TOP_K: usize = 1000;
pub const MAX_NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum TfidfError {
    #[error("cannot fit tf-idf on an empty corpus")]
    EmptyCorpus,
    #[error("no n-gram candidates in the corpus")]
    NoCandidates,
    #[error("tf-idf model file, line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("tf-idf model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Every contiguous n-gram (`1 <= n <= max_n`) joined by single spaces.
pub fn ngrams(tokens: &TokenSequence, max_n: usize) -> Vec<String> {
    let t = tokens.tokens();
    let mut out = Vec::new();
    for n in 1..=max_n {
        out.extend(t.windows(n).map(|w| w.join(" ")));
    }
    out
}

fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    features: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

/// Sparse document vector, indices ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut d = vec![0.0; width];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            d[i] = v;
        }
        d
    }
}

pub fn fit_tfidf(corpus: &[TokenSequence], top_k: usize) -> Result<TfidfModel, TfidfError> {
    if corpus.is_empty() {
        return Err(TfidfError::EmptyCorpus);
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut tf_total: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        let grams = ngrams(doc, MAX_NGRAM);
        let distinct: HashSet<&String> = grams.iter().collect();
        for g in distinct {
            *df.entry(g.clone()).or_default() += 1;
        }
        for g in grams {
            *tf_total.entry(g).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(TfidfError::NoCandidates);
    }
    let n = corpus.len();
    // Summed tf-idf over documents = total count * idf, since idf is per term.
    let mut scored: Vec<(String, f64, f64)> = df
        .into_iter()
        .map(|(g, d)| {
            let idf = smooth_idf(n, d);
            let mass = tf_total[&g] as f64 * idf;
            (g, mass, idf)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(TfidfModel::from_parts(
        scored.iter().map(|s| s.0.clone()).collect(),
        scored.iter().map(|s| s.2).collect(),
        n,
    ))
}

impl TfidfModel {
    fn from_parts(features: Vec<String>, idf: Vec<f64>, n_docs: usize) -> Self {
        let index = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        TfidfModel {
            features,
            idf,
            n_docs,
            index,
        }
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Raw term counts times idf, L2-normalized; all-zero documents stay zero.
    pub fn transform(&self, tokens: &TokenSequence) -> SparseVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for g in ngrams(tokens, MAX_NGRAM) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut v = SparseVector {
            indices: counts.keys().copied().collect(),
            values: counts.iter().map(|(&i, &c)| c as f64 * self.idf[i]).collect(),
        };
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Dense `N x features` matrix of [`TfidfModel::transform`] rows.
    pub fn transform_corpus(&self, corpus: &[TokenSequence]) -> Array2<f64> {
        let mut m = Array2::zeros((corpus.len(), self.len()));
        for (mut row, doc) in m.outer_iter_mut().zip(corpus) {
            let v = self.transform(doc);
            for (&i, &x) in v.indices.iter().zip(&v.values) {
                row[i] = x;
            }
        }
        m
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (f, idf) in self.features.iter().zip(&self.idf) {
            h.update(f.as_bytes());
            h.update([0]);
            h.update(idf.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Tab-separated `feature<TAB>idf` rows after a `# documents <N>` header.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# documents {}", self.n_docs)?;
        for (f, idf) in self.features.iter().zip(&self.idf) {
            writeln!(out, "{f}\t{idf}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self, TfidfError> {
        let malformed = |line: usize, message: String| TfidfError::Malformed { line, message };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| malformed(1, "missing header".into()))?
            .map_err(|e| malformed(1, e.to_string()))?;
        let n_docs = header
            .strip_prefix("# documents ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| malformed(1, format!("bad header {header:?}")))?;
        let (mut features, mut idf) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
            let (f, v) = line
                .split_once('\t')
                .ok_or_else(|| malformed(line_no, "expected feature<TAB>idf".into()))?;
            features.push(f.to_string());
            idf.push(v.parse().map_err(|_| malformed(line_no, format!("bad idf {v:?}")))?);
        }
        Ok(Self::from_parts(features, idf, n_docs))
    }

    pub fn save(&self, path: &Path) -> Result<(), TfidfError> {
        let io = |source| TfidfError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut buf = Vec::new();
        self.write_text(&mut buf).map_err(io)?;
        std::fs::write(path, buf).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TfidfError> {
        let file = std::fs::File::open(path).map_err(|source| TfidfError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_text(std::io::BufReader::new(file))
    }
}
