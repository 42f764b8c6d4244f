//! From context vectors to sense decisions: the sense-embedding table,
//! cosine nearest-neighbor classification with most-frequent-sense
//! fallback, and label propagation over a similarity graph.

mod lp;

pub use lp::{
    median_sigma, propagate_labels, LpOutcome, LpProblem, DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

use crate::corpus::{AnnotatedInstance, EncodeOptions, Pos, Vocabulary};
use crate::lstm::{extract_context, LstmError, LstmParams};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WsdError {
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error("instance \"{instance_id}\" has no gold key; sense embeddings need labeled data")]
    MissingGoldKeys { instance_id: String },
    #[error("sense table line {line}: {msg}")]
    BadTableFile { line: usize, msg: String },
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("label propagation: {msg}")]
    InvalidLp { msg: String },
    #[error("need at least 2 vectors to estimate a kernel bandwidth")]
    TooFewVectors,
    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How a prediction was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Nn,
    Mfs,
    Lp,
    Abstain,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Nn => "nn",
            Strategy::Mfs => "mfs",
            Strategy::Lp => "lp",
            Strategy::Abstain => "abstain",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sense decision. `sense_key` is `None` exactly when the strategy is
/// [`Strategy::Abstain`]. `score` is a cosine for nn, a propagation mass in
/// [0,1] for lp, and 0 for mfs/abstain.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub instance_id: String,
    pub sense_key: Option<String>,
    pub score: f64,
    pub strategy: Strategy,
}

impl Prediction {
    pub fn abstain(instance_id: impl Into<String>) -> Prediction {
        Prediction {
            instance_id: instance_id.into(),
            sense_key: None,
            score: 0.0,
            strategy: Strategy::Abstain,
        }
    }
}

/// One sense's centroid and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseEntry {
    pub lemma: String,
    pub pos: Pos,
    pub support: u64,
    pub centroid: Vec<f64>,
}

/// Sense key → mean context vector, with lemma-indexed candidate lists and
/// most-frequent-sense counts derived from supports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SenseEmbeddingTable {
    dim: usize,
    by_key: BTreeMap<String, SenseEntry>,
    by_lemma: BTreeMap<(String, Pos), Vec<String>>,
    /// Sense-frequency counts per (lemma, pos), including count-only merges
    /// that carry no centroid (see [`add_mfs_counts`](Self::add_mfs_counts)).
    mfs_counts: BTreeMap<(String, Pos), BTreeMap<String, u64>>,
}

impl SenseEmbeddingTable {
    /// Averages each sense's context vectors over the labeled instances.
    /// Multi-gold instances contribute their vector to every listed key.
    /// Context extraction runs in parallel; the fold is a fixed-order
    /// single pass, so results are deterministic.
    pub fn build(
        instances: &[AnnotatedInstance],
        params: &LstmParams,
        vocab: &Vocabulary,
        opts: &EncodeOptions,
    ) -> Result<SenseEmbeddingTable, WsdError> {
        for instance in instances {
            if instance.gold_keys.is_empty() {
                return Err(WsdError::MissingGoldKeys {
                    instance_id: instance.instance_id.clone(),
                });
            }
        }
        let contexts: Vec<Result<Vec<f64>, LstmError>> = instances
            .par_iter()
            .map(|i| extract_context(params, i, vocab, opts).map(|c| c.values))
            .collect();

        let mut table = SenseEmbeddingTable {
            dim: params.embed_dim(),
            ..Default::default()
        };
        let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (instance, context) in instances.iter().zip(contexts) {
            let context = context?;
            for key in &instance.gold_keys {
                let entry = table
                    .by_key
                    .entry(key.clone())
                    .or_insert_with(|| SenseEntry {
                        lemma: instance.lemma.clone(),
                        pos: instance.pos,
                        support: 0,
                        centroid: Vec::new(),
                    });
                entry.support += 1;
                let sum = sums
                    .entry(key.clone())
                    .or_insert_with(|| vec![0.0; context.len()]);
                for (s, c) in sum.iter_mut().zip(&context) {
                    *s += c;
                }
            }
        }
        for (key, entry) in &mut table.by_key {
            let sum = &sums[key];
            entry.centroid = sum.iter().map(|s| s / entry.support as f64).collect();
        }
        table.rebuild_indexes();
        Ok(table)
    }

    /// Reassembles a table from explicit entries (used by [`load`](Self::load)
    /// and by tests that bypass the model).
    pub fn from_entries(
        dim: usize,
        entries: impl IntoIterator<Item = (String, SenseEntry)>,
    ) -> Result<SenseEmbeddingTable, WsdError> {
        let mut table = SenseEmbeddingTable {
            dim,
            ..Default::default()
        };
        for (key, entry) in entries {
            if entry.centroid.len() != dim {
                return Err(WsdError::DimensionMismatch {
                    expected: dim,
                    found: entry.centroid.len(),
                });
            }
            table.by_key.insert(key, entry);
        }
        table.rebuild_indexes();
        Ok(table)
    }

    fn rebuild_indexes(&mut self) {
        self.by_lemma.clear();
        let mut counts: BTreeMap<(String, Pos), BTreeMap<String, u64>> = BTreeMap::new();
        for (key, entry) in &self.by_key {
            let slot = (entry.lemma.clone(), entry.pos);
            self.by_lemma
                .entry(slot.clone())
                .or_default()
                .push(key.clone());
            *counts
                .entry(slot)
                .or_default()
                .entry(key.clone())
                .or_insert(0) += entry.support;
        }
        // BTreeMap iteration already yields keys sorted, so candidate lists
        // are lexicographic by construction.
        for (slot, extra) in std::mem::take(&mut self.mfs_counts) {
            let merged = counts.entry(slot).or_default();
            for (key, n) in extra {
                *merged.entry(key).or_insert(0) += n;
            }
        }
        self.mfs_counts = counts;
    }

    /// Folds in sense-frequency counts from data that has labels but no
    /// context vectors (e.g. a key file for a corpus the model never saw).
    /// Affects only the most-frequent-sense fallback, never the candidate
    /// lists or centroids.
    pub fn add_mfs_counts(&mut self, counts: impl IntoIterator<Item = (String, String, Pos, u64)>) {
        for (sense_key, lemma, pos, n) in counts {
            *self
                .mfs_counts
                .entry((lemma, pos))
                .or_default()
                .entry(sense_key)
                .or_insert(0) += n;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn entry(&self, sense_key: &str) -> Option<&SenseEntry> {
        self.by_key.get(sense_key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.by_key.keys().map(|k| k.as_str())
    }

    /// Sense keys attested for this (lemma, pos), sorted lexicographically.
    pub fn candidates(&self, lemma: &str, pos: Pos) -> &[String] {
        self.by_lemma
            .get(&(lemma.to_string(), pos))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// The key with maximal combined support for this (lemma, pos); ties
    /// break lexicographically.
    pub fn mfs(&self, lemma: &str, pos: Pos) -> Option<&str> {
        let counts = self.mfs_counts.get(&(lemma.to_string(), pos))?;
        counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(key, _)| key.as_str())
    }

    /// Header `p=<dim>`, then one sorted line per key:
    /// `key TAB lemma TAB pos TAB support TAB v1,v2,...`. Floats use Rust's
    /// shortest round-trip formatting, so read-after-write is exact.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "p={}", self.dim)?;
        for (key, entry) in &self.by_key {
            let values: Vec<String> = entry.centroid.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{key}\t{}\t{}\t{}\t{}",
                entry.lemma,
                entry.pos,
                entry.support,
                values.join(",")
            )?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<SenseEmbeddingTable, WsdError> {
        let bad = |line: usize, msg: String| WsdError::BadTableFile { line, msg };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty file".to_string()))?;
        let header = header.map_err(|e| bad(1, e.to_string()))?;
        let dim: usize = header
            .strip_prefix("p=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| bad(1, format!("expected `p=<dim>` header, got \"{header}\"")))?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let line = line.map_err(|e| bad(n, e.to_string()))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, lemma, pos, support, values] = fields[..] else {
                return Err(bad(
                    n,
                    format!("expected 5 tab-separated fields, got {}", fields.len()),
                ));
            };
            let support: u64 = support
                .parse()
                .map_err(|_| bad(n, format!("bad support \"{support}\"")))?;
            if support == 0 {
                return Err(bad(n, "support must be ≥ 1".to_string()));
            }
            let centroid = values
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad(n, format!("bad value \"{v}\"")))
                })
                .collect::<Result<Vec<f64>, WsdError>>()?;
            if centroid.len() != dim {
                return Err(bad(
                    n,
                    format!("vector has {} values, expected {dim}", centroid.len()),
                ));
            }
            entries.push((
                key.to_string(),
                SenseEntry {
                    lemma: lemma.to_string(),
                    pos: Pos::parse(pos),
                    support,
                    centroid,
                },
            ));
        }
        SenseEmbeddingTable::from_entries(dim, entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), WsdError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to Vec cannot fail");
        fs::write(path, buf).map_err(|e| WsdError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<SenseEmbeddingTable, WsdError> {
        let bytes = fs::read(path).map_err(|e| WsdError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        SenseEmbeddingTable::read_from(io::Cursor::new(bytes))
    }
}

/// Cosine similarity, with the convention that any zero-norm vector has
/// similarity 0 to everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Nearest sense for a precomputed query vector: argmax of cosine over the
/// (lemma, pos) candidates, ties broken lexicographically by key; ABSTAIN
/// when the lemma/pos has no candidates.
pub fn classify_vector(
    instance_id: &str,
    query: &[f64],
    lemma: &str,
    pos: Pos,
    table: &SenseEmbeddingTable,
) -> Prediction {
    let candidates = table.candidates(lemma, pos);
    let mut best: Option<(&str, f64)> = None;
    for key in candidates {
        let sim = cosine(
            query,
            &table.entry(key).expect("indexed key exists").centroid,
        );
        // Candidates are sorted, so a strict > keeps the lexicographically
        // first key on ties.
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((key, sim));
        }
    }
    match best {
        Some((key, score)) => Prediction {
            instance_id: instance_id.to_string(),
            sense_key: Some(key.to_string()),
            score,
            strategy: Strategy::Nn,
        },
        None => Prediction::abstain(instance_id),
    }
}

/// Extracts the instance's context vector and classifies it by nearest
/// sense embedding.
pub fn classify_nn(
    instance: &AnnotatedInstance,
    params: &LstmParams,
    table: &SenseEmbeddingTable,
    vocab: &Vocabulary,
    opts: &EncodeOptions,
) -> Result<Prediction, WsdError> {
    if table.candidates(&instance.lemma, instance.pos).is_empty() {
        return Ok(Prediction::abstain(&instance.instance_id));
    }
    let context = extract_context(params, instance, vocab, opts)?;
    Ok(classify_vector(
        &instance.instance_id,
        &context.values,
        &instance.lemma,
        instance.pos,
        table,
    ))
}

/// [`classify_nn`], falling back to the most frequent sense when the lemma
/// has no candidates but frequency counts exist.
pub fn classify_with_fallback(
    instance: &AnnotatedInstance,
    params: &LstmParams,
    table: &SenseEmbeddingTable,
    vocab: &Vocabulary,
    opts: &EncodeOptions,
) -> Result<Prediction, WsdError> {
    let prediction = classify_nn(instance, params, table, vocab, opts)?;
    if prediction.strategy != Strategy::Abstain {
        return Ok(prediction);
    }
    match table.mfs(&instance.lemma, instance.pos) {
        Some(key) => Ok(Prediction {
            instance_id: instance.instance_id.clone(),
            sense_key: Some(key.to_string()),
            score: 0.0,
            strategy: Strategy::Mfs,
        }),
        None => Ok(prediction),
    }
}

/// Sense-frequency counts per (lemma, pos, key) from labeled instances,
/// for [`SenseEmbeddingTable::add_mfs_counts`].
pub fn mfs_counts_from_instances(
    instances: &[AnnotatedInstance],
) -> Vec<(String, String, Pos, u64)> {
    let mut counts: BTreeMap<(String, String, Pos), u64> = BTreeMap::new();
    for instance in instances {
        for key in &instance.gold_keys {
            *counts
                .entry((key.clone(), instance.lemma.clone(), instance.pos))
                .or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|((key, lemma, pos), n)| (key, lemma, pos, n))
        .collect()
}
