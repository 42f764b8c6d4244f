//! Corpus ingestion: tokenization, the vocabulary, and sense-annotated data.
//!
//! All types here are immutable after construction and safe to share across
//! threads.

mod keys;
mod xml;

pub use keys::{parse_key_file, write_key_file, KeyMap};
pub use xml::{parse_annotated_xml, write_annotated_xml};

use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Unknown-word token id.
pub const UNK: u32 = 0;
/// Held-out-target placeholder id.
pub const TGT: u32 = 1;
/// Sentence-end id.
pub const EOS: u32 = 2;
/// Batch-padding id.
pub const PAD: u32 = 3;
/// Number of reserved special ids.
pub const NUM_SPECIALS: usize = 4;

const SPECIAL_FORMS: [&str; NUM_SPECIALS] = ["<unk>", "<tgt>", "<eos>", "<pad>"];

/// Surface form all-digit tokens collapse to before vocabulary building.
pub const NUM_FORM: &str = "<num>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("XML syntax error at line {line}: {msg}")]
    XmlSyntax { line: u64, msg: String },
    #[error("line {line}: element <{element}> is missing required attribute \"{attribute}\"")]
    XmlMissingAttr {
        element: String,
        attribute: String,
        line: u64,
    },
    #[error("line {line}: unexpected element <{element}>")]
    XmlUnexpectedElement { element: String, line: u64 },
    #[error("line {line}: duplicate instance id \"{id}\"")]
    XmlDuplicateInstance { id: String, line: u64 },
    #[error("vocabulary max_size {max_size} leaves no room for the {NUM_SPECIALS} special tokens")]
    VocabularyTooSmall { max_size: usize },
    #[error("vocabulary file line {line}: {msg}")]
    BadVocabularyFile { line: usize, msg: String },
    #[error("key file line {line}: {msg}")]
    BadKeyFile { line: usize, msg: String },
    #[error("a sentence must contain at least one token")]
    EmptySentence,
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> CorpusError {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Coarse part-of-speech tag used for lemma matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Pos {
    /// Lenient parse accepting unified-framework tags and WordNet letters.
    pub fn parse(s: &str) -> Pos {
        match s.to_ascii_uppercase().as_str() {
            "NOUN" | "N" => Pos::Noun,
            "VERB" | "V" => Pos::Verb,
            "ADJ" | "A" | "J" => Pos::Adj,
            "ADV" | "R" => Pos::Adv,
            _ => Pos::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An encoded, EOS-terminated sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    ids: Vec<u32>,
}

impl Sentence {
    pub fn new(ids: Vec<u32>) -> Result<Sentence, CorpusError> {
        if ids.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        Ok(Sentence { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one token
    }
}

/// One sense-labeled target occurrence.
///
/// Surface forms are retained verbatim; encoding under a vocabulary happens
/// at model time via [`encode_for_model`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedInstance {
    pub instance_id: String,
    pub lemma: String,
    pub pos: Pos,
    pub tokens: Vec<String>,
    pub target_position: usize,
    pub gold_keys: BTreeSet<String>,
}

/// Parsed annotated corpus plus non-fatal warnings (skipped key lines).
#[derive(Debug)]
pub struct AnnotatedCorpus {
    pub instances: Vec<AnnotatedInstance>,
    pub warnings: Vec<String>,
}

/// Normalizes one token: optional case fold, then all-digit tokens to
/// [`NUM_FORM`].
pub fn normalize_token(token: &str, lowercase: bool) -> String {
    let t = if lowercase {
        token.to_lowercase()
    } else {
        token.to_string()
    };
    if !t.is_empty() && t.chars().all(|c| c.is_numeric()) {
        NUM_FORM.to_string()
    } else {
        t
    }
}

/// Splits a UTF-8 document into sentences (one per line) of whitespace
/// tokens. Whitespace-only lines are skipped. Tokens are normalized via
/// [`normalize_token`].
pub fn tokenize(bytes: &[u8], lowercase: bool) -> Result<Vec<Vec<String>>, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    let mut sentences = Vec::new();
    for line in text.lines() {
        let tokens: Vec<String> = line
            .split_whitespace()
            .map(|t| normalize_token(t, lowercase))
            .collect();
        if !tokens.is_empty() {
            sentences.push(tokens);
        }
    }
    Ok(sentences)
}

/// Bijection between surface forms and dense word ids, with reserved
/// specials at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    forms: Vec<String>,
    counts: Vec<u64>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_size − 4` most frequent forms with count ≥ `min_count`;
    /// frequency ties break lexicographically. Everything else maps to UNK,
    /// whose stored count is the total count of cut-off forms.
    pub fn build(
        sentences: &[Vec<String>],
        max_size: usize,
        min_count: u64,
    ) -> Result<Vocabulary, CorpusError> {
        if max_size <= NUM_SPECIALS {
            return Err(CorpusError::VocabularyTooSmall { max_size });
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for token in sentence {
                *freq.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut forms: Vec<String> = SPECIAL_FORMS.iter().map(|s| s.to_string()).collect();
        let mut counts: Vec<u64> = vec![0; NUM_SPECIALS];
        let keep = max_size - NUM_SPECIALS;
        let mut cutoff_total = 0u64;
        for (i, (form, count)) in ranked.into_iter().enumerate() {
            if i < keep && count >= min_count {
                forms.push(form.to_string());
                counts.push(count);
            } else {
                cutoff_total += count;
            }
        }
        counts[UNK as usize] = cutoff_total;

        let ids = forms
            .iter()
            .enumerate()
            .map(|(id, form)| (form.clone(), id as u32))
            .collect();
        Ok(Vocabulary { forms, counts, ids })
    }

    /// Vocabulary size V, specials included.
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn id_of(&self, form: &str) -> Option<u32> {
        self.ids.get(form).copied()
    }

    pub fn form_of(&self, id: u32) -> &str {
        &self.forms[id as usize]
    }

    pub fn count_of(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Encodes surface forms, mapping out-of-vocabulary forms to UNK and
    /// appending EOS.
    pub fn encode<S: AsRef<str>>(&self, forms: &[S]) -> Sentence {
        let mut ids: Vec<u32> = forms
            .iter()
            .map(|f| self.id_of(f.as_ref()).unwrap_or(UNK))
            .collect();
        ids.push(EOS);
        Sentence { ids }
    }

    /// Maps ids back to surface forms, dropping the trailing EOS.
    pub fn decode(&self, sentence: &Sentence) -> Vec<String> {
        let ids = sentence.ids();
        let body = if ids.last() == Some(&EOS) {
            &ids[..ids.len() - 1]
        } else {
            ids
        };
        body.iter()
            .map(|&id| self.form_of(id).to_string())
            .collect()
    }

    /// Line i holds `form TAB count` for id i; the first four lines are the
    /// special tokens.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        for (form, count) in self.forms.iter().zip(&self.counts) {
            writeln!(w, "{form}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Vocabulary, CorpusError> {
        let mut forms = Vec::new();
        let mut counts = Vec::new();
        let mut ids = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CorpusError::BadVocabularyFile {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let (form, count) =
                line.split_once('\t')
                    .ok_or_else(|| CorpusError::BadVocabularyFile {
                        line: i + 1,
                        msg: "expected `form TAB count`".to_string(),
                    })?;
            let count: u64 = count.parse().map_err(|_| CorpusError::BadVocabularyFile {
                line: i + 1,
                msg: format!("bad count \"{count}\""),
            })?;
            if i < NUM_SPECIALS && form != SPECIAL_FORMS[i] {
                return Err(CorpusError::BadVocabularyFile {
                    line: i + 1,
                    msg: format!("expected special token {}", SPECIAL_FORMS[i]),
                });
            }
            if ids.insert(form.to_string(), forms.len() as u32).is_some() {
                return Err(CorpusError::BadVocabularyFile {
                    line: i + 1,
                    msg: format!("duplicate form \"{form}\""),
                });
            }
            forms.push(form.to_string());
            counts.push(count);
        }
        if forms.len() < NUM_SPECIALS {
            return Err(CorpusError::BadVocabularyFile {
                line: forms.len(),
                msg: "missing special-token header".to_string(),
            });
        }
        Ok(Vocabulary { forms, counts, ids })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to Vec cannot fail");
        fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Vocabulary::read_from(io::Cursor::new(bytes))
    }

    /// SHA-256 of the serialized vocabulary bytes; checkpoints embed this.
    pub fn digest(&self) -> [u8; 32] {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to Vec cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&buf);
        hasher.finalize().into()
    }
}

/// How surface tokens are prepared for the model.
#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    pub lowercase: bool,
    /// Sentences longer than this are truncated around the target
    /// (annotated data) or split (LM data).
    pub max_len: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            lowercase: true,
            max_len: 100,
        }
    }
}

/// Normalizes, truncates around the target when over `max_len`, and encodes
/// an annotated instance's sentence. Returns the sentence and the adjusted
/// target position.
pub fn encode_for_model(
    instance: &AnnotatedInstance,
    vocab: &Vocabulary,
    opts: &EncodeOptions,
) -> (Sentence, usize) {
    let normalized: Vec<String> = instance
        .tokens
        .iter()
        .map(|t| normalize_token(t, opts.lowercase))
        .collect();
    let (window, target) = if normalized.len() > opts.max_len {
        let mut start = instance.target_position.saturating_sub(opts.max_len / 2);
        if start + opts.max_len > normalized.len() {
            start = normalized.len() - opts.max_len;
        }
        (
            &normalized[start..start + opts.max_len],
            instance.target_position - start,
        )
    } else {
        (&normalized[..], instance.target_position)
    };
    (vocab.encode(window), target)
}

/// Reads a plain-text LM corpus (one sentence per line), splitting sentences
/// longer than `max_len` into consecutive chunks.
pub fn load_lm_corpus(path: &Path, opts: &EncodeOptions) -> Result<Vec<Vec<String>>, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let sentences = tokenize(&bytes, opts.lowercase)?;
    Ok(split_long_sentences(sentences, opts.max_len))
}

fn split_long_sentences(sentences: Vec<Vec<String>>, max_len: usize) -> Vec<Vec<String>> {
    let mut out = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        if sentence.len() <= max_len {
            out.push(sentence);
        } else {
            for chunk in sentence.chunks(max_len) {
                out.push(chunk.to_vec());
            }
        }
    }
    out
}

/// Parses the annotated XML plus an optional key file. Key lines that
/// reference unknown instance ids are skipped with a warning; instances
/// absent from the key file keep empty gold keys.
pub fn parse_annotated_corpus(
    xml_path: &Path,
    key_path: Option<&Path>,
) -> Result<AnnotatedCorpus, CorpusError> {
    let file = fs::File::open(xml_path).map_err(|e| CorpusError::io(xml_path, e))?;
    let mut instances = parse_annotated_xml(io::BufReader::new(file))?;
    let mut warnings = Vec::new();
    if let Some(key_path) = key_path {
        let bytes = fs::read(key_path).map_err(|e| CorpusError::io(key_path, e))?;
        let (keys, key_warnings) = parse_key_file(io::Cursor::new(bytes))?;
        warnings.extend(key_warnings);
        warnings.extend(attach_gold_keys(&mut instances, &keys));
    }
    Ok(AnnotatedCorpus {
        instances,
        warnings,
    })
}

/// Attaches gold keys by instance id; returns warnings for key entries that
/// match no instance.
pub fn attach_gold_keys(instances: &mut [AnnotatedInstance], keys: &KeyMap) -> Vec<String> {
    let known: BTreeSet<String> = instances.iter().map(|i| i.instance_id.clone()).collect();
    for instance in instances.iter_mut() {
        if let Some(k) = keys.get(&instance.instance_id) {
            instance.gold_keys = k.clone();
        }
    }
    keys.keys()
        .filter(|id| !known.contains(id.as_str()))
        .map(|id| format!("key file references unknown instance id \"{id}\"; line skipped"))
        .collect()
}
