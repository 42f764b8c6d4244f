//! Pseudoword benchmarks: take several real words with distinct contexts,
//! merge their surface forms into one artificial ambiguous token, and the
//! original word becomes the gold "sense". This gives arbitrarily much
//! labeled evaluation data without an annotator.

use super::EvalError;
use crate::corpus::{AnnotatedInstance, KeyMap, Pos};
use rand::distributions::Uniform;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// One sense of the pseudoword: a real source word plus sentence templates
/// describing the contexts it occurs in. Templates are whitespace token
/// sequences where `{T}` is the source word and `{0}`, `{1}`, ... draw
/// uniformly from the corresponding filler pool (fillers may be several
/// words).
#[derive(Debug, Clone)]
pub struct PseudoSense {
    pub sense_key: String,
    pub source_word: String,
    pub templates: Vec<String>,
    pub pools: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct PseudoCorpusSpec {
    pub senses: Vec<PseudoSense>,
    /// The merged surface form shared by all senses, e.g. "bananadoor".
    pub pseudoword: String,
    /// Raw sentences for language-model training (source words intact).
    pub n_train_lm: usize,
    /// Annotated training instances per sense.
    pub n_train_annotated: usize,
    /// Annotated test instances, spread round-robin over senses.
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PseudoCorpus {
    pub lm_sentences: Vec<Vec<String>>,
    pub train: Vec<AnnotatedInstance>,
    pub test: Vec<AnnotatedInstance>,
    /// Gold keys for the test split.
    pub gold: KeyMap,
}

/// How many rejection-sampling attempts to make per sentence before
/// concluding the template space is exhausted.
const MAX_ATTEMPTS: usize = 10_000;

fn validate(spec: &PseudoCorpusSpec) -> Result<(), EvalError> {
    let err = |msg: String| Err(EvalError::InvalidSpec { msg });
    if spec.senses.len() < 2 {
        return err(format!("need at least 2 senses, got {}", spec.senses.len()));
    }
    if spec.pseudoword.is_empty() || spec.pseudoword.split_whitespace().count() != 1 {
        return err(format!(
            "pseudoword \"{}\" must be a single token",
            spec.pseudoword
        ));
    }
    if spec.n_train_lm == 0 || spec.n_train_annotated == 0 || spec.n_test == 0 {
        return err("sentence counts must all be ≥ 1".to_string());
    }
    let keys: BTreeSet<&String> = spec.senses.iter().map(|s| &s.sense_key).collect();
    if keys.len() != spec.senses.len() {
        return err("sense keys must be distinct".to_string());
    }
    for sense in &spec.senses {
        let before = |what: &str| format!("sense \"{}\": {what}", sense.sense_key);
        if sense.sense_key.is_empty() {
            return err("empty sense key".to_string());
        }
        if sense.source_word.split_whitespace().count() != 1 {
            return err(before("source word must be a single token"));
        }
        if sense.templates.is_empty() {
            return err(before("no templates"));
        }
        for template in &sense.templates {
            let mut targets = 0;
            for token in template.split_whitespace() {
                if token == "{T}" {
                    targets += 1;
                } else if let Some(inner) =
                    token.strip_prefix('{').and_then(|t| t.strip_suffix('}'))
                {
                    let slot: usize = inner.parse().map_err(|_| EvalError::InvalidSpec {
                        msg: before(&format!("bad slot \"{token}\"")),
                    })?;
                    if slot >= sense.pools.len() {
                        return err(before(&format!(
                            "slot {{{slot}}} but only {} pools",
                            sense.pools.len()
                        )));
                    }
                    if sense.pools[slot].is_empty() {
                        return err(before(&format!("pool {slot} is empty")));
                    }
                }
            }
            if targets != 1 {
                return err(before(&format!(
                    "template \"{template}\" must contain {{T}} exactly once"
                )));
            }
        }
    }
    Ok(())
}

/// Expands one template draw into tokens, returning the target's position.
fn sample_sentence(sense: &PseudoSense, rng: &mut ChaCha8Rng) -> (Vec<String>, usize) {
    let template = &sense.templates[rng.sample(Uniform::new(0, sense.templates.len()))];
    let mut tokens = Vec::new();
    let mut target = 0;
    for piece in template.split_whitespace() {
        if piece == "{T}" {
            target = tokens.len();
            tokens.push(sense.source_word.clone());
        } else if let Some(slot) = piece
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .and_then(|t| t.parse::<usize>().ok())
        {
            let pool = &sense.pools[slot];
            let filler = &pool[rng.sample(Uniform::new(0, pool.len()))];
            tokens.extend(filler.split_whitespace().map(str::to_string));
        } else {
            tokens.push(piece.to_string());
        }
    }
    (tokens, target)
}

fn sample_fresh(
    sense: &PseudoSense,
    rng: &mut ChaCha8Rng,
    seen: &mut BTreeSet<Vec<String>>,
) -> Result<(Vec<String>, usize), EvalError> {
    for _ in 0..MAX_ATTEMPTS {
        let (tokens, target) = sample_sentence(sense, rng);
        if seen.insert(tokens.clone()) {
            return Ok((tokens, target));
        }
    }
    Err(EvalError::Exhausted {
        sense_key: sense.sense_key.clone(),
    })
}

/// Generates the three splits from one seeded stream. Every sentence is
/// distinct (as its original token sequence), so the splits are disjoint.
/// The LM split keeps the source words; in the annotated splits the source
/// word is replaced by the pseudoword and the original identity becomes
/// the gold key.
pub fn make_pseudo_corpus(spec: &PseudoCorpusSpec) -> Result<PseudoCorpus, EvalError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();

    let mut lm_sentences = Vec::with_capacity(spec.n_train_lm);
    for i in 0..spec.n_train_lm {
        let sense = &spec.senses[i % spec.senses.len()];
        let (tokens, _) = sample_fresh(sense, &mut rng, &mut seen)?;
        lm_sentences.push(tokens);
    }

    let annotate = |sense: &PseudoSense,
                    id: String,
                    rng: &mut ChaCha8Rng,
                    seen: &mut BTreeSet<Vec<String>>|
     -> Result<AnnotatedInstance, EvalError> {
        let (mut tokens, target) = sample_fresh(sense, rng, seen)?;
        tokens[target] = spec.pseudoword.clone();
        Ok(AnnotatedInstance {
            instance_id: id,
            lemma: spec.pseudoword.clone(),
            pos: Pos::Noun,
            tokens,
            target_position: target,
            gold_keys: [sense.sense_key.clone()].into(),
        })
    };

    let mut train = Vec::with_capacity(spec.senses.len() * spec.n_train_annotated);
    for sense in &spec.senses {
        for i in 0..spec.n_train_annotated {
            let id = format!("pw.train.{}.{i:04}", sense.sense_key);
            train.push(annotate(sense, id, &mut rng, &mut seen)?);
        }
    }

    let mut test = Vec::with_capacity(spec.n_test);
    let mut gold = KeyMap::new();
    for i in 0..spec.n_test {
        let sense = &spec.senses[i % spec.senses.len()];
        let id = format!("pw.test.{i:04}");
        let instance = annotate(sense, id.clone(), &mut rng, &mut seen)?;
        gold.insert(id, instance.gold_keys.clone());
        test.push(instance);
    }

    Ok(PseudoCorpus {
        lm_sentences,
        train,
        test,
        gold,
    })
}

/// A ready-made two-sense benchmark merging "banana" and "door" into one
/// pseudoword. The senses share function words but draw content words from
/// disjoint pools, so context carries the sense.
pub fn default_pseudo_spec(seed: u64) -> PseudoCorpusSpec {
    let pool = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let templates = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>();
    PseudoCorpusSpec {
        senses: vec![
            PseudoSense {
                sense_key: "pw_banana".to_string(),
                source_word: "banana".to_string(),
                templates: templates(&[
                    "{0} {1} a {2} {T} {3}",
                    "{0} {1} the {2} {T} {3}",
                    "yesterday {0} {1} one {2} {T} {3}",
                    "{0} said the {2} {T} was {1} {3}",
                    "a {2} {T} is what {0} {1} {3}",
                ]),
                pools: vec![
                    pool(&[
                        "the monkey",
                        "my sister",
                        "the chef",
                        "grandma",
                        "the toddler",
                        "our teacher",
                    ]),
                    pool(&["peeled", "ate", "sliced", "mashed", "grabbed", "shared"]),
                    pool(&["ripe", "yellow", "sweet", "mushy", "spotted", "tiny"]),
                    pool(&[
                        "for breakfast",
                        "in the kitchen",
                        "after lunch",
                        "at the market",
                        "with great delight",
                        "before practice",
                    ]),
                ],
            },
            PseudoSense {
                sense_key: "pw_door".to_string(),
                source_word: "door".to_string(),
                templates: templates(&[
                    "{0} {1} a {2} {T} {3}",
                    "{0} {1} the {2} {T} {3}",
                    "yesterday {0} {1} one {2} {T} {3}",
                    "{0} said the {2} {T} was {1} {3}",
                    "a {2} {T} is what {0} {1} {3}",
                ]),
                pools: vec![
                    pool(&[
                        "the guard",
                        "the janitor",
                        "our neighbor",
                        "the landlord",
                        "the visitor",
                        "the locksmith",
                    ]),
                    pool(&[
                        "opened", "slammed", "locked", "painted", "repaired", "bolted",
                    ]),
                    pool(&["wooden", "creaky", "heavy", "narrow", "red", "sliding"]),
                    pool(&[
                        "at midnight",
                        "in the hallway",
                        "during the storm",
                        "without a sound",
                        "before leaving",
                        "on the porch",
                    ]),
                ],
            },
        ],
        pseudoword: "bananadoor".to_string(),
        n_train_lm: 2000,
        n_train_annotated: 20,
        n_test: 100,
        seed,
    }
}
