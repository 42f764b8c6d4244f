//! Scoring against gold keys, the most-frequent-sense baseline, and
//! synthetic pseudoword benchmarks.

mod pseudo;

pub use pseudo::{
    default_pseudo_spec, make_pseudo_corpus, PseudoCorpus, PseudoCorpusSpec, PseudoSense,
};

use crate::corpus::{AnnotatedInstance, KeyMap, Pos};
use crate::wsd::{Prediction, SenseEmbeddingTable, Strategy};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bad pseudoword spec: {msg}")]
    InvalidSpec { msg: String },
    #[error("sense \"{sense_key}\" ran out of distinct sentences; add templates or filler words")]
    Exhausted { sense_key: String },
}

/// Precision/recall block over one slice of the data.
///
/// `attempted` counts non-abstaining predictions, `total` counts gold
/// instances. Precision is correct/attempted (0 when nothing was
/// attempted), recall is correct/total, F1 their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stats {
    pub attempted: usize,
    pub correct: usize,
    pub total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Stats {
    pub fn from_counts(attempted: usize, correct: usize, total: usize) -> Stats {
        let precision = if attempted == 0 {
            0.0
        } else {
            correct as f64 / attempted as f64
        };
        let recall = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Stats {
            attempted,
            correct,
            total,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub overall: Stats,
    /// Per part-of-speech breakdown; filled only when the scorer is given a
    /// pos lookup, and only for instances the lookup covers.
    pub per_pos: BTreeMap<Pos, Stats>,
    /// How many scored predictions each strategy produced (abstentions
    /// included).
    pub per_strategy: BTreeMap<Strategy, usize>,
    /// Prediction ids that are not in the gold data; such predictions are
    /// reported here and excluded from every count.
    pub unknown_ids: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    attempted: usize,
    correct: usize,
    total: usize,
}

impl Tally {
    fn stats(self) -> Stats {
        Stats::from_counts(self.attempted, self.correct, self.total)
    }
}

/// Scores predictions against gold keys. A prediction is correct when its
/// key is one of the instance's gold keys; abstentions count toward total
/// only; gold instances with no prediction likewise.
pub fn score(
    predictions: &[Prediction],
    gold: &KeyMap,
    pos_of: Option<&BTreeMap<String, Pos>>,
) -> ScoreReport {
    let mut overall = Tally {
        total: gold.len(),
        ..Tally::default()
    };
    let mut per_pos: BTreeMap<Pos, Tally> = BTreeMap::new();
    let mut per_strategy: BTreeMap<Strategy, usize> = BTreeMap::new();
    let mut unknown_ids = Vec::new();

    let pos_lookup = |id: &str| pos_of.and_then(|lookup| lookup.get(id).copied());
    if pos_of.is_some() {
        for id in gold.keys() {
            if let Some(pos) = pos_lookup(id) {
                per_pos.entry(pos).or_default().total += 1;
            }
        }
    }

    for prediction in predictions {
        let Some(gold_keys) = gold.get(&prediction.instance_id) else {
            unknown_ids.push(prediction.instance_id.clone());
            continue;
        };
        *per_strategy.entry(prediction.strategy).or_insert(0) += 1;
        let Some(key) = &prediction.sense_key else {
            continue;
        };
        let correct = gold_keys.contains(key) as usize;
        overall.attempted += 1;
        overall.correct += correct;
        if let Some(pos) = pos_lookup(&prediction.instance_id) {
            let tally = per_pos.entry(pos).or_default();
            tally.attempted += 1;
            tally.correct += correct;
        }
    }

    ScoreReport {
        overall: overall.stats(),
        per_pos: per_pos
            .into_iter()
            .map(|(pos, tally)| (pos, tally.stats()))
            .collect(),
        per_strategy,
        unknown_ids,
    }
}

/// Scores a prediction key file against a gold key file. Each line is one
/// attempt, correct when any of its keys is gold. No strategy or pos
/// breakdown survives the file format.
pub fn score_key_map(predictions: &KeyMap, gold: &KeyMap) -> ScoreReport {
    let mut overall = Tally {
        total: gold.len(),
        ..Tally::default()
    };
    let mut unknown_ids = Vec::new();
    for (id, keys) in predictions {
        let Some(gold_keys) = gold.get(id) else {
            unknown_ids.push(id.clone());
            continue;
        };
        overall.attempted += 1;
        overall.correct += keys.iter().any(|k| gold_keys.contains(k)) as usize;
    }
    ScoreReport {
        overall: overall.stats(),
        per_pos: BTreeMap::new(),
        per_strategy: BTreeMap::new(),
        unknown_ids,
    }
}

/// Labels every instance with its most frequent sense, abstaining when the
/// table has no counts for the lemma.
pub fn mfs_baseline(
    instances: &[AnnotatedInstance],
    table: &SenseEmbeddingTable,
) -> Vec<Prediction> {
    instances
        .iter()
        .map(|instance| match table.mfs(&instance.lemma, instance.pos) {
            Some(key) => Prediction {
                instance_id: instance.instance_id.clone(),
                sense_key: Some(key.to_string()),
                score: 0.0,
                strategy: Strategy::Mfs,
            },
            None => Prediction::abstain(&instance.instance_id),
        })
        .collect()
}

/// Writes predictions in key-file format (`instance_id sense_key` per
/// line), omitting abstentions.
pub fn write_predictions(predictions: &[Prediction], mut w: impl Write) -> io::Result<()> {
    for prediction in predictions {
        if let Some(key) = &prediction.sense_key {
            writeln!(w, "{} {}", prediction.instance_id, key)?;
        }
    }
    Ok(())
}

/// Machine-readable report: one `metric TAB value` line per figure, ratios
/// with four decimals.
pub fn write_report(report: &ScoreReport, mut w: impl Write) -> io::Result<()> {
    let stats_block = |prefix: &str, s: &Stats| {
        format!(
            "{prefix}attempted\t{}\n{prefix}correct\t{}\n{prefix}total\t{}\n\
             {prefix}precision\t{:.4}\n{prefix}recall\t{:.4}\n{prefix}f1\t{:.4}\n",
            s.attempted, s.correct, s.total, s.precision, s.recall, s.f1
        )
    };
    w.write_all(stats_block("", &report.overall).as_bytes())?;
    for (pos, stats) in &report.per_pos {
        w.write_all(stats_block(&format!("{pos}."), stats).as_bytes())?;
    }
    for (strategy, n) in &report.per_strategy {
        writeln!(w, "strategy.{strategy}\t{n}")?;
    }
    writeln!(w, "unknown_predictions\t{}", report.unknown_ids.len())?;
    Ok(())
}

/// Short human-readable summary for logs.
pub fn format_report_text(report: &ScoreReport) -> String {
    let s = &report.overall;
    let mut out = format!(
        "P {:.4}  R {:.4}  F1 {:.4}  ({} correct / {} attempted / {} total)",
        s.precision, s.recall, s.f1, s.correct, s.attempted, s.total
    );
    for (pos, stats) in &report.per_pos {
        let _ = write!(
            out,
            "\n  {pos}: F1 {:.4} ({}/{})",
            stats.f1, stats.correct, stats.total
        );
    }
    if !report.unknown_ids.is_empty() {
        let _ = write!(
            out,
            "\n  {} prediction(s) for unknown instances ignored",
            report.unknown_ids.len()
        );
    }
    out
}

#[cfg(test)]
mod tests;
