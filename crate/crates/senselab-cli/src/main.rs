//! `senselab`: train a held-out-word LSTM on raw text, turn annotated
//! occurrences into sense embeddings, and disambiguate by nearest sense.
//!
//! Exit codes: 0 on success, 1 for command-line or settings problems, 2 when
//! an input is missing or malformed or a computation cannot proceed.

mod artifacts;
mod settings;

use anyhow::{anyhow, Context};
use artifacts::{persist, write_atomic, Manifest};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use senselab::corpus::{
    load_lm_corpus, parse_annotated_corpus, parse_key_file, write_annotated_xml, write_key_file,
    AnnotatedInstance, KeyMap, Pos, Sentence, Vocabulary,
};
use senselab::eval::{
    default_pseudo_spec, make_pseudo_corpus, score_key_map, write_predictions, write_report,
    EvalError,
};
use senselab::lstm::{
    batch_heldout_grads, batch_heldout_loss, extract_context, load_checkpoint, perplexity,
    save_checkpoint, train, HeldoutExample, LstmParams, ModelConfig,
};
use senselab::numeric::{grad_check, DEFAULT_EPSILON};
use senselab::wsd::{
    classify_nn, classify_vector, classify_with_fallback, cosine, mfs_counts_from_instances,
    propagate_labels, LpProblem, Prediction, SenseEmbeddingTable, SenseEntry, WsdError,
};
use settings::{Settings, SettingsError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use std::{fs, io, process};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "senselab", version, about, arg_required_else_help = true)]
struct Cli {
    /// Settings file: one `key = value` per line, `#` comments.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Suppress progress messages on stderr (warnings still print).
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for batch classification; 0 picks automatically.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frequency-ranked vocabulary from raw text.
    BuildVocab(BuildVocabArgs),
    /// Train the held-out-word language model.
    TrainLm(TrainLmArgs),
    /// Average context vectors per sense over an annotated corpus.
    BuildSenses(BuildSensesArgs),
    /// Assign senses to annotated occurrences by nearest sense embedding.
    Disambiguate(DisambiguateArgs),
    /// Spread sense labels from annotated to new occurrences over a kNN graph.
    Propagate(PropagateArgs),
    /// Score a predictions file against gold keys.
    Score(ScoreArgs),
    /// Generate a pseudoword corpus for end-to-end evaluation.
    Synth(SynthArgs),
    /// Cross-check the numerics against independent oracles.
    Selfcheck,
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Raw text, one sentence per line.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Where to write the vocabulary table.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Keep at most this many forms, specials included.
    #[arg(long, value_name = "N")]
    max_size: Option<usize>,
    /// Drop forms seen fewer than this many times.
    #[arg(long, value_name = "N")]
    min_count: Option<u64>,
}

#[derive(Args)]
struct TrainLmArgs {
    /// Raw text, one sentence per line.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Vocabulary table from `build-vocab`.
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Where to write the model checkpoint.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Embedding and context dimension.
    #[arg(long, value_name = "N")]
    embed_dim: Option<usize>,
    /// LSTM hidden dimension.
    #[arg(long, value_name = "N")]
    hidden_dim: Option<usize>,
    /// Passes over the training corpus.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// SGD step size.
    #[arg(long, value_name = "X")]
    learning_rate: Option<f64>,
    /// Global gradient-norm ceiling.
    #[arg(long, value_name = "X")]
    clip_norm: Option<f64>,
    /// Sentences per gradient step.
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
    /// Overrides the settings-file seed and SENSELAB_SEED.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct BuildSensesArgs {
    /// Model checkpoint from `train-lm`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Vocabulary the model was trained with.
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Sense-annotated corpus (XML).
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Gold keys for the annotated corpus.
    #[arg(long, value_name = "FILE")]
    keys: PathBuf,
    /// Where to write the sense embedding table.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NnStrategy {
    /// Nearest sense embedding; abstain on lemmas without one.
    Nn,
    /// Nearest sense embedding, most-frequent sense where there is none.
    #[value(name = "nn+mfs")]
    NnMfs,
}

impl NnStrategy {
    fn as_str(self) -> &'static str {
        match self {
            NnStrategy::Nn => "nn",
            NnStrategy::NnMfs => "nn+mfs",
        }
    }
}

#[derive(Args)]
struct DisambiguateArgs {
    /// Model checkpoint from `train-lm`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Vocabulary the model was trained with.
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Sense embedding table from `build-senses`.
    #[arg(long, value_name = "FILE")]
    senses: PathBuf,
    /// Occurrences to disambiguate (XML).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Where to write the predictions.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "nn")]
    strategy: NnStrategy,
    /// Extra annotated corpus counted for the most-frequent-sense fallback.
    #[arg(long, value_name = "FILE", requires = "mfs_keys")]
    mfs_xml: Option<PathBuf>,
    /// Gold keys for --mfs-xml.
    #[arg(long, value_name = "FILE", requires = "mfs_xml")]
    mfs_keys: Option<PathBuf>,
}

#[derive(Args)]
struct PropagateArgs {
    /// Model checkpoint from `train-lm`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Vocabulary the model was trained with.
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Labeled occurrences (XML); every one needs a gold key.
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Gold keys for the labeled occurrences.
    #[arg(long, value_name = "FILE")]
    keys: PathBuf,
    /// Unlabeled occurrences to classify (XML).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Where to write the predictions.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Neighbors per node in the similarity graph.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    /// Kernel bandwidth; omitted means the median pairwise distance.
    #[arg(long, value_name = "X")]
    sigma: Option<f64>,
    /// Convergence threshold on the largest entry change.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Predictions in key-file format.
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Gold keys.
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    /// Also write the report here.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for lm.txt, train.xml, train.key, test.xml, test.key.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Raw sentences for language-model training.
    #[arg(long, value_name = "N")]
    lm_sentences: Option<usize>,
    /// Annotated training occurrences per sense.
    #[arg(long, value_name = "N")]
    annotated: Option<usize>,
    /// Held-out occurrences to disambiguate.
    #[arg(long, value_name = "N")]
    test: Option<usize>,
    /// Overrides the settings-file seed and SENSELAB_SEED.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;

/// Marks an error as the caller's fault (flags or settings) rather than the
/// data's; `main` exits 1 instead of 2 when it finds one in the chain.
#[derive(Debug, Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Clone, Copy)]
struct Log {
    quiet: bool,
}

impl Log {
    fn info(self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn warn(self, msg: impl Display) {
        eprintln!("warning: {msg}");
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let code = if e.is::<UsageError>() {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        process::exit(code);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let log = Log { quiet: cli.quiet };
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    let settings = Settings::resolve(cli.config.as_deref()).map_err(|e| match e {
        SettingsError::Io { .. } => anyhow::Error::new(e),
        other => usage(other.to_string()),
    })?;
    match cli.command {
        Command::BuildVocab(args) => build_vocab(args, settings, log),
        Command::TrainLm(args) => train_lm(args, settings, log),
        Command::BuildSenses(args) => build_senses(args, settings, log),
        Command::Disambiguate(args) => disambiguate(args, settings, log),
        Command::Propagate(args) => propagate(args, settings, log),
        Command::Score(args) => score(args, log),
        Command::Synth(args) => synth(args, settings, log),
        Command::Selfcheck => selfcheck(log),
    }
}

/// Output names in manifests stay relative so reruns elsewhere match bit
/// for bit.
fn file_name(path: &Path) -> String {
    match path.file_name() {
        Some(name) => name.to_string_lossy().into_owned(),
        None => path.display().to_string(),
    }
}

fn build_vocab(args: BuildVocabArgs, mut s: Settings, log: Log) -> anyhow::Result<()> {
    if let Some(v) = args.max_size {
        s.max_vocab = v;
    }
    if let Some(v) = args.min_count {
        s.min_count = v;
    }
    let sentences = load_lm_corpus(&args.corpus, &s.encode_options())?;
    let vocab = Vocabulary::build(&sentences, s.max_vocab, s.min_count)?;
    persist(&args.out, |p| vocab.save(p))?;
    log.info(format!(
        "{} forms from {} sentences -> {}",
        vocab.len(),
        sentences.len(),
        args.out.display()
    ));
    let mut m = Manifest::new("build-vocab");
    m.set("lowercase", s.lowercase)
        .set("max_len", s.max_len)
        .set("max_vocab", s.max_vocab)
        .set("min_count", s.min_count)
        .set("output", file_name(&args.out));
    m.input("corpus", &args.corpus)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn train_lm(args: TrainLmArgs, mut s: Settings, log: Log) -> anyhow::Result<()> {
    if let Some(v) = args.embed_dim {
        s.embed_dim = v;
    }
    if let Some(v) = args.hidden_dim {
        s.hidden_dim = v;
    }
    if let Some(v) = args.epochs {
        s.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        s.learning_rate = v;
    }
    if let Some(v) = args.clip_norm {
        s.clip_norm = v;
    }
    if let Some(v) = args.batch_size {
        s.batch_size = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    let opts = s.encode_options();
    let vocab = Vocabulary::load(&args.vocab)?;
    let sentences = load_lm_corpus(&args.corpus, &opts)?;
    let corpus: Vec<Sentence> = sentences.iter().map(|t| vocab.encode(t)).collect();
    let config = s.model_config(vocab.len());
    log.info(format!(
        "training on {} sentences: V={} p={} h={} epochs={} lr={} clip={} batch={} seed={}",
        corpus.len(),
        config.vocab_size,
        config.embed_dim,
        config.hidden_dim,
        config.epochs,
        config.learning_rate,
        config.clip_norm,
        config.batch_size,
        config.seed
    ));
    let started = Instant::now();
    let (params, _) = train(&config, &corpus, &vocab, |p| {
        log.info(format!(
            "epoch {}/{}  loss {:.4}",
            p.epoch, p.epochs, p.mean_loss
        ));
    })?;
    let ppl = perplexity(&params, &corpus)?;
    persist(&args.out, |p| {
        save_checkpoint(&params, &config, vocab.digest(), p)
    })?;
    log.info(format!(
        "perplexity {ppl:.3} on the training set; {:.1}s -> {}",
        started.elapsed().as_secs_f64(),
        args.out.display()
    ));
    let mut m = Manifest::new("train-lm");
    m.set("batch_size", config.batch_size)
        .set("clip_norm", config.clip_norm)
        .set("embed_dim", config.embed_dim)
        .set("epochs", config.epochs)
        .set("hidden_dim", config.hidden_dim)
        .set("learning_rate", config.learning_rate)
        .set("lowercase", s.lowercase)
        .set("max_len", s.max_len)
        .set("seed", config.seed)
        .set("output", file_name(&args.out));
    m.input("corpus", &args.corpus)?;
    m.input("vocab", &args.vocab)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn build_senses(args: BuildSensesArgs, s: Settings, log: Log) -> anyhow::Result<()> {
    let opts = s.encode_options();
    let vocab = Vocabulary::load(&args.vocab)?;
    let (params, _) = load_checkpoint(&args.model, vocab.digest())?;
    let corpus = parse_annotated_corpus(&args.train, Some(&args.keys))?;
    for w in &corpus.warnings {
        log.warn(w);
    }
    let table = SenseEmbeddingTable::build(&corpus.instances, &params, &vocab, &opts)?;
    persist(&args.out, |p| table.save(p))?;
    log.info(format!(
        "{} senses from {} occurrences -> {}",
        table.len(),
        corpus.instances.len(),
        args.out.display()
    ));
    let mut m = Manifest::new("build-senses");
    m.set("lowercase", s.lowercase)
        .set("max_len", s.max_len)
        .set("output", file_name(&args.out));
    m.input("model", &args.model)?;
    m.input("vocab", &args.vocab)?;
    m.input("train", &args.train)?;
    m.input("keys", &args.keys)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn disambiguate(args: DisambiguateArgs, s: Settings, log: Log) -> anyhow::Result<()> {
    let opts = s.encode_options();
    let vocab = Vocabulary::load(&args.vocab)?;
    let (params, _) = load_checkpoint(&args.model, vocab.digest())?;
    let mut table = SenseEmbeddingTable::load(&args.senses)?;
    if table.dim() != params.embed_dim() {
        return Err(anyhow!(
            "sense table is {}-dimensional but the model context is {}-dimensional",
            table.dim(),
            params.embed_dim()
        ));
    }
    if let (Some(xml), Some(keys)) = (&args.mfs_xml, &args.mfs_keys) {
        let extra = parse_annotated_corpus(xml, Some(keys))?;
        for w in &extra.warnings {
            log.warn(w);
        }
        if let Some(bad) = extra.instances.iter().find(|i| i.gold_keys.is_empty()) {
            return Err(anyhow!(
                "{}: occurrence {} has no gold key",
                xml.display(),
                bad.instance_id
            ));
        }
        table.add_mfs_counts(mfs_counts_from_instances(&extra.instances));
    }
    let corpus = parse_annotated_corpus(&args.input, None)?;
    for w in &corpus.warnings {
        log.warn(w);
    }
    let predictions: Vec<Prediction> = corpus
        .instances
        .par_iter()
        .map(|i| match args.strategy {
            NnStrategy::Nn => classify_nn(i, &params, &table, &vocab, &opts),
            NnStrategy::NnMfs => classify_with_fallback(i, &params, &table, &vocab, &opts),
        })
        .collect::<Result<_, WsdError>>()?;
    let mut buf = Vec::new();
    write_predictions(&predictions, &mut buf).context("encoding predictions")?;
    write_atomic(&args.out, &buf)?;
    let abstained = predictions.iter().filter(|p| p.sense_key.is_none()).count();
    log.info(format!(
        "{} occurrences, {} abstained -> {}",
        predictions.len(),
        abstained,
        args.out.display()
    ));
    let mut m = Manifest::new("disambiguate");
    m.set("lowercase", s.lowercase)
        .set("max_len", s.max_len)
        .set("strategy", args.strategy.as_str())
        .set("output", file_name(&args.out));
    m.input("model", &args.model)?;
    m.input("vocab", &args.vocab)?;
    m.input("senses", &args.senses)?;
    m.input("input", &args.input)?;
    if let (Some(xml), Some(keys)) = (&args.mfs_xml, &args.mfs_keys) {
        m.input("mfs_xml", xml)?;
        m.input("mfs_keys", keys)?;
    }
    m.write_beside(&args.out)?;
    Ok(())
}

fn propagate(args: PropagateArgs, s: Settings, log: Log) -> anyhow::Result<()> {
    let opts = s.encode_options();
    let vocab = Vocabulary::load(&args.vocab)?;
    let (params, _) = load_checkpoint(&args.model, vocab.digest())?;
    let labeled = parse_annotated_corpus(&args.train, Some(&args.keys))?;
    for w in &labeled.warnings {
        log.warn(w);
    }
    let queries = parse_annotated_corpus(&args.input, None)?;
    for w in &queries.warnings {
        log.warn(w);
    }
    if let Some(bad) = labeled.instances.iter().find(|i| i.gold_keys.is_empty()) {
        return Err(anyhow!(
            "labeled occurrence {} has no gold key",
            bad.instance_id
        ));
    }
    // Each labeled node argues for one class: its first gold key.
    let first_keys: Vec<&str> = labeled
        .instances
        .iter()
        .map(|i| {
            i.gold_keys
                .iter()
                .next()
                .expect("gold keys checked")
                .as_str()
        })
        .collect();
    let classes: Vec<String> = first_keys
        .iter()
        .map(|k| k.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels: BTreeMap<usize, usize> = first_keys
        .iter()
        .enumerate()
        .map(|(i, k)| (i, class_index[k]))
        .collect();

    let all: Vec<&AnnotatedInstance> = labeled
        .instances
        .iter()
        .chain(queries.instances.iter())
        .collect();
    let node_ids: Vec<String> = all.iter().map(|i| i.instance_id.clone()).collect();
    let vectors: Vec<Vec<f64>> = all
        .par_iter()
        .map(|i| extract_context(&params, i, &vocab, &opts).map(|c| c.values))
        .collect::<Result<_, _>>()?;

    let mut problem = LpProblem::new(node_ids, vectors, labels, classes);
    problem.k = args.k.unwrap_or(s.lp_k);
    problem.sigma = args.sigma.or(s.lp_sigma);
    problem.tol = args.tol.unwrap_or(s.lp_tol);
    problem.max_iter = args.max_iter.unwrap_or(s.lp_max_iter);
    let outcome = propagate_labels(&problem)?;
    log.info(format!(
        "{} labeled + {} query nodes, {} classes, {} iterations, {} isolated",
        labeled.instances.len(),
        queries.instances.len(),
        problem.classes.len(),
        outcome.iterations,
        outcome.isolated.len()
    ));
    let mut buf = Vec::new();
    write_predictions(&outcome.predictions, &mut buf).context("encoding predictions")?;
    write_atomic(&args.out, &buf)?;
    log.info(format!(
        "{} predictions -> {}",
        outcome.predictions.len(),
        args.out.display()
    ));
    let mut m = Manifest::new("propagate");
    m.set("k", problem.k)
        .set("lowercase", s.lowercase)
        .set("max_iter", problem.max_iter)
        .set("max_len", s.max_len)
        .set(
            "sigma",
            problem
                .sigma
                .map_or_else(|| "median".to_string(), |x| x.to_string()),
        )
        .set("tol", problem.tol)
        .set("output", file_name(&args.out));
    m.input("model", &args.model)?;
    m.input("vocab", &args.vocab)?;
    m.input("train", &args.train)?;
    m.input("keys", &args.keys)?;
    m.input("input", &args.input)?;
    m.write_beside(&args.out)?;
    Ok(())
}

fn score(args: ScoreArgs, log: Log) -> anyhow::Result<()> {
    let read = |path: &Path| -> anyhow::Result<KeyMap> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let (keys, warnings) = parse_key_file(io::Cursor::new(bytes))?;
        for w in warnings {
            log.warn(format!("{}: {w}", path.display()));
        }
        Ok(keys)
    };
    let pred = read(&args.pred)?;
    let gold = read(&args.gold)?;
    let report = score_key_map(&pred, &gold);
    let mut buf = Vec::new();
    write_report(&report, &mut buf).context("encoding report")?;
    io::stdout().write_all(&buf).context("writing report")?;
    for id in &report.unknown_ids {
        log.warn(format!("prediction for unknown occurrence \"{id}\""));
    }
    if let Some(path) = &args.report {
        write_atomic(path, &buf)?;
        let mut m = Manifest::new("score");
        m.set("output", file_name(path));
        m.input("pred", &args.pred)?;
        m.input("gold", &args.gold)?;
        m.write_beside(path)?;
    }
    Ok(())
}

fn synth(args: SynthArgs, s: Settings, log: Log) -> anyhow::Result<()> {
    let mut spec = default_pseudo_spec(args.seed.unwrap_or(s.seed));
    if let Some(n) = args.lm_sentences {
        spec.n_train_lm = n;
    }
    if let Some(n) = args.annotated {
        spec.n_train_annotated = n;
    }
    if let Some(n) = args.test {
        spec.n_test = n;
    }
    let corpus = make_pseudo_corpus(&spec).map_err(|e| match e {
        EvalError::InvalidSpec { .. } => usage(e.to_string()),
        other => anyhow::Error::new(other),
    })?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let mut lm = String::new();
    for sentence in &corpus.lm_sentences {
        lm.push_str(&sentence.join(" "));
        lm.push('\n');
    }
    write_atomic(&args.out_dir.join("lm.txt"), lm.as_bytes())?;

    let mut xml = Vec::new();
    write_annotated_xml(&corpus.train, &mut xml).context("encoding train.xml")?;
    write_atomic(&args.out_dir.join("train.xml"), &xml)?;

    let train_keys: KeyMap = corpus
        .train
        .iter()
        .map(|i| (i.instance_id.clone(), i.gold_keys.clone()))
        .collect();
    let mut keys = Vec::new();
    write_key_file(&train_keys, &mut keys).context("encoding train.key")?;
    write_atomic(&args.out_dir.join("train.key"), &keys)?;

    xml = Vec::new();
    write_annotated_xml(&corpus.test, &mut xml).context("encoding test.xml")?;
    write_atomic(&args.out_dir.join("test.xml"), &xml)?;

    keys = Vec::new();
    write_key_file(&corpus.gold, &mut keys).context("encoding test.key")?;
    write_atomic(&args.out_dir.join("test.key"), &keys)?;

    log.info(format!(
        "pseudoword \"{}\": {} lm sentences, {} annotated, {} test -> {}",
        spec.pseudoword,
        corpus.lm_sentences.len(),
        corpus.train.len(),
        corpus.test.len(),
        args.out_dir.display()
    ));
    let mut m = Manifest::new("synth");
    m.set("annotated_per_sense", spec.n_train_annotated)
        .set("lm_sentences", spec.n_train_lm)
        .set("pseudoword", &spec.pseudoword)
        .set("seed", spec.seed)
        .set(
            "senses",
            spec.senses
                .iter()
                .map(|s| s.sense_key.as_str())
                .collect::<Vec<_>>()
                .join(","),
        )
        .set("test_sentences", spec.n_test);
    write_atomic(&args.out_dir.join("manifest"), m.render().as_bytes())?;
    Ok(())
}

type Oracle = fn() -> Result<String, String>;

fn selfcheck(log: Log) -> anyhow::Result<()> {
    let checks: [(&str, Oracle); 4] = [
        ("lstm-gradients-vs-finite-differences", check_gradients),
        ("zeroed-output-layer-diagnostics", check_uniform_logits),
        (
            "nearest-neighbor-vs-exhaustive-scan",
            check_nearest_neighbor,
        ),
        ("label-propagation-vs-closed-form", check_propagation),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("ok {name} ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("FAILED {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        log.info("selfcheck passed");
        Ok(())
    } else {
        Err(anyhow!("{failed} selfcheck(s) failed"))
    }
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        embed_dim: 4,
        hidden_dim: 6,
        ..ModelConfig::default()
    }
}

fn check_gradients() -> Result<String, String> {
    let config = tiny_config();
    let short = [4u32, 5, 6, 7, 2];
    let long = [8u32, 9, 10, 11, 4, 5, 2];
    let examples = [
        HeldoutExample {
            ids: &short,
            target_position: 1,
        },
        HeldoutExample {
            ids: &long,
            target_position: 4,
        },
    ];
    let mut worst = 0.0f64;
    for seed in [11, 12, 13] {
        let params = LstmParams::init(&config, seed).map_err(|e| e.to_string())?;
        let (_, grads) = batch_heldout_grads(&params, &examples).map_err(|e| e.to_string())?;
        let report = grad_check(
            "heldout loss",
            |point| {
                let mut p = params.clone();
                p.assign_from_flat(point).expect("same shape");
                batch_heldout_loss(&p, &examples).expect("finite loss")
            },
            &params.flatten(),
            &grads.flatten(),
            DEFAULT_EPSILON,
        );
        if !report.passes(1e-4) {
            return Err(format!(
                "seed {seed}: max relative error {:.3e} at coordinate {:?}",
                report.max_rel_error, report.worst_coordinate
            ));
        }
        worst = worst.max(report.max_rel_error);
    }
    Ok(format!("3 seeds, worst relative error {worst:.3e}"))
}

fn check_uniform_logits() -> Result<String, String> {
    let config = tiny_config();
    let mut params = LstmParams::init(&config, 5).map_err(|e| e.to_string())?;
    let [_, _, _, _, _, o, b_o] = params.tensors_mut();
    o.data_mut().fill(0.0);
    b_o.data_mut().fill(0.0);
    let ids = [4u32, 5, 6, 7, 2];
    let loss = batch_heldout_loss(
        &params,
        &[HeldoutExample {
            ids: &ids,
            target_position: 2,
        }],
    )
    .map_err(|e| e.to_string())?;
    let ln_v = (config.vocab_size as f64).ln();
    if (loss - ln_v).abs() > 1e-9 {
        return Err(format!("uniform loss {loss} is not ln V = {ln_v}"));
    }
    let sentences = vec![
        Sentence::new(vec![4, 5, 6, 2]).map_err(|e| e.to_string())?,
        Sentence::new(vec![7, 8, 9, 10, 2]).map_err(|e| e.to_string())?,
    ];
    let ppl = perplexity(&params, &sentences).map_err(|e| e.to_string())?;
    let v = config.vocab_size as f64;
    if (ppl - v).abs() > 1e-6 {
        return Err(format!("uniform perplexity {ppl} is not V = {v}"));
    }
    Ok(format!("loss ln({0}), perplexity {0}", config.vocab_size))
}

fn check_nearest_neighbor() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 300;
    for case in 0..cases {
        let dim = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=6);
        let mut entries = Vec::new();
        for i in 0..n {
            let centroid: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
            entries.push((
                format!("s{i:02}"),
                SenseEntry {
                    lemma: "w".into(),
                    pos: Pos::Noun,
                    support: 1,
                    centroid,
                },
            ));
        }
        // Duplicate a centroid under a later key now and then so exact ties
        // get exercised too.
        if n >= 2 && case % 5 == 0 {
            entries[1].1.centroid = entries[0].1.centroid.clone();
        }
        let table = SenseEmbeddingTable::from_entries(dim, entries).map_err(|e| e.to_string())?;
        let query: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let fast = classify_vector("q", &query, "w", Pos::Noun, &table);
        let mut scan: Vec<(&str, f64)> = table
            .candidates("w", Pos::Noun)
            .iter()
            .map(|k| {
                (
                    k.as_str(),
                    cosine(&query, &table.entry(k).expect("own key").centroid),
                )
            })
            .collect();
        scan.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let (want_key, want_score) = scan[0];
        let got = fast.sense_key.as_deref().ok_or("classifier abstained")?;
        if got != want_key || fast.score.to_bits() != want_score.to_bits() {
            return Err(format!(
                "case {case}: got {got} ({}), scan says {want_key} ({want_score})",
                fast.score
            ));
        }
    }
    Ok(format!("{cases} random tables"))
}

fn check_propagation() -> Result<String, String> {
    // Two labeled endpoints and one unlabeled node close to "a": the final
    // mass on "a" has a closed form from the two kernel weights.
    let mut problem = LpProblem::new(
        vec!["a".into(), "b".into(), "q".into()],
        vec![vec![0.0], vec![10.0], vec![1.0]],
        BTreeMap::from([(0, 0), (1, 1)]),
        vec!["sense/a".into(), "sense/b".into()],
    );
    problem.k = 2;
    problem.sigma = Some(1.0);
    problem.tol = 1e-12;
    let outcome = propagate_labels(&problem).map_err(|e| e.to_string())?;
    let wa = (-1.0f64).exp();
    let wb = (-81.0f64).exp();
    let expected = wa / (wa + wb);
    let prediction = outcome
        .predictions
        .first()
        .ok_or("no prediction for the unlabeled node")?;
    if prediction.sense_key.as_deref() != Some("sense/a") {
        return Err(format!("predicted {:?}, not sense/a", prediction.sense_key));
    }
    if (prediction.score - expected).abs() > 1e-9 {
        return Err(format!(
            "score {} is not the closed form {expected}",
            prediction.score
        ));
    }
    Ok(format!(
        "score matches within {:.1e}",
        (prediction.score - expected).abs().max(1e-12)
    ))
}
