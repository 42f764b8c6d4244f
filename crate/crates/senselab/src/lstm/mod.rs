//! The held-out-word LSTM language model.
//!
//! One training example is a sentence with one position held out: the token
//! there is replaced by the TGT placeholder, the LSTM consumes the whole
//! sentence left to right from zero state, and the model predicts the
//! held-out word from a tanh projection of the final hidden state. That
//! projection is also the context vector used downstream for sense
//! embeddings.
//!
//! Backpropagation is written out by hand against the fixed computation
//! graph and verified against central finite differences in the tests.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};

use crate::corpus::{
    encode_for_model, AnnotatedInstance, EncodeOptions, Sentence, Vocabulary, NUM_SPECIALS, PAD,
    TGT, UNK,
};
use crate::numeric::{softmax_xent, Matrix, NumericError};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid model config: {msg}")]
    InvalidConfig { msg: String },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("target position {position} out of range for sentence of length {len}")]
    TargetOutOfRange { position: usize, len: usize },
    #[error("UNK cannot be a held-out target")]
    HeldOutUnk,
    #[error("a sentence must contain at least one token")]
    EmptySentence,
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("corpus has no eligible target positions")]
    NoEligiblePositions,
}

/// Model dimensions and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Vocabulary size V (specials included).
    pub vocab_size: usize,
    /// Embedding and context dimension p.
    pub embed_dim: usize,
    /// LSTM hidden dimension h.
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Sentences are truncated to this many tokens before batching.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 20_000,
            embed_dim: 32,
            hidden_dim: 64,
            learning_rate: 1.0,
            clip_norm: 1.0,
            batch_size: 1,
            epochs: 10,
            seed: 42,
            max_len: 100,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        let err = |msg: String| Err(LstmError::InvalidConfig { msg });
        if self.vocab_size < 1 || self.embed_dim < 1 || self.hidden_dim < 1 {
            return err(format!(
                "dimensions must be ≥ 1 (V={}, p={}, h={})",
                self.vocab_size, self.embed_dim, self.hidden_dim
            ));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return err(format!(
                "batch_size and epochs must be ≥ 1 (batch_size={}, epochs={})",
                self.batch_size, self.epochs
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return err(format!(
                "learning_rate must be finite and > 0 (got {})",
                self.learning_rate
            ));
        }
        if !self.clip_norm.is_finite() || self.clip_norm <= 0.0 {
            return err(format!(
                "clip_norm must be finite and > 0 (got {})",
                self.clip_norm
            ));
        }
        if self.max_len < 1 {
            return err("max_len must be ≥ 1".to_string());
        }
        Ok(())
    }
}

/// All trainable parameters. Gate blocks in every 4h-wide matrix are laid
/// out [input, forget, candidate, output]. Also serves as the gradient
/// container (same shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// V×p input embeddings.
    pub e: Matrix,
    /// p×4h input-to-gates weights.
    pub w_x: Matrix,
    /// h×4h recurrent weights.
    pub w_h: Matrix,
    /// 1×4h gate bias.
    pub b: Matrix,
    /// h×p context projection.
    pub w_c: Matrix,
    /// V×p output embeddings.
    pub o: Matrix,
    /// 1×V output bias.
    pub b_o: Matrix,
}

impl LstmParams {
    /// Samples E, W_x, W_h, W_c, O (in that order) from uniform(−0.05, 0.05)
    /// under a ChaCha8 stream; gate bias is zero except the forget block at
    /// 1.0; output bias is zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<LstmParams, LstmError> {
        config.validate()?;
        let (v, p, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-0.05, 0.05);
        let mut sample = |rows: usize, cols: usize| {
            let mut m = Matrix::zeros(rows, cols);
            for x in m.data_mut() {
                *x = dist.sample(&mut rng);
            }
            m
        };
        let e = sample(v, p);
        let w_x = sample(p, 4 * h);
        let w_h = sample(h, 4 * h);
        let w_c = sample(h, p);
        let o = sample(v, p);
        let mut b = Matrix::zeros(1, 4 * h);
        b.row_mut(0)[h..2 * h].fill(1.0);
        Ok(LstmParams {
            e,
            w_x,
            w_h,
            b,
            w_c,
            o,
            b_o: Matrix::zeros(1, v),
        })
    }

    /// Zero gradients with this model's shapes.
    pub fn zeros_like(&self) -> LstmParams {
        LstmParams {
            e: Matrix::zeros(self.e.rows(), self.e.cols()),
            w_x: Matrix::zeros(self.w_x.rows(), self.w_x.cols()),
            w_h: Matrix::zeros(self.w_h.rows(), self.w_h.cols()),
            b: Matrix::zeros(1, self.b.cols()),
            w_c: Matrix::zeros(self.w_c.rows(), self.w_c.cols()),
            o: Matrix::zeros(self.o.rows(), self.o.cols()),
            b_o: Matrix::zeros(1, self.b_o.cols()),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.e.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.e.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.rows()
    }

    /// Fixed serialization/iteration order: E, W_x, W_h, b, W_c, O, b_o.
    pub fn tensors(&self) -> [&Matrix; 7] {
        [
            &self.e, &self.w_x, &self.w_h, &self.b, &self.w_c, &self.o, &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 7] {
        [
            &mut self.e,
            &mut self.w_x,
            &mut self.w_h,
            &mut self.b,
            &mut self.w_c,
            &mut self.o,
            &mut self.b_o,
        ]
    }

    /// Concatenation of all tensors in [`tensors`](Self::tensors) order;
    /// the finite-difference tests perturb this vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<(), LstmError> {
        let total: usize = self.tensors().iter().map(|t| t.data().len()).sum();
        if flat.len() != total {
            return Err(LstmError::InvalidConfig {
                msg: format!(
                    "flat vector has {} entries, model has {}",
                    flat.len(),
                    total
                ),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// One held-out-word example: a raw encoded sentence and the position to
/// hide. Trailing PAD ids are treated as masked steps.
#[derive(Debug, Clone, Copy)]
pub struct HeldoutExample<'a> {
    pub ids: &'a [u32],
    pub target_position: usize,
}

/// Output of [`forward_heldout`] for one sentence.
#[derive(Debug, Clone)]
pub struct HeldoutOutput {
    pub context: Vec<f64>,
    pub logits: Vec<f64>,
    pub loss: f64,
}

/// The p-dimensional representation of one target occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub values: Vec<f64>,
    /// (sentence or instance id, target position in it).
    pub source: (String, usize),
}

fn validate_example(
    params: &LstmParams,
    ids: &[u32],
    target_position: usize,
) -> Result<(), LstmError> {
    if ids.is_empty() {
        return Err(LstmError::EmptySentence);
    }
    if target_position >= ids.len() {
        return Err(LstmError::TargetOutOfRange {
            position: target_position,
            len: ids.len(),
        });
    }
    let v = params.vocab_size() as u32;
    for &id in ids {
        if id >= v {
            return Err(LstmError::IdOutOfRange {
                id,
                vocab_size: v as usize,
            });
        }
    }
    Ok(())
}

/// Per-step forward cache for one batch.
struct StepCache {
    ids: Vec<u32>,
    gate_i: Matrix,
    gate_f: Matrix,
    gate_g: Matrix,
    gate_o: Matrix,
    tanh_c: Matrix,
}

struct Forward {
    steps: Vec<StepCache>,
    /// h_0..h_T (index 0 is the zero initial state).
    hs: Vec<Matrix>,
    cs: Vec<Matrix>,
    context: Matrix,
    logits: Matrix,
    targets: Vec<usize>,
}

fn run_forward(params: &LstmParams, examples: &[HeldoutExample<'_>]) -> Result<Forward, LstmError> {
    if examples.is_empty() {
        return Err(LstmError::EmptyCorpus);
    }
    for ex in examples {
        validate_example(params, ex.ids, ex.target_position)?;
    }
    let batch = examples.len();
    let t_max = examples.iter().map(|ex| ex.ids.len()).max().unwrap();
    let h = params.hidden_dim();

    let targets: Vec<usize> = examples
        .iter()
        .map(|ex| ex.ids[ex.target_position] as usize)
        .collect();
    // Input grid with the held-out token replaced by TGT and short examples
    // padded out to t_max.
    let ids_at = |ex: &HeldoutExample<'_>, t: usize| -> u32 {
        if t >= ex.ids.len() {
            PAD
        } else if t == ex.target_position {
            TGT
        } else {
            ex.ids[t]
        }
    };

    let mut hs = vec![Matrix::zeros(batch, h)];
    let mut cs = vec![Matrix::zeros(batch, h)];
    let mut steps = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let ids: Vec<u32> = examples.iter().map(|ex| ids_at(ex, t)).collect();
        let mut x = Matrix::zeros(batch, params.embed_dim());
        for (bi, &id) in ids.iter().enumerate() {
            x.row_mut(bi).copy_from_slice(params.e.row(id as usize));
        }
        let mut a = x.matmul(&params.w_x)?;
        a.add_assign(&hs[t].matmul(&params.w_h)?)?;
        for bi in 0..batch {
            let bias = params.b.row(0);
            for (aj, bj) in a.row_mut(bi).iter_mut().zip(bias) {
                *aj += bj;
            }
        }
        let gate_i = cols(&a, 0, h).sigmoid();
        let gate_f = cols(&a, h, 2 * h).sigmoid();
        let gate_g = cols(&a, 2 * h, 3 * h).tanh();
        let gate_o = cols(&a, 3 * h, 4 * h).sigmoid();

        let mut c = Matrix::zeros(batch, h);
        for (((c, (f, cp)), i), g) in c
            .data_mut()
            .iter_mut()
            .zip(gate_f.data().iter().zip(cs[t].data()))
            .zip(gate_i.data())
            .zip(gate_g.data())
        {
            *c = f * cp + i * g;
        }
        let tanh_c = c.tanh();
        let mut h_t = Matrix::zeros(batch, h);
        for ((h, o), tc) in h_t
            .data_mut()
            .iter_mut()
            .zip(gate_o.data())
            .zip(tanh_c.data())
        {
            *h = o * tc;
        }
        // PAD steps are identity: state rows carry through untouched.
        for (bi, &id) in ids.iter().enumerate() {
            if id == PAD {
                let (hp, cp) = (hs[t].row(bi).to_vec(), cs[t].row(bi).to_vec());
                h_t.row_mut(bi).copy_from_slice(&hp);
                c.row_mut(bi).copy_from_slice(&cp);
            }
        }
        steps.push(StepCache {
            ids,
            gate_i,
            gate_f,
            gate_g,
            gate_o,
            tanh_c,
        });
        hs.push(h_t);
        cs.push(c);
    }

    let context = hs[t_max].matmul(&params.w_c)?.tanh();
    let mut logits = context.matmul_bt(&params.o)?;
    for bi in 0..batch {
        let bias = params.b_o.row(0);
        for (lj, bj) in logits.row_mut(bi).iter_mut().zip(bias) {
            *lj += bj;
        }
    }
    Ok(Forward {
        steps,
        hs,
        cs,
        context,
        logits,
        targets,
    })
}

fn check_targets_not_unk(examples: &[HeldoutExample<'_>]) -> Result<(), LstmError> {
    for ex in examples {
        if ex.ids.get(ex.target_position) == Some(&UNK) {
            return Err(LstmError::HeldOutUnk);
        }
    }
    Ok(())
}

/// Mean held-out cross-entropy of a batch, forward only. This is the
/// function the finite-difference tests differentiate.
pub fn batch_heldout_loss(
    params: &LstmParams,
    examples: &[HeldoutExample<'_>],
) -> Result<f64, LstmError> {
    check_targets_not_unk(examples)?;
    let fwd = run_forward(params, examples)?;
    let (loss, _) = softmax_xent(&fwd.logits, &fwd.targets)?;
    Ok(loss)
}

/// Mean batch loss plus its gradient w.r.t. every parameter.
pub fn batch_heldout_grads(
    params: &LstmParams,
    examples: &[HeldoutExample<'_>],
) -> Result<(f64, LstmParams), LstmError> {
    check_targets_not_unk(examples)?;
    let fwd = run_forward(params, examples)?;
    let (loss, dlogits) = softmax_xent(&fwd.logits, &fwd.targets)?;
    let batch = examples.len();
    let t_max = fwd.steps.len();
    let h = params.hidden_dim();
    let mut grads = params.zeros_like();

    // Head: logits = ctx·Oᵀ + b_o, ctx = tanh(h_T·W_c).
    for bi in 0..batch {
        grads.o.add_outer(dlogits.row(bi), fwd.context.row(bi));
        for (gb, dl) in grads.b_o.row_mut(0).iter_mut().zip(dlogits.row(bi)) {
            *gb += dl;
        }
    }
    let dctx = dlogits.matmul(&params.o)?;
    let mut du = Matrix::zeros(batch, params.embed_dim());
    for ((du, dc), ctx) in du
        .data_mut()
        .iter_mut()
        .zip(dctx.data())
        .zip(fwd.context.data())
    {
        *du = dc * (1.0 - ctx * ctx);
    }
    for bi in 0..batch {
        grads.w_c.add_outer(fwd.hs[t_max].row(bi), du.row(bi));
    }
    let mut dh = du.matmul_bt(&params.w_c)?;
    let mut dc = Matrix::zeros(batch, h);

    for t in (0..t_max).rev() {
        let step = &fwd.steps[t];
        let c_prev = &fwd.cs[t];
        let h_prev = &fwd.hs[t];

        // dc_t folds the output-gate path into the running cell gradient.
        let mut dc_t = Matrix::zeros(batch, h);
        for ((((dct, dc), dh), o), tc) in dc_t
            .data_mut()
            .iter_mut()
            .zip(dc.data())
            .zip(dh.data())
            .zip(step.gate_o.data())
            .zip(step.tanh_c.data())
        {
            *dct = dc + dh * o * (1.0 - tc * tc);
        }

        let mut da = Matrix::zeros(batch, 4 * h);
        for bi in 0..batch {
            if step.ids[bi] == PAD {
                continue; // identity step: no parameter gradient
            }
            let (i, f, g, o) = (
                step.gate_i.row(bi),
                step.gate_f.row(bi),
                step.gate_g.row(bi),
                step.gate_o.row(bi),
            );
            let (dct, dhb, tc, cp) = (
                dc_t.row(bi),
                dh.row(bi),
                step.tanh_c.row(bi),
                c_prev.row(bi),
            );
            let row = da.row_mut(bi);
            for j in 0..h {
                row[j] = dct[j] * g[j] * i[j] * (1.0 - i[j]);
                row[h + j] = dct[j] * cp[j] * f[j] * (1.0 - f[j]);
                row[2 * h + j] = dct[j] * i[j] * (1.0 - g[j] * g[j]);
                row[3 * h + j] = dhb[j] * tc[j] * o[j] * (1.0 - o[j]);
            }
        }

        let dx = da.matmul_bt(&params.w_x)?;
        let mut dh_prev = da.matmul_bt(&params.w_h)?;
        let mut dc_prev = Matrix::zeros(batch, h);
        for bi in 0..batch {
            if step.ids[bi] == PAD {
                // Identity step: state gradients pass straight through.
                let (dhb, dcb) = (dh.row(bi).to_vec(), dc.row(bi).to_vec());
                dh_prev.row_mut(bi).copy_from_slice(&dhb);
                dc_prev.row_mut(bi).copy_from_slice(&dcb);
                continue;
            }
            for ((dcp, dct), f) in dc_prev
                .row_mut(bi)
                .iter_mut()
                .zip(dc_t.row(bi))
                .zip(step.gate_f.row(bi))
            {
                *dcp = dct * f;
            }
            grads
                .w_x
                .add_outer(params.e.row(step.ids[bi] as usize), da.row(bi));
            grads.w_h.add_outer(h_prev.row(bi), da.row(bi));
            for (gb, d) in grads.b.row_mut(0).iter_mut().zip(da.row(bi)) {
                *gb += d;
            }
            let e_row = grads.e.row_mut(step.ids[bi] as usize);
            for (ge, d) in e_row.iter_mut().zip(dx.row(bi)) {
                *ge += d;
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok((loss, grads))
}

/// Runs one sentence with the token at `target_position` held out; returns
/// the context vector, the full logits, and the cross-entropy loss against
/// the held-out word.
pub fn forward_heldout(
    params: &LstmParams,
    sentence: &Sentence,
    target_position: usize,
) -> Result<HeldoutOutput, LstmError> {
    let example = HeldoutExample {
        ids: sentence.ids(),
        target_position,
    };
    check_targets_not_unk(std::slice::from_ref(&example))?;
    let fwd = run_forward(params, &[example])?;
    let (loss, _) = softmax_xent(&fwd.logits, &fwd.targets)?;
    Ok(HeldoutOutput {
        context: fwd.context.row(0).to_vec(),
        logits: fwd.logits.row(0).to_vec(),
        loss,
    })
}

/// Context vector for arbitrary ids; no loss is computed, so the token at
/// `target_position` may be anything (it is replaced by TGT regardless).
pub fn context_of(
    params: &LstmParams,
    ids: &[u32],
    target_position: usize,
) -> Result<Vec<f64>, LstmError> {
    let fwd = run_forward(
        params,
        &[HeldoutExample {
            ids,
            target_position,
        }],
    )?;
    Ok(fwd.context.row(0).to_vec())
}

/// Encodes an annotated instance under `vocab` and returns its context
/// vector. Pure: parameters are untouched.
pub fn extract_context(
    params: &LstmParams,
    instance: &AnnotatedInstance,
    vocab: &Vocabulary,
    opts: &EncodeOptions,
) -> Result<ContextVector, LstmError> {
    let (sentence, target) = encode_for_model(instance, vocab, opts);
    let values = context_of(params, sentence.ids(), target)?;
    Ok(ContextVector {
        values,
        source: (instance.instance_id.clone(), instance.target_position),
    })
}

/// Scales gradients so the global L2 norm over all tensors is at most
/// `clip_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut LstmParams, clip_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .map(|t| t.sq_sum())
        .sum::<f64>()
        .sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for t in grads.tensors_mut() {
            t.scale_in_place(scale);
        }
    }
    norm
}

fn sgd_step(params: &mut LstmParams, grads: &LstmParams, learning_rate: f64) {
    let gs = grads.tensors();
    for (t, g) in params.tensors_mut().into_iter().zip(gs) {
        for (p, gv) in t.data_mut().iter_mut().zip(g.data()) {
            *p -= learning_rate * gv;
        }
    }
}

/// UNK and EOS are never held out; TGT and PAD cannot occur in encoded
/// text, but are excluded for safety.
fn eligible_positions(ids: &[u32]) -> Vec<usize> {
    ids.iter()
        .enumerate()
        .filter(|(_, &id)| id >= NUM_SPECIALS as u32)
        .map(|(i, _)| i)
        .collect()
}

/// End-of-epoch progress for logging.
#[derive(Debug, Clone, Copy)]
pub struct TrainProgress {
    pub epoch: usize,
    pub epochs: usize,
    pub mean_loss: f64,
}

/// Trains a fresh model on the corpus: per epoch, sentences are shuffled by
/// a seeded generator and one eligible position per sentence is held out;
/// mini-batches are padded to equal length and parameters updated by SGD
/// with global-norm clipping. Returns the parameters and the per-epoch mean
/// loss. Bit-deterministic for a fixed config and corpus.
pub fn train(
    config: &ModelConfig,
    corpus: &[Sentence],
    vocab: &Vocabulary,
    mut observer: impl FnMut(TrainProgress),
) -> Result<(LstmParams, Vec<f64>), LstmError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(LstmError::EmptyCorpus);
    }
    if config.vocab_size != vocab.len() {
        return Err(LstmError::InvalidConfig {
            msg: format!(
                "config vocab_size {} does not match vocabulary size {}",
                config.vocab_size,
                vocab.len()
            ),
        });
    }
    let sentences: Vec<&[u32]> = corpus
        .iter()
        .map(|s| &s.ids()[..s.len().min(config.max_len)])
        .collect();
    let eligible: Vec<Vec<usize>> = sentences
        .iter()
        .map(|ids| eligible_positions(ids))
        .collect();
    let trainable: Vec<usize> = (0..sentences.len())
        .filter(|&i| !eligible[i].is_empty())
        .collect();
    if trainable.is_empty() {
        return Err(LstmError::NoEligiblePositions);
    }

    let mut params = LstmParams::init(config, config.seed)?;
    // Init consumed a stream seeded with `seed`; shuffling/sampling gets its
    // own offset stream so the two never alias.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order = trainable;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let examples: Vec<HeldoutExample<'_>> = order
            .iter()
            .map(|&si| {
                let positions = &eligible[si];
                let target_position = positions[rng.gen_range(0..positions.len())];
                HeldoutExample {
                    ids: sentences[si],
                    target_position,
                }
            })
            .collect();
        let mut total = 0.0;
        for chunk in examples.chunks(config.batch_size) {
            let (loss, mut grads) = batch_heldout_grads(&params, chunk)?;
            clip_global_norm(&mut grads, config.clip_norm);
            sgd_step(&mut params, &grads, config.learning_rate);
            total += loss * chunk.len() as f64;
        }
        let mean_loss = total / examples.len() as f64;
        curve.push(mean_loss);
        observer(TrainProgress {
            epoch,
            epochs: config.epochs,
            mean_loss,
        });
    }
    Ok((params, curve))
}

/// exp(mean held-out cross-entropy) with one deterministic position per
/// sentence: the middle entry of its eligible-position list. Sentences with
/// no eligible position are skipped.
pub fn perplexity(params: &LstmParams, corpus: &[Sentence]) -> Result<f64, LstmError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for sentence in corpus {
        let positions = eligible_positions(sentence.ids());
        if positions.is_empty() {
            continue;
        }
        let target_position = positions[positions.len() / 2];
        let loss = batch_heldout_loss(
            params,
            &[HeldoutExample {
                ids: sentence.ids(),
                target_position,
            }],
        )?;
        total += loss;
        count += 1;
    }
    if count == 0 {
        return Err(LstmError::NoEligiblePositions);
    }
    Ok((total / count as f64).exp())
}

fn cols(m: &Matrix, c0: usize, c1: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), c1 - c0);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[c0..c1]);
    }
    out
}

#[cfg(test)]
mod tests;
