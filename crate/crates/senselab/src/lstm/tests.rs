use super::*;
use crate::corpus::EOS;
use crate::numeric::{grad_check, DEFAULT_EPSILON};
use proptest::prelude::*;

fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        embed_dim: 4,
        hidden_dim: 6,
        learning_rate: 0.5,
        clip_norm: 5.0,
        batch_size: 2,
        epochs: 1,
        seed,
        max_len: 100,
    }
}

fn tiny_params(seed: u64) -> LstmParams {
    LstmParams::init(&tiny_config(seed), seed).unwrap()
}

fn sentence(ids: &[u32]) -> Sentence {
    Sentence::new(ids.to_vec()).unwrap()
}

/// Builds a vocabulary whose ids cover `extra` surface words.
fn letters_vocab(n: usize) -> Vocabulary {
    let words: Vec<Vec<String>> = vec![(0..n).map(|i| format!("w{i}")).collect::<Vec<_>>()];
    Vocabulary::build(&words, n + NUM_SPECIALS, 1).unwrap()
}

#[test]
fn init_is_seed_deterministic() {
    assert_eq!(tiny_params(9), tiny_params(9));
    assert_ne!(tiny_params(9), tiny_params(10));
}

#[test]
fn init_bias_layout_and_weight_range() {
    let params = tiny_params(3);
    let h = params.hidden_dim();
    let b = params.b.row(0);
    assert!(b[..h].iter().all(|&x| x == 0.0));
    assert!(b[h..2 * h].iter().all(|&x| x == 1.0));
    assert!(b[2 * h..].iter().all(|&x| x == 0.0));
    assert!(params.b_o.data().iter().all(|&x| x == 0.0));
    for m in [&params.e, &params.w_x, &params.w_h, &params.w_c, &params.o] {
        assert!(m.data().iter().all(|&x| x.abs() < 0.05));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        ModelConfig {
            vocab_size: 0,
            ..tiny_config(0)
        },
        ModelConfig {
            embed_dim: 0,
            ..tiny_config(0)
        },
        ModelConfig {
            epochs: 0,
            ..tiny_config(0)
        },
        ModelConfig {
            learning_rate: 0.0,
            ..tiny_config(0)
        },
        ModelConfig {
            learning_rate: f64::NAN,
            ..tiny_config(0)
        },
        ModelConfig {
            clip_norm: -1.0,
            ..tiny_config(0)
        },
        ModelConfig {
            max_len: 0,
            ..tiny_config(0)
        },
    ] {
        assert!(
            matches!(bad.validate(), Err(LstmError::InvalidConfig { .. })),
            "{bad:?}"
        );
    }
}

#[test]
fn forward_output_shapes() {
    let params = tiny_params(1);
    let out = forward_heldout(&params, &sentence(&[4, 5, 6, EOS]), 1).unwrap();
    assert_eq!(out.context.len(), params.embed_dim());
    assert_eq!(out.logits.len(), params.vocab_size());
    assert!(out.loss.is_finite());
}

#[test]
fn zero_output_embeddings_give_uniform_loss() {
    let mut params = tiny_params(2);
    params.o.fill(0.0);
    let out = forward_heldout(&params, &sentence(&[4, 5, 6, EOS]), 1).unwrap();
    let ln_v = (params.vocab_size() as f64).ln();
    assert!(
        (out.loss - ln_v).abs() < 1e-12,
        "loss {} vs ln V {}",
        out.loss,
        ln_v
    );
}

#[test]
fn invalid_examples_are_rejected() {
    let params = tiny_params(4);
    assert!(matches!(
        forward_heldout(&params, &sentence(&[4, UNK, 6]), 1),
        Err(LstmError::HeldOutUnk)
    ));
    assert!(matches!(
        forward_heldout(&params, &sentence(&[4, 5]), 2),
        Err(LstmError::TargetOutOfRange {
            position: 2,
            len: 2
        })
    ));
    assert!(matches!(
        forward_heldout(&params, &sentence(&[4, 99]), 0),
        Err(LstmError::IdOutOfRange { id: 99, .. })
    ));
    assert!(matches!(
        context_of(&params, &[], 0),
        Err(LstmError::EmptySentence)
    ));
}

#[test]
fn gradients_match_finite_differences() {
    for seed in [11, 12, 13] {
        let params = tiny_params(seed);
        let ids = [4u32, 5, 6, 7, EOS];
        let examples = [HeldoutExample {
            ids: &ids,
            target_position: 1,
        }];
        let (_, grads) = batch_heldout_grads(&params, &examples).unwrap();
        let flat = params.flatten();
        let scratch = params.clone();
        let report = grad_check(
            "heldout loss",
            |point| {
                let mut p = scratch.clone();
                p.assign_from_flat(point).unwrap();
                batch_heldout_loss(&p, &examples).unwrap()
            },
            &flat,
            &grads.flatten(),
            DEFAULT_EPSILON,
        );
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn padded_batch_gradients_match_finite_differences() {
    let params = tiny_params(21);
    let short = [4u32, 5, EOS];
    let long = [6u32, 7, 8, 9, 10, 11, EOS];
    let examples = [
        HeldoutExample {
            ids: &short,
            target_position: 0,
        },
        HeldoutExample {
            ids: &long,
            target_position: 4,
        },
    ];
    let (_, grads) = batch_heldout_grads(&params, &examples).unwrap();
    let report = grad_check(
        "padded batch loss",
        |point| {
            let mut p = params.clone();
            p.assign_from_flat(point).unwrap();
            batch_heldout_loss(&p, &examples).unwrap()
        },
        &params.flatten(),
        &grads.flatten(),
        DEFAULT_EPSILON,
    );
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn trailing_pad_changes_nothing() {
    let params = tiny_params(31);
    let ids = [4u32, 5, 6, 7, EOS];
    let mut padded = ids.to_vec();
    padded.extend([PAD, PAD, PAD]);

    let plain = forward_heldout(&params, &sentence(&ids), 2).unwrap();
    let with_pad = forward_heldout(&params, &sentence(&padded), 2).unwrap();
    assert_eq!(plain.loss, with_pad.loss);
    assert_eq!(plain.context, with_pad.context);
    assert_eq!(plain.logits, with_pad.logits);

    let (l1, g1) = batch_heldout_grads(
        &params,
        &[HeldoutExample {
            ids: &ids,
            target_position: 2,
        }],
    )
    .unwrap();
    let (l2, g2) = batch_heldout_grads(
        &params,
        &[HeldoutExample {
            ids: &padded,
            target_position: 2,
        }],
    )
    .unwrap();
    assert_eq!(l1, l2);
    for (a, b) in g1.tensors().iter().zip(g2.tensors().iter()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn held_out_word_reaches_loss_only_through_the_label() {
    let params = tiny_params(41);
    let a = [4u32, 5, 6, 7, EOS];
    let b = [4u32, 5, 9, 7, EOS]; // differs only at the held-out slot
    assert_eq!(
        context_of(&params, &a, 2).unwrap(),
        context_of(&params, &b, 2).unwrap()
    );
}

#[test]
fn clipping_caps_the_global_norm() {
    let params = tiny_params(5);
    let mut grads = params.zeros_like();
    grads.w_x.fill(3.0);
    grads.e.fill(-2.0);
    let before = clip_global_norm(&mut grads, 5.0);
    assert!(before > 5.0);
    let after = grads
        .tensors()
        .iter()
        .map(|t| t.sq_sum())
        .sum::<f64>()
        .sqrt();
    assert!(after <= 5.0 + 1e-9, "post-clip norm {after}");

    let mut small = params.zeros_like();
    small.w_h.fill(1e-3);
    let reference = small.clone();
    clip_global_norm(&mut small, 5.0);
    assert_eq!(small, reference);
}

/// 50 patterned sentences: each repeats one word, so the held-out word is
/// recoverable from its neighbors.
fn patterned_corpus(vocab: &Vocabulary) -> Vec<Sentence> {
    (0..50)
        .map(|i| {
            let w = format!("w{}", i % 10);
            vocab.encode(&[w.clone(), w.clone(), w.clone(), w])
        })
        .collect()
}

#[test]
fn training_overfits_a_small_learnable_corpus() {
    let vocab = letters_vocab(10);
    let corpus: Vec<Sentence> = (0..50)
        .map(|i| vocab.encode(&vec![format!("w{}", i % 10); 8]))
        .collect();
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 16,
        hidden_dim: 32,
        learning_rate: 1.0,
        clip_norm: 1.0,
        batch_size: 1,
        epochs: 200,
        seed: 7,
        max_len: 20,
    };
    let (params, curve) = train(&config, &corpus, &vocab, |_| {}).unwrap();
    assert!(
        curve[29] < 0.5 * curve[0],
        "epoch 30 loss {} has not halved from {}",
        curve[29],
        curve[0]
    );
    let ppl = perplexity(&params, &corpus).unwrap();
    assert!(ppl < 1.5, "perplexity {ppl} after 200 epochs");
}

#[test]
fn training_is_deterministic() {
    let vocab = letters_vocab(10);
    let corpus = patterned_corpus(&vocab);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 6,
        hidden_dim: 6,
        epochs: 3,
        seed: 99,
        ..tiny_config(99)
    };
    let (p1, c1) = train(&config, &corpus, &vocab, |_| {}).unwrap();
    let (p2, c2) = train(&config, &corpus, &vocab, |_| {}).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(p1, p2);
}

#[test]
fn training_rejects_degenerate_corpora() {
    let vocab = letters_vocab(10);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..tiny_config(0)
    };
    assert!(matches!(
        train(&config, &[], &vocab, |_| {}),
        Err(LstmError::EmptyCorpus)
    ));
    let unk_only = vec![sentence(&[UNK, EOS]), sentence(&[UNK, UNK, EOS])];
    assert!(matches!(
        train(&config, &unk_only, &vocab, |_| {}),
        Err(LstmError::NoEligiblePositions)
    ));
}

#[test]
fn training_checks_vocab_size() {
    let vocab = letters_vocab(10);
    let config = tiny_config(0); // vocab_size 12 ≠ 14
    let corpus = vec![sentence(&[4, 5, EOS])];
    assert!(matches!(
        train(&config, &corpus, &vocab, |_| {}),
        Err(LstmError::InvalidConfig { .. })
    ));
}

#[test]
fn uniform_model_perplexity_is_vocab_size() {
    let mut params = tiny_params(6);
    params.o.fill(0.0);
    let corpus = vec![sentence(&[4, 5, 6, EOS]), sentence(&[7, 8, EOS])];
    let ppl = perplexity(&params, &corpus).unwrap();
    let v = params.vocab_size() as f64;
    assert!((ppl - v).abs() < 1e-9 * v, "perplexity {ppl} vs V {v}");
}

#[test]
fn perplexity_is_at_least_one() {
    let params = tiny_params(7);
    let corpus = vec![sentence(&[4, 5, 6, 7, EOS])];
    assert!(perplexity(&params, &corpus).unwrap() >= 1.0);
}

#[test]
fn perplexity_needs_an_eligible_position() {
    let params = tiny_params(8);
    assert!(matches!(
        perplexity(&params, &[sentence(&[UNK, EOS])]),
        Err(LstmError::NoEligiblePositions)
    ));
}

#[test]
fn extract_context_is_pure_and_position_sensitive() {
    let vocab = letters_vocab(10);
    let corpus = patterned_corpus(&vocab);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: 8,
        hidden_dim: 10,
        epochs: 5,
        seed: 23,
        ..tiny_config(23)
    };
    let (params, _) = train(&config, &corpus, &vocab, |_| {}).unwrap();
    let instance = |pos: usize| AnnotatedInstance {
        instance_id: format!("i{pos}"),
        lemma: "w1".to_string(),
        pos: crate::corpus::Pos::Noun,
        tokens: vec!["w1".into(), "w2".into(), "w3".into(), "w4".into()],
        target_position: pos,
        gold_keys: Default::default(),
    };
    let opts = EncodeOptions::default();
    let a1 = extract_context(&params, &instance(1), &vocab, &opts).unwrap();
    let a2 = extract_context(&params, &instance(1), &vocab, &opts).unwrap();
    assert_eq!(a1.values, a2.values);
    assert_eq!(a1.values.len(), config.embed_dim);
    assert_eq!(a1.source, ("i1".to_string(), 1));
    let b = extract_context(&params, &instance(2), &vocab, &opts).unwrap();
    assert_ne!(a1.values, b.values);
}

#[test]
fn extract_context_accepts_out_of_vocabulary_targets() {
    let vocab = letters_vocab(10);
    let params = LstmParams::init(
        &ModelConfig {
            vocab_size: vocab.len(),
            ..tiny_config(1)
        },
        1,
    )
    .unwrap();
    let instance = AnnotatedInstance {
        instance_id: "oov".to_string(),
        lemma: "zzz".to_string(),
        pos: crate::corpus::Pos::Noun,
        tokens: vec!["w1".into(), "zzz".into(), "w2".into()],
        target_position: 1,
        gold_keys: Default::default(),
    };
    let ctx = extract_context(&params, &instance, &vocab, &EncodeOptions::default()).unwrap();
    assert_eq!(ctx.values.len(), params.embed_dim());
}

mod checkpoints {
    use super::super::checkpoint::{decode, encode};
    use super::*;

    fn digest(byte: u8) -> [u8; 32] {
        [byte; 32]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = tiny_params(51);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&params, &tiny_config(51), digest(7), &path).unwrap();
        let (back, meta) = load_checkpoint(&path, digest(7)).unwrap();
        assert_eq!(params, back);
        assert_eq!(
            meta,
            CheckpointMeta {
                vocab_size: 12,
                embed_dim: 4,
                hidden_dim: 6,
                seed: 51,
                vocab_digest: digest(7),
            }
        );
    }

    #[test]
    fn corrupted_magic_is_distinct() {
        let mut bytes = encode(&tiny_params(1), 1, digest(0));
        bytes[0] = b'X';
        assert!(matches!(
            decode(&bytes, digest(0)),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let mut bytes = encode(&tiny_params(1), 1, digest(0));
        bytes[6] = 9; // version field follows the 6-byte magic
        assert!(matches!(
            decode(&bytes, digest(0)),
            Err(CheckpointError::VersionMismatch { found: 9 })
        ));
    }

    #[test]
    fn digest_mismatch_is_distinct() {
        let bytes = encode(&tiny_params(1), 1, digest(0));
        assert!(matches!(
            decode(&bytes, digest(1)),
            Err(CheckpointError::DigestMismatch)
        ));
    }

    #[test]
    fn truncation_is_distinct() {
        let bytes = encode(&tiny_params(1), 1, digest(0));
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            decode(cut, digest(0)),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(
            decode(&bytes[..3], digest(0)),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn payload_corruption_fails_the_checksum() {
        let mut bytes = encode(&tiny_params(1), 1, digest(0));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(
            decode(&bytes, digest(0)),
            Err(CheckpointError::ChecksumMismatch)
        ));
    }

    #[test]
    fn same_seed_training_yields_identical_checkpoint_bytes() {
        let vocab = letters_vocab(6);
        let corpus: Vec<Sentence> = (0..8)
            .map(|i| vocab.encode(&[format!("w{}", i % 6), format!("w{}", (i + 1) % 6)]))
            .collect();
        let config = ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 4,
            hidden_dim: 5,
            epochs: 4,
            seed: 77,
            ..tiny_config(77)
        };
        let run = || {
            let (params, _) = train(&config, &corpus, &vocab, |_| {}).unwrap();
            encode(&params, config.seed, vocab.digest())
        };
        assert_eq!(run(), run());
    }
}

proptest! {
    /// Trailing PAD never changes the loss or the context, for any example.
    #[test]
    fn prop_trailing_pad_is_invisible(
        body in proptest::collection::vec(4u32..12, 1..8),
        target_index: prop::sample::Index,
        pads in 1usize..4,
        seed in 0u64..50,
    ) {
        let params = tiny_params(seed);
        let target_position = target_index.index(body.len());
        let mut padded = body.clone();
        padded.extend(std::iter::repeat_n(PAD, pads));
        let a = forward_heldout(&params, &sentence(&body), target_position).unwrap();
        let b = forward_heldout(&params, &sentence(&padded), target_position).unwrap();
        prop_assert_eq!(a.loss, b.loss);
        prop_assert_eq!(a.context, b.context);
    }

    /// The loss is finite and non-negative for arbitrary valid examples.
    #[test]
    fn prop_loss_is_finite_and_nonnegative(
        body in proptest::collection::vec(4u32..12, 1..10),
        target_index: prop::sample::Index,
        seed in 0u64..50,
    ) {
        let params = tiny_params(seed);
        let target_position = target_index.index(body.len());
        let out = forward_heldout(&params, &sentence(&body), target_position).unwrap();
        prop_assert!(out.loss.is_finite());
        prop_assert!(out.loss >= 0.0);
        prop_assert_eq!(out.context.len(), params.embed_dim());
    }
}
