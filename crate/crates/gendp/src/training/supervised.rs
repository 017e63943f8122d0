//! Teacher-forced training of the full pipeline.

use rand::seq::SliceRandom;

use crate::baselines::{classifier_features, AnyModel};
use crate::kb::encode_count;
use crate::model::{encode_context, run_policy, track_state, PolicyMode, TrackMode};
use crate::numerics::rng::{stream, tags};
use crate::numerics::{AdamConfig, AdamState, GradAccum, NodeId, NumericsError, ParamSet, Tape};

use super::{EarlyStopper, TrainConfig, TrainingError, TurnExample};

/// Cross-entropy of one turn: tracker loss over the gold belief tokens
/// plus the action head's loss, all teacher-forced, with k_t taken from
/// the gold belief's KB count.
fn turn_loss(
    tape: &mut Tape,
    ps: &ParamSet,
    model: &AnyModel,
    ex: &TurnExample,
) -> Result<NodeId, NumericsError> {
    let enc_out = encode_context(tape, ps, model.enc(), &ex.ctx_ids)?;
    let trk_out = track_state(
        tape,
        ps,
        model.trk(),
        model.enc().embed,
        &enc_out,
        TrackMode::Teacher(&ex.gold_belief_ids),
    )?;
    let k_t = encode_count(ex.kb_count);

    let mut terms = trk_out.losses;
    match model {
        AnyModel::Gdp(m) => {
            let (keys_u, keys_d) = m.policy_keys(tape, ps, &enc_out, &trk_out.h_d)?;
            let run = run_policy(
                tape,
                ps,
                &m.pol,
                m.enc.embed,
                enc_out.final_state,
                &keys_u,
                &keys_d,
                &k_t,
                PolicyMode::Teacher(&ex.gold_action_ids),
                ex.gold_action_ids.len(),
            )?;
            terms.extend(run.losses);
        }
        AnyModel::E2ecm(m) => {
            let trk_final = *trk_out.h_d.last().expect("teacher tracking emits states");
            let feat = classifier_features(tape, enc_out.final_state, trk_final, &k_t)?;
            terms.push(m.head.loss(tape, ps, feat, &ex.gold_action)?);
        }
        AnyModel::Cdm(m) => {
            let trk_final = *trk_out.h_d.last().expect("teacher tracking emits states");
            let feat = classifier_features(tape, enc_out.final_state, trk_final, &k_t)?;
            terms.push(m.head.loss(tape, ps, feat, &ex.gold_action)?);
        }
    }

    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// Mean turn loss over a batch, on one tape.
pub fn supervised_loss(
    tape: &mut Tape,
    ps: &ParamSet,
    model: &AnyModel,
    batch: &[&TurnExample],
) -> Result<NodeId, NumericsError> {
    if batch.is_empty() {
        return Err(NumericsError::InvalidArgument("empty batch".into()));
    }
    let mut total = turn_loss(tape, ps, model, batch[0])?;
    for ex in &batch[1..] {
        let l = turn_loss(tape, ps, model, ex)?;
        total = tape.add(total, l)?;
    }
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

/// Mean loss over a whole split, forward-only, in bounded-size chunks.
pub fn mean_loss(
    ps: &ParamSet,
    model: &AnyModel,
    examples: &[TurnExample],
    chunk_size: usize,
) -> Result<f64, NumericsError> {
    if examples.is_empty() {
        return Err(NumericsError::InvalidArgument("empty split".into()));
    }
    let mut sum = 0.0;
    for chunk in examples.chunks(chunk_size.max(1)) {
        let refs: Vec<&TurnExample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let loss = supervised_loss(&mut tape, ps, model, &refs)?;
        sum += tape.value(loss)[0] * refs.len() as f64;
    }
    Ok(sum / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<EpochStat>,
    /// Epoch whose parameters were kept (0 = the initialization).
    pub best_epoch: usize,
    pub best_dev_loss: f64,
}

/// Epoch loop with shuffled minibatches, Adam, and dev-loss early
/// stopping. On return `ps` holds the best-dev parameters seen —
/// including the initialization if training never improved on it.
pub fn train_supervised(
    ps: &mut ParamSet,
    model: &AnyModel,
    train: &[TurnExample],
    dev: &[TurnExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainingError> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(TrainingError::InvalidConfig(
            "train and dev splits must be non-empty".into(),
        ));
    }

    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr_supervised, cfg.weight_decay), ps);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let initial_dev = mean_loss(ps, model, dev, cfg.batch_size)?;
    if !initial_dev.is_finite() {
        return Err(TrainingError::Diverged { epoch: 0 });
    }
    stopper.observe(initial_dev);
    let mut best = (initial_dev, ps.clone(), 0usize);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = stream(cfg.seed, &[tags::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);

        let mut train_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TurnExample> = chunk.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new();
            let loss = supervised_loss(&mut tape, ps, model, &batch)?;
            let loss_v = tape.value(loss)[0];
            if !loss_v.is_finite() {
                return Err(TrainingError::Diverged { epoch });
            }
            let mut acc = GradAccum::new(ps);
            tape.backward(loss, &mut acc)?;
            drop(tape);
            opt.step(ps, &acc)?;
            train_sum += loss_v;
            batches += 1;
        }

        let dev_loss = mean_loss(ps, model, dev, cfg.batch_size)?;
        if !dev_loss.is_finite() {
            return Err(TrainingError::Diverged { epoch });
        }
        curve.push(EpochStat {
            epoch,
            train_loss: train_sum / batches as f64,
            dev_loss,
        });

        let (improved, stop) = stopper.observe(dev_loss);
        if improved {
            best = (dev_loss, ps.clone(), epoch);
        }
        if stop {
            break;
        }
    }

    let (best_dev_loss, snapshot, best_epoch) = best;
    *ps = snapshot;
    Ok(TrainOutcome { curve, best_epoch, best_dev_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{act_frequency_order, slot_order, CdmModel, E2ecmModel};
    use crate::corpus::{parse_corpus, Corpus, Split, Vocabulary};
    use crate::model::{GdpModel, ModelConfig};
    use crate::training::prepare_examples;

    const CORPUS: &str = concat!(
        r#"{"turns":[{"user":"cheap food please","belief":["cheap"],"action":[["request","food"]],"response":"what kind of food ?","kb_count":4},{"user":"french","belief":["cheap","french"],"action":[["offer","name","name_slot"]],"response":"name_slot is nice","kb_count":1}]}"#,
        "\n",
        r#"{"turns":[{"user":"east part","belief":["east"],"action":[["offer","name","name_slot"],["inform","area","area_slot"]],"response":"name_slot is in the area_slot","kb_count":2}]}"#,
        "\n",
    );

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_emb: 5,
            d_enc: 4,
            d_policy: 3,
            d_attn: 3,
            ..ModelConfig::tiny()
        }
    }

    fn fixture(init_range: f64) -> (Corpus, Vocabulary, ParamSet, AnyModel, Vec<TurnExample>) {
        let corpus = parse_corpus(CORPUS, Split::Train).unwrap();
        let vocab = Vocabulary::build(corpus.all_tokens());
        let cfg = ModelConfig { init_range, ..tiny_cfg() };
        let mut ps = ParamSet::new();
        let mut rng = stream(5, &[tags::INIT]);
        let model =
            AnyModel::Gdp(GdpModel::register(&mut ps, vocab.size(), &cfg, &mut rng).unwrap());
        let examples = prepare_examples(&corpus, &vocab);
        (corpus, vocab, ps, model, examples)
    }

    #[test]
    fn zeroed_model_gives_the_uniform_loss() {
        // With all weights zero every softmax is uniform, so each turn
        // costs (belief_len + action_len)·ln V.
        let (_, vocab, ps, model, examples) = fixture(0.0);
        let v = vocab.size() as f64;
        for ex in &examples {
            let mut tape = Tape::new();
            let loss = supervised_loss(&mut tape, &ps, &model, &[ex]).unwrap();
            let want = (ex.gold_belief_ids.len() + ex.gold_action_ids.len()) as f64 * v.ln();
            assert!((tape.value(loss)[0] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn per_turn_loss_matches_the_scalar_oracle() {
        // Recompute the summed −ln p(gold) from the emitted
        // distributions and compare against the taped loss.
        let (_, _, ps, model, examples) = fixture(0.3);
        let ex = &examples[1];

        let mut tape = Tape::new();
        let loss = supervised_loss(&mut tape, &ps, &model, &[ex]).unwrap();
        let got = tape.value(loss)[0];

        let mut oracle_tape = Tape::new();
        let enc_out = encode_context(&mut oracle_tape, &ps, model.enc(), &ex.ctx_ids).unwrap();
        let trk_out = track_state(
            &mut oracle_tape,
            &ps,
            model.trk(),
            model.enc().embed,
            &enc_out,
            TrackMode::Teacher(&ex.gold_belief_ids),
        )
        .unwrap();
        let mut want = 0.0;
        for (dist, &tok) in trk_out.dists.iter().zip(&ex.gold_belief_ids) {
            want += -oracle_tape.value(*dist)[tok].ln();
        }
        let AnyModel::Gdp(m) = &model else { unreachable!() };
        let (keys_u, keys_d) =
            m.policy_keys(&mut oracle_tape, &ps, &enc_out, &trk_out.h_d).unwrap();
        let run = run_policy(
            &mut oracle_tape,
            &ps,
            &m.pol,
            m.enc.embed,
            enc_out.final_state,
            &keys_u,
            &keys_d,
            &encode_count(ex.kb_count),
            PolicyMode::Teacher(&ex.gold_action_ids),
            ex.gold_action_ids.len(),
        )
        .unwrap();
        for (dist, &tok) in run.dists.iter().zip(&ex.gold_action_ids) {
            want += -oracle_tape.value(*dist)[tok].ln();
        }
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn batch_loss_is_the_mean_of_singleton_losses() {
        let (_, _, ps, model, examples) = fixture(0.2);
        let refs: Vec<&TurnExample> = examples.iter().collect();
        let mut tape = Tape::new();
        let batched = supervised_loss(&mut tape, &ps, &model, &refs).unwrap();
        let got = tape.value(batched)[0];

        let mut sum = 0.0;
        for ex in &examples {
            let mut t = Tape::new();
            let l = supervised_loss(&mut t, &ps, &model, &[ex]).unwrap();
            sum += t.value(l)[0];
        }
        assert!((got - sum / examples.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn a_few_epochs_cut_the_loss_below_uniform() {
        let (_, vocab, mut ps, model, examples) = fixture(0.08);
        let cfg = TrainConfig {
            batch_size: 3,
            max_epochs: 8,
            patience: 8,
            seed: 11,
            ..Default::default()
        };
        let outcome = train_supervised(&mut ps, &model, &examples, &examples, &cfg).unwrap();
        assert!(!outcome.curve.is_empty());
        // Dev loss must fall strictly below the untrained uniform bound.
        let v = (vocab.size() as f64).ln();
        let uniform: f64 = examples
            .iter()
            .map(|e| (e.gold_belief_ids.len() + e.gold_action_ids.len()) as f64 * v)
            .sum::<f64>()
            / examples.len() as f64;
        assert!(outcome.best_dev_loss < uniform, "{} !< {uniform}", outcome.best_dev_loss);
    }

    #[test]
    fn one_epoch_cap_returns_a_single_entry_curve() {
        let (_, _, mut ps, model, examples) = fixture(0.08);
        let before: Vec<Vec<f64>> =
            ps.iter().map(|(_, e)| e.data().to_vec()).collect();
        let cfg = TrainConfig { max_epochs: 1, batch_size: 2, seed: 3, ..Default::default() };
        let outcome = train_supervised(&mut ps, &model, &examples, &examples, &cfg).unwrap();
        assert_eq!(outcome.curve.len(), 1);
        // Parameters moved (unless epoch 1 somehow worsened dev loss,
        // which small-lr steps on this fixture do not).
        let after: Vec<Vec<f64>> = ps.iter().map(|(_, e)| e.data().to_vec()).collect();
        assert_ne!(before, after);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let run = || {
            let (_, _, mut ps, model, examples) = fixture(0.08);
            let cfg = TrainConfig {
                batch_size: 2,
                max_epochs: 3,
                patience: 3,
                seed: 9,
                ..Default::default()
            };
            let outcome = train_supervised(&mut ps, &model, &examples, &examples, &cfg).unwrap();
            let bits: Vec<Vec<u64>> = ps
                .iter()
                .map(|(_, e)| e.data().iter().map(|x| x.to_bits()).collect())
                .collect();
            (outcome.curve, bits)
        };
        let (curve_a, bits_a) = run();
        let (curve_b, bits_b) = run();
        assert_eq!(curve_a, curve_b);
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn poisoned_parameters_abort_with_divergence() {
        let (_, _, mut ps, model, examples) = fixture(0.08);
        // The output bias is read at every decode step, so one NaN in it
        // poisons every turn's loss.
        let out_b = ps.id("pol.out.b").unwrap();
        ps.data_mut(out_b)[0] = f64::NAN;
        let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
        let err = train_supervised(&mut ps, &model, &examples, &examples, &cfg).unwrap_err();
        // The NaN surfaces either as a divergence or as a non-finite
        // numeric error, depending on where it is first touched.
        match err {
            TrainingError::Diverged { .. } | TrainingError::Numerics(_) => {}
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn classifier_heads_train_with_the_same_loop() {
        let corpus = parse_corpus(CORPUS, Split::Train).unwrap();
        let vocab = Vocabulary::build(corpus.all_tokens());
        let acts = act_frequency_order(&corpus);
        let slots = slot_order(&corpus);
        let examples = prepare_examples(&corpus, &vocab);
        let cfg_m = tiny_cfg();
        let cfg = TrainConfig { batch_size: 3, max_epochs: 2, seed: 21, ..Default::default() };

        for kind in ["e2ecm", "cdm"] {
            let mut ps = ParamSet::new();
            let mut rng = stream(31, &[tags::INIT]);
            let model = match kind {
                "e2ecm" => AnyModel::E2ecm(
                    E2ecmModel::register(&mut ps, vocab.size(), &cfg_m, &acts, 0.5, &mut rng)
                        .unwrap(),
                ),
                _ => AnyModel::Cdm(
                    CdmModel::register(&mut ps, vocab.size(), &cfg_m, &acts, &slots, &mut rng)
                        .unwrap(),
                ),
            };
            let outcome =
                train_supervised(&mut ps, &model, &examples, &examples, &cfg).unwrap();
            assert!(!outcome.curve.is_empty(), "{kind}");
            assert!(outcome.best_dev_loss.is_finite(), "{kind}");
        }
    }
}
