//! REINFORCE fine-tuning of the action decoder.
//!
//! The belief tracker runs free (its own greedy decode feeds the KB
//! query), the action decoder samples, and every sampled step gets a
//! reward estimated by rolling the decoder forward to completion N
//! times. Encoder, embedding, and tracker stay frozen; only the policy
//! decoder moves.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::baselines::AnyModel;
use crate::corpus::vocab::EOS_ACTION;
use crate::corpus::{deserialize_action, deserialize_belief, serialize_action, Corpus, Lexicons, Vocabulary};
use crate::eval::{apra, predict_corpus, EvalContext};
use crate::kb::{encode_count, query, Kb, Ontology};
use crate::model::policy::sample_index;
use crate::model::{
    decode_policy_step, encode_context, run_policy, track_state, AttnKeys, GdpModel, PolicyMode,
    PolicyRun, TrackMode,
};
use crate::numerics::rng::{stream, tags};
use crate::numerics::{
    AdamConfig, AdamState, GradAccum, NodeId, NumericsError, ParamSet, Tape,
};

use super::reward::{reward, reward_for_tokens};
use super::{RewardSpec, TrainConfig, TrainingError, TurnExample};

/// Everything a fine-tuning run reads besides the parameters.
pub struct RlSetup<'a> {
    pub model: &'a AnyModel,
    pub vocab: &'a Vocabulary,
    pub lexicons: &'a Lexicons,
    pub kb: &'a Kb,
    pub ontology: &'a Ontology,
}

impl<'a> RlSetup<'a> {
    fn gdp(&self) -> Result<&'a GdpModel, TrainingError> {
        match self.model {
            AnyModel::Gdp(m) => Ok(m),
            other => Err(TrainingError::InvalidConfig(format!(
                "reinforcement fine-tuning adjusts the generative action decoder; \
                 a {} model has none",
                other.kind()
            ))),
        }
    }
}

/// One sampled action sequence with its per-step reward estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRewardTrace {
    pub tokens: Vec<usize>,
    /// Estimate for step j: the exact sequence reward at the last step,
    /// `decay^(T−1−j)` times the mean rollout reward before it.
    pub step_rewards: Vec<f64>,
    pub final_reward: f64,
    pub malformed: bool,
}

/// Samples a completion from `(hidden, prev_tok)`, at most `cap` tokens.
#[allow(clippy::too_many_arguments)]
fn rollout(
    tape: &mut Tape,
    ps: &ParamSet,
    model: &GdpModel,
    keys_u: &AttnKeys,
    keys_d: &AttnKeys,
    k_node: NodeId,
    mut hidden: NodeId,
    mut prev_tok: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, NumericsError> {
    let mut out = Vec::with_capacity(cap);
    for _ in 0..cap {
        let step = decode_policy_step(
            tape, ps, &model.pol, model.enc.embed, prev_tok, hidden, keys_u, keys_d, k_node,
        )?;
        let tok = sample_index(tape.value(step.dist), rng);
        out.push(tok);
        hidden = step.hidden;
        prev_tok = tok;
        if tok == EOS_ACTION {
            break;
        }
    }
    Ok(out)
}

/// Runs one turn the way fine-tuning sees it — tracker free-running,
/// action decoder sampling — and estimates a reward for every step.
/// Rollout nodes share the tape but never feed the loss, so backward
/// skips them.
pub fn sample_step_rewards(
    tape: &mut Tape,
    ps: &ParamSet,
    setup: &RlSetup,
    ex: &TurnExample,
    seed: u64,
    epoch: u64,
    spec: &RewardSpec,
) -> Result<(StepRewardTrace, PolicyRun), TrainingError> {
    let model = setup.gdp()?;
    let enc_out = encode_context(tape, ps, &model.enc, &ex.ctx_ids)?;
    let trk_out = track_state(
        tape,
        ps,
        &model.trk,
        model.enc.embed,
        &enc_out,
        TrackMode::FreeRunning { max_len: model.cfg.max_belief_len },
    )?;
    let belief = deserialize_belief(&setup.vocab.decode(&trk_out.tokens));
    let k_t = encode_count(query(setup.kb, &belief, setup.ontology).count);
    let (keys_u, keys_d) = model.policy_keys(tape, ps, &enc_out, &trk_out.h_d)?;

    let dlg = ex.dialogue as u64;
    let turn = ex.turn as u64;
    let mut sample_rng = stream(seed, &[tags::SAMPLE, epoch, dlg, turn]);
    let run = run_policy(
        tape,
        ps,
        &model.pol,
        model.enc.embed,
        enc_out.final_state,
        &keys_u,
        &keys_d,
        &k_t,
        PolicyMode::Sample(&mut sample_rng),
        model.cfg.max_action_len,
    )?;

    let words = setup.vocab.decode(&run.tokens);
    let (decoded, well_formed) = deserialize_action(&words, setup.lexicons);
    let final_reward = reward(&decoded, !well_formed, &ex.gold_action, spec);

    let k_node = tape.input(vec![k_t.len()], k_t.clone())?;
    let t_len = run.tokens.len();
    let mut step_rewards = Vec::with_capacity(t_len);
    for j in 0..t_len {
        if j == t_len - 1 {
            step_rewards.push(final_reward);
            break;
        }
        let cap = model.cfg.max_action_len - (j + 1);
        let mut sum = 0.0;
        for n in 0..spec.rollouts {
            let mut rng = stream(seed, &[tags::ROLLOUT, dlg, turn, j as u64, n as u64]);
            let cont = rollout(
                tape, ps, model, &keys_u, &keys_d, k_node, run.hidden[j], run.tokens[j], cap,
                &mut rng,
            )?;
            let mut full = run.tokens[..=j].to_vec();
            full.extend(cont);
            sum += reward_for_tokens(
                &setup.vocab.decode(&full),
                setup.lexicons,
                &ex.gold_action,
                spec,
            );
        }
        let mean = sum / spec.rollouts as f64;
        step_rewards.push(spec.decay.powi((t_len - 1 - j) as i32) * mean);
    }

    let trace = StepRewardTrace {
        tokens: run.tokens.clone(),
        step_rewards,
        final_reward,
        malformed: !well_formed,
    };
    Ok((trace, run))
}

/// One policy-gradient step over a batch: minimizes the mean of
/// `(1/T)·Σ_j r_j · (−ln π(token_j))` per turn, then applies Adam.
/// Returns the batch's mean sequence reward. Any gradient reaching a
/// frozen parameter is an internal invariant violation and aborts.
pub fn reinforce_update(
    ps: &mut ParamSet,
    setup: &RlSetup,
    batch: &[&TurnExample],
    epoch: u64,
    opt: &mut AdamState,
    spec: &RewardSpec,
    cfg: &TrainConfig,
) -> Result<f64, TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::InvalidConfig("empty fine-tuning batch".into()));
    }
    let mut tape = Tape::new();
    let mut surrogates = Vec::with_capacity(batch.len());
    let mut reward_sum = 0.0;
    for ex in batch {
        let (trace, run) = sample_step_rewards(&mut tape, ps, setup, ex, cfg.seed, epoch, spec)?;
        let mut total: Option<NodeId> = None;
        for (j, &ce) in run.losses.iter().enumerate() {
            let term = tape.scale(ce, trace.step_rewards[j]);
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let total = total.expect("a sampled run has at least one step");
        surrogates.push(tape.scale(total, 1.0 / run.losses.len() as f64));
        reward_sum += trace.final_reward;
    }
    let mut loss = surrogates[0];
    for &s in &surrogates[1..] {
        loss = tape.add(loss, s)?;
    }
    let loss = tape.scale(loss, 1.0 / batch.len() as f64);
    if !tape.value(loss)[0].is_finite() {
        return Err(TrainingError::Diverged { epoch: epoch as usize });
    }

    let mut accum = GradAccum::new(ps);
    tape.backward(loss, &mut accum)?;
    drop(tape);
    for (pid, _) in accum.iter() {
        if !ps.entry(pid).trainable() {
            return Err(TrainingError::FrozenGradient(ps.entry(pid).name().to_string()));
        }
    }
    opt.step(ps, &accum)?;
    Ok(reward_sum / batch.len() as f64)
}

/// Action accuracy on a dev corpus under the current parameters, with
/// the model driving its own belief chain.
pub fn dev_apra(ps: &ParamSet, setup: &RlSetup, dev: &Corpus) -> Result<f64, TrainingError> {
    let ctx = EvalContext {
        ps,
        model: setup.model,
        vocab: setup.vocab,
        lexicons: setup.lexicons,
        kb: setup.kb,
        ontology: setup.ontology,
    };
    let (preds, _) = predict_corpus(&ctx, dev, None)?;
    let predicted: Vec<Vec<String>> = preds.into_iter().map(|p| p.action_tokens).collect();
    let gold: Vec<Vec<String>> = dev
        .dialogues()
        .iter()
        .flatten()
        .map(|t| serialize_action(&t.action))
        .collect();
    Ok(apra(&predicted, &gold)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlEpochStat {
    pub epoch: usize,
    /// Mean sampled-sequence reward across the epoch's batches.
    pub mean_reward: f64,
    pub dev_apra: f64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub curve: Vec<RlEpochStat>,
    /// Epoch whose parameters were kept (0 = the supervised input).
    pub best_epoch: usize,
    pub best_dev_apra: f64,
}

/// Freezes everything but the action decoder, then runs `epochs` of
/// policy-gradient updates. Keeps the parameters with the best dev
/// action accuracy — the supervised starting point if fine-tuning never
/// beats it — and verifies at the end that no frozen bit moved.
pub fn train_rl(
    ps: &mut ParamSet,
    setup: &RlSetup,
    train: &[TurnExample],
    dev: &Corpus,
    cfg: &TrainConfig,
    spec: &RewardSpec,
    epochs: usize,
) -> Result<RlOutcome, TrainingError> {
    cfg.validate()?;
    spec.validate()?;
    let model = setup.gdp()?;
    if train.is_empty() {
        return Err(TrainingError::InvalidConfig(
            "fine-tuning needs a non-empty training split".into(),
        ));
    }

    model.freeze_non_policy(ps);
    let frozen_bits: Vec<(String, Vec<u64>)> = ps
        .iter()
        .filter(|(_, e)| !e.trainable())
        .map(|(_, e)| {
            (
                e.name().to_string(),
                e.data().iter().map(|x| x.to_bits()).collect(),
            )
        })
        .collect();

    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr_rl, cfg.weight_decay), ps);
    let initial = dev_apra(ps, setup, dev)?;
    let mut best = (initial, ps.clone(), 0usize);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    for epoch in 1..=epochs {
        let mut rng = stream(cfg.seed, &[tags::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);

        let mut reward_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TurnExample> = chunk.iter().map(|&i| &train[i]).collect();
            reward_sum +=
                reinforce_update(ps, setup, &batch, epoch as u64, &mut opt, spec, cfg)?;
            batches += 1;
        }

        let acc = dev_apra(ps, setup, dev)?;
        curve.push(RlEpochStat {
            epoch,
            mean_reward: reward_sum / batches as f64,
            dev_apra: acc,
        });
        if acc > best.0 {
            best = (acc, ps.clone(), epoch);
        }
    }

    for (name, bits) in &frozen_bits {
        let id = ps.id(name)?;
        let now: Vec<u64> = ps.entry(id).data().iter().map(|x| x.to_bits()).collect();
        if &now != bits {
            return Err(TrainingError::FrozenGradient(name.clone()));
        }
    }

    let (best_dev_apra, snapshot, best_epoch) = best;
    *ps = snapshot;
    Ok(RlOutcome { curve, best_epoch, best_dev_apra })
}
