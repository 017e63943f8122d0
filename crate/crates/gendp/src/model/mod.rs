//! The generative dialogue policy network.
//!
//! Four pieces share one parameter set and one embedding table:
//!
//! * [`encoder`] — bidirectional GRU over `[C_{t−1}, R_{t−1}, U_t]`;
//! * [`tracker`] — attention GRU decoder emitting the belief sequence;
//! * [`policy`] — attention GRU decoder emitting the action sequence,
//!   conditioned on the KB result-count encoding;
//! * [`attention`] — the additive scoring MLP both decoders use.

pub mod attention;
pub mod encoder;
pub mod policy;
pub mod tracker;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BeliefState, Vocabulary};
use crate::numerics::{NodeId, NumericsError, ParamSet, Tape};

pub use attention::{attend, attend_energies, project_keys, AttnKeys, AttnParams};
pub use encoder::{encode_context, EncodeOutput, EncoderParams};
pub use policy::{
    decode_policy_step, run_policy, PolicyMode, PolicyParams, PolicyRun, PolicyStep,
};
pub use tracker::{track_state, TrackMode, TrackerOutput, TrackerParams};

/// Architecture hyperparameters. Defaults follow the reference setup:
/// 300-dim embeddings, 350-dim encoder/tracker, 150-dim policy decoder,
/// 20 KB count buckets, uniform ±0.08 init.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_enc: usize,
    pub d_policy: usize,
    pub d_attn: usize,
    pub kb_dim: usize,
    pub max_belief_len: usize,
    pub max_action_len: usize,
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_emb: 300,
            d_enc: 350,
            d_policy: 150,
            d_attn: 150,
            kb_dim: 20,
            max_belief_len: 10,
            max_action_len: 30,
            init_range: 0.08,
        }
    }
}

impl ModelConfig {
    /// A small configuration for quick tests and the synthetic domain.
    pub fn tiny() -> Self {
        Self {
            d_emb: 16,
            d_enc: 24,
            d_policy: 16,
            d_attn: 12,
            kb_dim: 20,
            max_belief_len: 10,
            max_action_len: 30,
            init_range: 0.08,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GdpModel {
    pub cfg: ModelConfig,
    pub vocab_size: usize,
    pub enc: EncoderParams,
    pub trk: TrackerParams,
    pub pol: PolicyParams,
}

impl GdpModel {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let r = cfg.init_range;
        let enc = EncoderParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, r, rng)?;
        let trk =
            TrackerParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, cfg.d_attn, r, rng)?;
        let pol = PolicyParams::register(
            ps, vocab_size, cfg.d_emb, cfg.d_enc, cfg.d_policy, cfg.d_attn, cfg.kb_dim, r, rng,
        )?;
        Ok(Self { cfg: cfg.clone(), vocab_size, enc, trk, pol })
    }

    pub fn lookup(
        ps: &ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            cfg: cfg.clone(),
            vocab_size,
            enc: EncoderParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            trk: TrackerParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            pol: PolicyParams::lookup(ps, cfg.d_emb, cfg.d_policy)?,
        })
    }

    /// Freezes everything but the policy decoder (embedding, encoder,
    /// tracker) — the fine-tuning regime where only the action decoder
    /// keeps learning.
    pub fn freeze_non_policy(&self, ps: &mut ParamSet) {
        ps.set_trainable_prefix("embed", false);
        ps.set_trainable_prefix("enc.", false);
        ps.set_trainable_prefix("trk.", false);
    }

    /// Projects encoder and tracker states into both policy attention
    /// heads' key spaces.
    pub fn policy_keys(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        enc_out: &EncodeOutput,
        h_d: &[NodeId],
    ) -> Result<(AttnKeys, AttnKeys), NumericsError> {
        let ku = project_keys(tape, ps, &self.pol.attn_u, &enc_out.h_u)?;
        let kd = project_keys(tape, ps, &self.pol.attn_d, h_d)?;
        Ok((ku, kd))
    }
}

/// Argmax with ties broken toward the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in xs.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Encoder input ids: previous belief constraints, previous system
/// response, current user utterance, concatenated in that order. Empty
/// components contribute nothing (a dialogue's first turn has no
/// history), and out-of-vocabulary tokens map to UNK.
pub fn context_ids(
    vocab: &Vocabulary,
    prev_belief: &BeliefState,
    prev_response: &[String],
    user: &[String],
) -> Vec<usize> {
    prev_belief
        .tokens()
        .iter()
        .chain(prev_response)
        .chain(user)
        .map(|t| vocab.id_or_unk(t))
        .collect()
}
