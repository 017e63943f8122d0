//! Generative dialogue state tracker.
//!
//! A GRU decoder emits the belief token sequence. At step `i` it attends
//! over the encoder states with its previous hidden state as query,
//! consumes the embedding of the previous output token, and projects
//! `[h_i, c_i]` to vocabulary logits.

use rand::Rng;

use crate::corpus::vocab::{EOS_BELIEF, SOS};
use crate::numerics::{gru_cell, GruParams, NodeId, NumericsError, ParamId, ParamSet, Tape};

use super::attention::{attend, project_keys, AttnParams};
use super::encoder::EncodeOutput;
use super::argmax;

#[derive(Debug, Clone)]
pub struct TrackerParams {
    pub gru: GruParams,
    pub attn: AttnParams,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

impl TrackerParams {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        d_emb: usize,
        d_h: usize,
        d_attn: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            gru: GruParams::register(ps, "trk.gru", d_emb, d_h, range, rng)?,
            attn: AttnParams::register(ps, "trk.attn", d_h, d_h, d_attn, range, rng)?,
            init_w: ps.register_uniform("trk.init.w", vec![d_h, 2 * d_h], range, rng)?,
            init_b: ps.register_zeros("trk.init.b", vec![d_h])?,
            proj_w: ps.register_uniform("trk.proj.w", vec![vocab_size, 2 * d_h], range, rng)?,
            proj_b: ps.register_zeros("trk.proj.b", vec![vocab_size])?,
        })
    }

    pub fn lookup(ps: &ParamSet, d_emb: usize, d_h: usize) -> Result<Self, NumericsError> {
        Ok(Self {
            gru: GruParams::lookup(ps, "trk.gru", d_emb, d_h)?,
            attn: AttnParams::lookup(ps, "trk.attn")?,
            init_w: ps.id("trk.init.w")?,
            init_b: ps.id("trk.init.b")?,
            proj_w: ps.id("trk.proj.w")?,
            proj_b: ps.id("trk.proj.b")?,
        })
    }
}

pub enum TrackMode<'a> {
    /// Feed the gold sequence (which must end with the belief
    /// terminator) and collect a cross-entropy loss per step.
    Teacher(&'a [usize]),
    /// Feed back own argmax until the terminator or the length cap.
    FreeRunning { max_len: usize },
}

pub struct TrackerOutput {
    /// Decoder hidden states, one per emitted token (terminator included).
    pub h_d: Vec<NodeId>,
    /// Emitted (free-running) or gold (teacher) token ids.
    pub tokens: Vec<usize>,
    /// Per-step distributions over the vocabulary.
    pub dists: Vec<NodeId>,
    /// Per-step cross-entropy losses; empty when free-running.
    pub losses: Vec<NodeId>,
}

pub fn track_state(
    tape: &mut Tape,
    ps: &ParamSet,
    trk: &TrackerParams,
    embed: ParamId,
    enc: &EncodeOutput,
    mode: TrackMode,
) -> Result<TrackerOutput, NumericsError> {
    let keys = project_keys(tape, ps, &trk.attn, &enc.h_u)?;
    let init_w = tape.param(ps, trk.init_w);
    let init_b = tape.param(ps, trk.init_b);
    let proj_w = tape.param(ps, trk.proj_w);
    let proj_b = tape.param(ps, trk.proj_b);
    let table = tape.param(ps, embed);

    let wx = tape.matvec(init_w, enc.final_state)?;
    let mut h = tape.add(wx, init_b)?;
    let mut prev_tok = SOS;

    let steps = match &mode {
        TrackMode::Teacher(gold) => gold.len(),
        TrackMode::FreeRunning { max_len } => *max_len,
    };
    let mut out = TrackerOutput {
        h_d: Vec::with_capacity(steps),
        tokens: Vec::with_capacity(steps),
        dists: Vec::with_capacity(steps),
        losses: Vec::with_capacity(steps),
    };

    for i in 0..steps {
        let (c, _alpha) = attend(tape, ps, &trk.attn, h, &keys)?;
        let x = tape.embed_row(table, prev_tok)?;
        h = gru_cell(tape, ps, &trk.gru, x, h)?;
        let feat = tape.concat(&[h, c])?;
        let wf = tape.matvec(proj_w, feat)?;
        let logits = tape.add(wf, proj_b)?;
        let dist = tape.softmax(logits)?;

        let tok = match &mode {
            TrackMode::Teacher(gold) => {
                let tok = gold[i];
                out.losses.push(tape.cross_entropy(dist, tok)?);
                tok
            }
            TrackMode::FreeRunning { .. } => argmax(tape.value(dist)),
        };
        out.h_d.push(h);
        out.dists.push(dist);
        out.tokens.push(tok);
        prev_tok = tok;
        if matches!(mode, TrackMode::FreeRunning { .. }) && tok == EOS_BELIEF {
            break;
        }
    }
    Ok(out)
}
