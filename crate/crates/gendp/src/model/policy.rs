//! Generative dialogue policy decoder.
//!
//! A GRU decoder emits the action token sequence. Each step runs two
//! attention heads with the previous policy hidden state as query — one
//! over encoder states, one over tracker decoder states — and projects
//! `[h_i, k_t, c_u, c_d]` to vocabulary logits, where `k_t` is the
//! one-hot KB result-count encoding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::vocab::{EOS_ACTION, SOS};
use crate::numerics::{gru_cell, GruParams, NodeId, NumericsError, ParamId, ParamSet, Tape};

use super::argmax;
use super::attention::{attend, AttnKeys, AttnParams};

#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub gru: GruParams,
    pub attn_u: AttnParams,
    pub attn_d: AttnParams,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl PolicyParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        d_emb: usize,
        d_enc: usize,
        d_pol: usize,
        d_attn: usize,
        kb_dim: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let feat = d_pol + kb_dim + 2 * d_enc;
        Ok(Self {
            gru: GruParams::register(ps, "pol.gru", d_emb, d_pol, range, rng)?,
            attn_u: AttnParams::register(ps, "pol.attn_u", d_pol, d_enc, d_attn, range, rng)?,
            attn_d: AttnParams::register(ps, "pol.attn_d", d_pol, d_enc, d_attn, range, rng)?,
            init_w: ps.register_uniform("pol.init.w", vec![d_pol, 2 * d_enc], range, rng)?,
            init_b: ps.register_zeros("pol.init.b", vec![d_pol])?,
            out_w: ps.register_uniform("pol.out.w", vec![vocab_size, feat], range, rng)?,
            out_b: ps.register_zeros("pol.out.b", vec![vocab_size])?,
        })
    }

    pub fn lookup(ps: &ParamSet, d_emb: usize, d_pol: usize) -> Result<Self, NumericsError> {
        Ok(Self {
            gru: GruParams::lookup(ps, "pol.gru", d_emb, d_pol)?,
            attn_u: AttnParams::lookup(ps, "pol.attn_u")?,
            attn_d: AttnParams::lookup(ps, "pol.attn_d")?,
            init_w: ps.id("pol.init.w")?,
            init_b: ps.id("pol.init.b")?,
            out_w: ps.id("pol.out.w")?,
            out_b: ps.id("pol.out.b")?,
        })
    }
}

pub struct PolicyStep {
    pub dist: NodeId,
    pub hidden: NodeId,
    pub c_u: NodeId,
    pub c_d: NodeId,
}

/// One decode step. `k_t` must already be on the tape (shared across
/// steps); `keys_u`/`keys_d` are the projected encoder/tracker states.
pub fn decode_policy_step(
    tape: &mut Tape,
    ps: &ParamSet,
    pol: &PolicyParams,
    embed: ParamId,
    prev_token: usize,
    prev_hidden: NodeId,
    keys_u: &AttnKeys,
    keys_d: &AttnKeys,
    k_t: NodeId,
) -> Result<PolicyStep, NumericsError> {
    let (c_u, _) = attend(tape, ps, &pol.attn_u, prev_hidden, keys_u)?;
    let (c_d, _) = attend(tape, ps, &pol.attn_d, prev_hidden, keys_d)?;
    let table = tape.param(ps, embed);
    let x = tape.embed_row(table, prev_token)?;
    let hidden = gru_cell(tape, ps, &pol.gru, x, prev_hidden)?;
    let feat = tape.concat(&[hidden, k_t, c_u, c_d])?;
    let out_w = tape.param(ps, pol.out_w);
    let out_b = tape.param(ps, pol.out_b);
    let wf = tape.matvec(out_w, feat)?;
    let logits = tape.add(wf, out_b)?;
    let dist = tape.softmax(logits)?;
    Ok(PolicyStep { dist, hidden, c_u, c_d })
}

pub enum PolicyMode<'a> {
    /// Iterated argmax, ties to the lowest token id.
    Greedy,
    /// Sample each token from the step distribution.
    Sample(&'a mut ChaCha8Rng),
    /// Feed the gold sequence (must end with the action terminator).
    Teacher(&'a [usize]),
}

pub struct PolicyRun {
    /// Emitted (or gold) token ids, terminator included when reached.
    pub tokens: Vec<usize>,
    pub dists: Vec<NodeId>,
    /// Cross-entropy of the chosen token at each step, every mode — the
    /// negative log-probability REINFORCE weights by reward.
    pub losses: Vec<NodeId>,
    pub hidden: Vec<NodeId>,
}

/// Validates that `k_t` is one-hot: exactly one entry 1.0, the rest 0.0.
fn check_one_hot(k_t: &[f64]) -> Result<(), NumericsError> {
    let ones = k_t.iter().filter(|&&x| x == 1.0).count();
    if ones != 1 || !k_t.iter().all(|&x| x == 0.0 || x == 1.0) {
        return Err(NumericsError::InvalidArgument(format!(
            "kb count encoding must be one-hot, got {k_t:?}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_policy(
    tape: &mut Tape,
    ps: &ParamSet,
    pol: &PolicyParams,
    embed: ParamId,
    enc_final: NodeId,
    keys_u: &AttnKeys,
    keys_d: &AttnKeys,
    k_t: &[f64],
    mode: PolicyMode,
    max_len: usize,
) -> Result<PolicyRun, NumericsError> {
    check_one_hot(k_t)?;
    let k_node = tape.input(vec![k_t.len()], k_t.to_vec())?;
    let init_w = tape.param(ps, pol.init_w);
    let init_b = tape.param(ps, pol.init_b);
    let wx = tape.matvec(init_w, enc_final)?;
    let mut h = tape.add(wx, init_b)?;
    let mut prev_tok = SOS;

    let mut mode = mode;
    let steps = match &mode {
        PolicyMode::Teacher(gold) => gold.len(),
        _ => max_len,
    };
    let mut run = PolicyRun {
        tokens: Vec::with_capacity(steps),
        dists: Vec::with_capacity(steps),
        losses: Vec::with_capacity(steps),
        hidden: Vec::with_capacity(steps),
    };

    for i in 0..steps {
        let step = decode_policy_step(
            tape, ps, pol, embed, prev_tok, h, keys_u, keys_d, k_node,
        )?;
        h = step.hidden;
        let tok = match &mut mode {
            PolicyMode::Teacher(gold) => gold[i],
            PolicyMode::Greedy => argmax(tape.value(step.dist)),
            PolicyMode::Sample(rng) => sample_index(tape.value(step.dist), rng),
        };
        run.losses.push(tape.cross_entropy(step.dist, tok)?);
        run.dists.push(step.dist);
        run.hidden.push(step.hidden);
        run.tokens.push(tok);
        prev_tok = tok;
        if !matches!(mode, PolicyMode::Teacher(_)) && tok == EOS_ACTION {
            break;
        }
    }
    Ok(run)
}

/// Inverse-CDF sample; rounding spill lands on the last index.
pub(crate) fn sample_index(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::attention::project_keys;
    use crate::model::encoder::{encode_context, EncoderParams};
    use crate::model::tracker::{track_state, TrackMode, TrackerParams};
    use crate::numerics::rng::stream;

    const V: usize = 25;
    const KB: usize = 20;

    struct Fix {
        ps: ParamSet,
        enc: EncoderParams,
        trk: TrackerParams,
        pol: PolicyParams,
    }

    fn fixture(range: f64) -> Fix {
        let mut ps = ParamSet::new();
        let mut rng = stream(41, &[]);
        let enc = EncoderParams::register(&mut ps, V, 4, 3, range, &mut rng).unwrap();
        let trk = TrackerParams::register(&mut ps, V, 4, 3, 3, range, &mut rng).unwrap();
        let pol =
            PolicyParams::register(&mut ps, V, 4, 3, 2, 3, KB, range, &mut rng).unwrap();
        Fix { ps, enc, trk, pol }
    }

    fn one_hot(idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; KB];
        v[idx] = 1.0;
        v
    }

    /// Encodes, tracks free-running, projects both key sets.
    fn setup(fix: &Fix, tape: &mut Tape) -> (NodeId, AttnKeys, AttnKeys) {
        let e = encode_context(tape, &fix.ps, &fix.enc, &[5, 9, 12]).unwrap();
        let t = track_state(
            tape,
            &fix.ps,
            &fix.trk,
            fix.enc.embed,
            &e,
            TrackMode::FreeRunning { max_len: 4 },
        )
        .unwrap();
        let ku = project_keys(tape, &fix.ps, &fix.pol.attn_u, &e.h_u).unwrap();
        let kd = project_keys(tape, &fix.ps, &fix.pol.attn_d, &t.h_d).unwrap();
        (e.final_state, ku, kd)
    }

    #[test]
    fn step_distribution_sums_to_one() {
        let fix = fixture(0.3);
        let mut tape = Tape::new();
        let (fin, ku, kd) = setup(&fix, &mut tape);
        let run = run_policy(
            &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
            &one_hot(3), PolicyMode::Greedy, 8,
        )
        .unwrap();
        for &d in &run.dists {
            assert!((tape.value(d).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_output_projection_gives_uniform_distribution() {
        let mut fix = fixture(0.1);
        fix.ps.data_mut(fix.pol.out_w).iter_mut().for_each(|x| *x = 0.0);
        let mut tape = Tape::new();
        let (fin, ku, kd) = setup(&fix, &mut tape);
        let run = run_policy(
            &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
            &one_hot(0), PolicyMode::Greedy, 1,
        )
        .unwrap();
        for &p in tape.value(run.dists[0]) {
            assert!((p - 1.0 / V as f64).abs() < 1e-12);
        }
        // Uniform ties break to the lowest id.
        assert_eq!(run.tokens[0], 0);
    }

    #[test]
    fn changing_kb_index_flips_argmax_through_the_kt_block() {
        let mut fix = fixture(0.0);
        // Output projection reads only the k_t block: token j fires on
        // k_t index j. Feature layout is [h (2) | k_t (20) | c_u (3) | c_d (3)].
        let feat = 2 + KB + 3 + 3;
        {
            let w = fix.ps.data_mut(fix.pol.out_w);
            for j in 0..KB {
                w[j * feat + 2 + j] = 5.0;
            }
        }
        for idx in [0usize, 7, 19] {
            let mut tape = Tape::new();
            let (fin, ku, kd) = setup(&fix, &mut tape);
            let run = run_policy(
                &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
                &one_hot(idx), PolicyMode::Greedy, 1,
            )
            .unwrap();
            assert_eq!(run.tokens[0], idx);
        }
    }

    #[test]
    fn malformed_kb_encoding_is_rejected() {
        let fix = fixture(0.1);
        let mut tape = Tape::new();
        let (fin, ku, kd) = setup(&fix, &mut tape);
        for bad in [vec![0.0; KB], {
            let mut v = one_hot(2);
            v[5] = 1.0;
            v
        }, {
            let mut v = one_hot(2);
            v[2] = 0.7;
            v
        }] {
            assert!(run_policy(
                &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
                &bad, PolicyMode::Greedy, 4,
            )
            .is_err());
        }
    }

    #[test]
    fn greedy_stops_at_rigged_terminator_and_respects_cap() {
        let mut fix = fixture(0.01);
        fix.ps.data_mut(fix.pol.out_b)[EOS_ACTION] = 50.0;
        let mut tape = Tape::new();
        let (fin, ku, kd) = setup(&fix, &mut tape);
        let run = run_policy(
            &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
            &one_hot(1), PolicyMode::Greedy, 30,
        )
        .unwrap();
        assert_eq!(run.tokens, vec![EOS_ACTION]);

        // And with a never-terminating rig, the cap binds.
        let mut fix2 = fixture(0.01);
        fix2.ps.data_mut(fix2.pol.out_b)[9] = 50.0;
        let mut tape2 = Tape::new();
        let (fin2, ku2, kd2) = setup(&fix2, &mut tape2);
        let run2 = run_policy(
            &mut tape2, &fix2.ps, &fix2.pol, fix2.enc.embed, fin2, &ku2, &kd2,
            &one_hot(1), PolicyMode::Greedy, 6,
        )
        .unwrap();
        assert_eq!(run2.tokens.len(), 6);
        assert!(run2.tokens.iter().all(|&t| t == 9));
    }

    #[test]
    fn sampling_is_reproducible_under_a_fixed_stream() {
        let fix = fixture(0.3);
        let sample_once = || {
            let mut rng = stream(77, &[4]);
            let mut tape = Tape::new();
            let (fin, ku, kd) = setup(&fix, &mut tape);
            run_policy(
                &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
                &one_hot(2), PolicyMode::Sample(&mut rng), 12,
            )
            .unwrap()
            .tokens
        };
        assert_eq!(sample_once(), sample_once());
    }

    #[test]
    fn teacher_mode_scores_the_gold_sequence() {
        let fix = fixture(0.3);
        let mut tape = Tape::new();
        let (fin, ku, kd) = setup(&fix, &mut tape);
        let gold = [7usize, 8, 9, EOS_ACTION];
        let run = run_policy(
            &mut tape, &fix.ps, &fix.pol, fix.enc.embed, fin, &ku, &kd,
            &one_hot(4), PolicyMode::Teacher(&gold), 30,
        )
        .unwrap();
        assert_eq!(run.tokens, gold);
        assert_eq!(run.losses.len(), 4);
        for (&l, (&d, &tok)) in run.losses.iter().zip(run.dists.iter().zip(gold.iter())) {
            assert!((tape.value(l)[0] - -tape.value(d)[tok].ln()).abs() < 1e-12);
        }
    }
}
