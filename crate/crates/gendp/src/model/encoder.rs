//! Bidirectional GRU context encoder.
//!
//! The input is the concatenation of the previous belief tokens, the
//! previous system response, and the current user utterance. Each
//! position's representation is the *sum* of the forward and backward
//! GRU states there; the sequence-level state is the concatenation of
//! the forward state at the last position and the backward state at the
//! first.

use rand::Rng;

use crate::numerics::{gru_cell, GruParams, NodeId, NumericsError, ParamId, ParamSet, Tape};

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub embed: ParamId,
    pub fwd: GruParams,
    pub bwd: GruParams,
    pub d_h: usize,
}

impl EncoderParams {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        d_emb: usize,
        d_h: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            embed: ps.register_uniform("embed", vec![vocab_size, d_emb], range, rng)?,
            fwd: GruParams::register(ps, "enc.fwd", d_emb, d_h, range, rng)?,
            bwd: GruParams::register(ps, "enc.bwd", d_emb, d_h, range, rng)?,
            d_h,
        })
    }

    pub fn lookup(
        ps: &ParamSet,
        d_emb: usize,
        d_h: usize,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            embed: ps.id("embed")?,
            fwd: GruParams::lookup(ps, "enc.fwd", d_emb, d_h)?,
            bwd: GruParams::lookup(ps, "enc.bwd", d_emb, d_h)?,
            d_h,
        })
    }
}

pub struct EncodeOutput {
    /// Per-position states, forward + backward summed; same length as
    /// the input.
    pub h_u: Vec<NodeId>,
    /// `[forward final, backward final]` concatenated — width `2·d_h`.
    pub final_state: NodeId,
}

pub fn encode_context(
    tape: &mut Tape,
    ps: &ParamSet,
    enc: &EncoderParams,
    token_ids: &[usize],
) -> Result<EncodeOutput, NumericsError> {
    if token_ids.is_empty() {
        return Err(NumericsError::InvalidArgument(
            "encoder input is empty".into(),
        ));
    }
    let table = tape.param(ps, enc.embed);
    let embeds = token_ids
        .iter()
        .map(|&id| tape.embed_row(table, id))
        .collect::<Result<Vec<_>, _>>()?;

    let n = embeds.len();
    let mut fwd_states = Vec::with_capacity(n);
    let mut h = tape.zeros(enc.d_h)?;
    for &x in &embeds {
        h = gru_cell(tape, ps, &enc.fwd, x, h)?;
        fwd_states.push(h);
    }
    let mut bwd_states = vec![h; n]; // overwritten below
    let mut hb = tape.zeros(enc.d_h)?;
    for i in (0..n).rev() {
        hb = gru_cell(tape, ps, &enc.bwd, embeds[i], hb)?;
        bwd_states[i] = hb;
    }

    let h_u = (0..n)
        .map(|i| tape.add(fwd_states[i], bwd_states[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let final_state = tape.concat(&[fwd_states[n - 1], bwd_states[0]])?;
    Ok(EncodeOutput { h_u, final_state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;

    fn params(vocab: usize, d_emb: usize, d_h: usize, range: f64) -> (ParamSet, EncoderParams) {
        let mut ps = ParamSet::new();
        let mut rng = stream(21, &[]);
        let p = EncoderParams::register(&mut ps, vocab, d_emb, d_h, range, &mut rng).unwrap();
        (ps, p)
    }

    #[test]
    fn single_token_gives_length_one_and_symmetric_final() {
        let (ps, enc) = params(6, 4, 3, 0.08);
        let mut tape = Tape::new();
        let out = encode_context(&mut tape, &ps, &enc, &[2]).unwrap();
        assert_eq!(out.h_u.len(), 1);
        assert_eq!(tape.shape(out.final_state), &[6]);
    }

    #[test]
    fn zero_parameters_produce_zero_states() {
        let mut ps = ParamSet::new();
        ps.register_zeros("embed", vec![5, 4]).unwrap();
        let mut rng = stream(0, &[]);
        GruParams::register(&mut ps, "enc.fwd", 4, 3, 0.0, &mut rng).unwrap();
        GruParams::register(&mut ps, "enc.bwd", 4, 3, 0.0, &mut rng).unwrap();
        let enc = EncoderParams::lookup(&ps, 4, 3).unwrap();
        let mut tape = Tape::new();
        let out = encode_context(&mut tape, &ps, &enc, &[1, 2, 3]).unwrap();
        for &h in &out.h_u {
            assert!(tape.value(h).iter().all(|&x| x == 0.0));
        }
        assert!(tape.value(out.final_state).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_input_is_rejected_and_oov_id_errors() {
        let (ps, enc) = params(6, 4, 3, 0.08);
        let mut tape = Tape::new();
        assert!(matches!(
            encode_context(&mut tape, &ps, &enc, &[]),
            Err(NumericsError::InvalidArgument(_))
        ));
        assert!(matches!(
            encode_context(&mut tape, &ps, &enc, &[6]),
            Err(NumericsError::IndexOutOfBounds { .. })
        ));
    }

    /// Scalar-loop re-implementation of the bidirectional pass, kept
    /// deliberately dumb (plain nested loops over `Vec<Vec<f64>>`).
    fn oracle_bigru(
        ps: &ParamSet,
        enc: &EncoderParams,
        ids: &[usize],
        d_emb: usize,
        d_h: usize,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let get = |id: crate::numerics::ParamId| ps.entry(id).data().to_vec();
        let table = get(enc.embed);
        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        let cell = |g: &GruParams, x: &[f64], h: &[f64]| -> Vec<f64> {
            let mv = |w: &[f64], v: &[f64], rows: usize| -> Vec<f64> {
                (0..rows)
                    .map(|r| (0..v.len()).map(|c| w[r * v.len() + c] * v[c]).sum())
                    .collect()
            };
            let wz = mv(&get(g.update_w), x, d_h);
            let uz = mv(&get(g.update_u), h, d_h);
            let bz = get(g.update_b);
            let wr = mv(&get(g.reset_w), x, d_h);
            let ur = mv(&get(g.reset_u), h, d_h);
            let br = get(g.reset_b);
            let wc = get(g.cand_w);
            let uc = get(g.cand_u);
            let bc = get(g.cand_b);
            let z: Vec<f64> = (0..d_h).map(|i| sigmoid(wz[i] + uz[i] + bz[i])).collect();
            let r: Vec<f64> = (0..d_h).map(|i| sigmoid(wr[i] + ur[i] + br[i])).collect();
            let rh: Vec<f64> = (0..d_h).map(|i| r[i] * h[i]).collect();
            (0..d_h)
                .map(|i| {
                    let wcx: f64 = (0..x.len()).map(|c| wc[i * x.len() + c] * x[c]).sum();
                    let ucrh: f64 = (0..d_h).map(|c| uc[i * d_h + c] * rh[c]).sum();
                    let cand = (wcx + ucrh + bc[i]).tanh();
                    (1.0 - z[i]) * h[i] + z[i] * cand
                })
                .collect()
        };
        let xs: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| table[id * d_emb..(id + 1) * d_emb].to_vec())
            .collect();
        let mut f = vec![0.0; d_h];
        let mut fs = Vec::new();
        for x in &xs {
            f = cell(&enc.fwd, x, &f);
            fs.push(f.clone());
        }
        let mut b = vec![0.0; d_h];
        let mut bs = vec![Vec::new(); xs.len()];
        for i in (0..xs.len()).rev() {
            b = cell(&enc.bwd, &xs[i], &b);
            bs[i] = b.clone();
        }
        let h_u = (0..xs.len())
            .map(|i| (0..d_h).map(|j| fs[i][j] + bs[i][j]).collect())
            .collect();
        let mut fin = fs[xs.len() - 1].clone();
        fin.extend_from_slice(&bs[0]);
        (h_u, fin)
    }

    #[test]
    fn three_token_pass_matches_scalar_oracle() {
        let (ps, enc) = params(7, 5, 4, 0.5);
        let ids = [1usize, 4, 6];
        let mut tape = Tape::new();
        let out = encode_context(&mut tape, &ps, &enc, &ids).unwrap();
        let (h_oracle, fin_oracle) = oracle_bigru(&ps, &enc, &ids, 5, 4);
        for (node, want) in out.h_u.iter().zip(&h_oracle) {
            for (a, b) in tape.value(*node).iter().zip(want) {
                assert!((a - b).abs() < 1e-10, "h_u mismatch: {a} vs {b}");
            }
        }
        for (a, b) in tape.value(out.final_state).iter().zip(&fin_oracle) {
            assert!((a - b).abs() < 1e-10, "final mismatch: {a} vs {b}");
        }
    }
}
