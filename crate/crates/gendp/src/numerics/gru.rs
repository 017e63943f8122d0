//! Gated recurrent unit built from tape primitives.

use rand::Rng;

use super::tape::{NodeId, Tape};
use super::tensor::{ParamId, ParamSet};
use super::NumericsError;

/// Parameter handles for one GRU cell (update/reset gates + candidate).
#[derive(Debug, Clone)]
pub struct GruParams {
    pub update_w: ParamId,
    pub update_u: ParamId,
    pub update_b: ParamId,
    pub reset_w: ParamId,
    pub reset_u: ParamId,
    pub reset_b: ParamId,
    pub cand_w: ParamId,
    pub cand_u: ParamId,
    pub cand_b: ParamId,
    pub d_in: usize,
    pub d_h: usize,
}

impl GruParams {
    /// Registers the nine tensors under `prefix` (weights uniform in
    /// `(-range, range)`, biases zero).
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let w = |ps: &mut ParamSet, gate: &str, rng: &mut R| -> Result<_, NumericsError> {
            Ok((
                ps.register_uniform(&format!("{prefix}.{gate}.w"), vec![d_h, d_in], range, rng)?,
                ps.register_uniform(&format!("{prefix}.{gate}.u"), vec![d_h, d_h], range, rng)?,
                ps.register_zeros(&format!("{prefix}.{gate}.b"), vec![d_h])?,
            ))
        };
        let (update_w, update_u, update_b) = w(ps, "update", rng)?;
        let (reset_w, reset_u, reset_b) = w(ps, "reset", rng)?;
        let (cand_w, cand_u, cand_b) = w(ps, "cand", rng)?;
        Ok(GruParams {
            update_w,
            update_u,
            update_b,
            reset_w,
            reset_u,
            reset_b,
            cand_w,
            cand_u,
            cand_b,
            d_in,
            d_h,
        })
    }

    /// Recovers handles by name after loading a checkpoint.
    pub fn lookup(
        ps: &ParamSet,
        prefix: &str,
        d_in: usize,
        d_h: usize,
    ) -> Result<Self, NumericsError> {
        Ok(GruParams {
            update_w: ps.id(&format!("{prefix}.update.w"))?,
            update_u: ps.id(&format!("{prefix}.update.u"))?,
            update_b: ps.id(&format!("{prefix}.update.b"))?,
            reset_w: ps.id(&format!("{prefix}.reset.w"))?,
            reset_u: ps.id(&format!("{prefix}.reset.u"))?,
            reset_b: ps.id(&format!("{prefix}.reset.b"))?,
            cand_w: ps.id(&format!("{prefix}.cand.w"))?,
            cand_u: ps.id(&format!("{prefix}.cand.u"))?,
            cand_b: ps.id(&format!("{prefix}.cand.b"))?,
            d_in,
            d_h,
        })
    }
}

/// One GRU step:
///
/// ```text
/// z  = σ(Wz·x + Uz·h + bz)
/// r  = σ(Wr·x + Ur·h + br)
/// h̃  = tanh(Wc·x + Uc·(r⊙h) + bc)
/// h' = (1−z)⊙h + z⊙h̃
/// ```
///
/// The reset gate scales the hidden state *before* the candidate
/// projection. With all parameters at zero this returns exactly `0.5·h`.
pub fn gru_cell(
    tape: &mut Tape,
    ps: &ParamSet,
    p: &GruParams,
    x: NodeId,
    h: NodeId,
) -> Result<NodeId, NumericsError> {
    let gate = |tape: &mut Tape, w, u, b, x, h| -> Result<NodeId, NumericsError> {
        let wn = tape.param(ps, w);
        let un = tape.param(ps, u);
        let bn = tape.param(ps, b);
        let wx = tape.matvec(wn, x)?;
        let uh = tape.matvec(un, h)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, bn)
    };
    let z_pre = gate(tape, p.update_w, p.update_u, p.update_b, x, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, p.reset_w, p.reset_u, p.reset_b, x, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let c_pre = gate(tape, p.cand_w, p.cand_u, p.cand_b, x, rh)?;
    let c = tape.tanh(c_pre);
    let keep = tape.one_minus(z);
    let kept = tape.mul(keep, h)?;
    let new = tape.mul(z, c)?;
    tape.add(kept, new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;
    use rand::Rng;

    fn zero_gru(ps: &mut ParamSet, d_in: usize, d_h: usize) -> GruParams {
        let mut rng = stream(0, &[]);
        let g = GruParams::register(ps, "g", d_in, d_h, 0.0, &mut rng).unwrap();
        g
    }

    #[test]
    fn zero_params_halve_hidden_state() {
        let mut ps = ParamSet::new();
        let g = zero_gru(&mut ps, 2, 3);
        let mut t = Tape::new();
        let x = t.input(vec![2], vec![0.7, -0.3]).unwrap();
        let h = t.input(vec![3], vec![1.0, -2.0, 0.125]).unwrap();
        let out = gru_cell(&mut t, &ps, &g, x, h).unwrap();
        // Exact halving, not approximate.
        assert_eq!(t.value(out), &[0.5, -1.0, 0.0625]);
    }

    #[test]
    fn saturated_update_gate_keeps_hidden_state() {
        let mut ps = ParamSet::new();
        let g = zero_gru(&mut ps, 2, 3);
        // z = σ(−1e9) ≈ 0 → h' ≈ h.
        let bid = g.update_b;
        ps.load_values(bid, vec![-1e9; 3]).unwrap();
        let mut t = Tape::new();
        let x = t.input(vec![2], vec![0.7, -0.3]).unwrap();
        let h = t.input(vec![3], vec![0.2, -0.4, 0.6]).unwrap();
        let out = gru_cell(&mut t, &ps, &g, x, h).unwrap();
        for (o, e) in t.value(out).iter().zip(&[0.2, -0.4, 0.6]) {
            assert!((o - e).abs() < 1e-6);
        }
    }

    /// Independent scalar-loop oracle of the same gate equations.
    fn gru_oracle(
        ps: &ParamSet,
        g: &GruParams,
        x: &[f64],
        h: &[f64],
    ) -> Vec<f64> {
        let mv = |pid: ParamId, v: &[f64], rows: usize| -> Vec<f64> {
            let d = ps.entry(pid).data();
            let cols = v.len();
            (0..rows)
                .map(|i| (0..cols).map(|j| d[i * cols + j] * v[j]).sum())
                .collect()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let bz = ps.entry(g.update_b).data();
        let br = ps.entry(g.reset_b).data();
        let bc = ps.entry(g.cand_b).data();
        let wzx = mv(g.update_w, x, g.d_h);
        let uzh = mv(g.update_u, h, g.d_h);
        let wrx = mv(g.reset_w, x, g.d_h);
        let urh = mv(g.reset_u, h, g.d_h);
        let z: Vec<f64> = (0..g.d_h).map(|i| sig(wzx[i] + uzh[i] + bz[i])).collect();
        let r: Vec<f64> = (0..g.d_h).map(|i| sig(wrx[i] + urh[i] + br[i])).collect();
        let rh: Vec<f64> = (0..g.d_h).map(|i| r[i] * h[i]).collect();
        let wcx = mv(g.cand_w, x, g.d_h);
        let ucrh = mv(g.cand_u, &rh, g.d_h);
        (0..g.d_h)
            .map(|i| {
                let c = (wcx[i] + ucrh[i] + bc[i]).tanh();
                (1.0 - z[i]) * h[i] + z[i] * c
            })
            .collect()
    }

    #[test]
    fn matches_scalar_oracle_on_random_params() {
        let mut rng = stream(42, &[]);
        let mut ps = ParamSet::new();
        let g = GruParams::register(&mut ps, "g", 4, 5, 0.2, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        let h: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut t = Tape::new();
        let xn = t.input(vec![4], x.clone()).unwrap();
        let hn = t.input(vec![5], h.clone()).unwrap();
        let out = gru_cell(&mut t, &ps, &g, xn, hn).unwrap();
        let expect = gru_oracle(&ps, &g, &x, &h);
        for (a, b) in t.value(out).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut ps = ParamSet::new();
        let g = zero_gru(&mut ps, 2, 3);
        let mut t = Tape::new();
        let x = t.input(vec![5], vec![0.0; 5]).unwrap(); // wrong d_in
        let h = t.input(vec![3], vec![0.0; 3]).unwrap();
        assert!(gru_cell(&mut t, &ps, &g, x, h).is_err());
    }
}
