//! Additive attention: a one-hidden-layer MLP with tanh scores each
//! (query, key) pair, energies softmax into weights, and the context is
//! the weight-mixed key sum.

use rand::Rng;

use crate::numerics::{NodeId, NumericsError, ParamId, ParamSet, Tape};

/// Parameters of one attention head: energy(q, k) = v·tanh(Wq·q + Wk·k + b).
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl AttnParams {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        prefix: &str,
        d_query: usize,
        d_key: usize,
        d_attn: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            wq: ps.register_uniform(&format!("{prefix}.wq"), vec![d_attn, d_query], range, rng)?,
            wk: ps.register_uniform(&format!("{prefix}.wk"), vec![d_attn, d_key], range, rng)?,
            b: ps.register_zeros(&format!("{prefix}.b"), vec![d_attn])?,
            v: ps.register_uniform(&format!("{prefix}.v"), vec![d_attn], range, rng)?,
        })
    }

    pub fn lookup(ps: &ParamSet, prefix: &str) -> Result<Self, NumericsError> {
        Ok(Self {
            wq: ps.id(&format!("{prefix}.wq"))?,
            wk: ps.id(&format!("{prefix}.wk"))?,
            b: ps.id(&format!("{prefix}.b"))?,
            v: ps.id(&format!("{prefix}.v"))?,
        })
    }
}

/// Key-side work that doesn't depend on the query — `Wk·k_j + b` for each
/// key — hoisted out so a decoder attending over the same sequence every
/// step pays for it once.
pub struct AttnKeys {
    keys: Vec<NodeId>,
    projected: Vec<NodeId>,
}

impl AttnKeys {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

pub fn project_keys(
    tape: &mut Tape,
    ps: &ParamSet,
    p: &AttnParams,
    keys: &[NodeId],
) -> Result<AttnKeys, NumericsError> {
    if keys.is_empty() {
        return Err(NumericsError::InvalidArgument(
            "attention requires at least one key".into(),
        ));
    }
    let wk = tape.param(ps, p.wk);
    let b = tape.param(ps, p.b);
    let projected = keys
        .iter()
        .map(|&k| {
            let wkk = tape.matvec(wk, k)?;
            tape.add(wkk, b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttnKeys { keys: keys.to_vec(), projected })
}

/// Attention energies for `query` against each projected key, as one
/// vector node. Split out so tests can inspect pre-softmax scores.
pub fn attend_energies(
    tape: &mut Tape,
    ps: &ParamSet,
    p: &AttnParams,
    query: NodeId,
    keys: &AttnKeys,
) -> Result<NodeId, NumericsError> {
    let wq = tape.param(ps, p.wq);
    let v = tape.param(ps, p.v);
    let wqq = tape.matvec(wq, query)?;
    let scores = keys
        .projected
        .iter()
        .map(|&pk| {
            let pre = tape.add(wqq, pk)?;
            let act = tape.tanh(pre);
            tape.dot(v, act)
        })
        .collect::<Result<Vec<_>, _>>()?;
    tape.concat(&scores)
}

/// Full attention read: returns `(context, weights)` where weights are
/// the softmaxed energies and context is `Σ_j α_j · key_j`.
pub fn attend(
    tape: &mut Tape,
    ps: &ParamSet,
    p: &AttnParams,
    query: NodeId,
    keys: &AttnKeys,
) -> Result<(NodeId, NodeId), NumericsError> {
    let energies = attend_energies(tape, ps, p, query, keys)?;
    let weights = tape.softmax(energies)?;
    let context = tape.weighted_sum(weights, &keys.keys)?;
    Ok((context, weights))
}
