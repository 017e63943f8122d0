//! Classification-style policy makers used as comparison points.
//!
//! Both reuse the encoder and belief tracker unchanged; only the action
//! head differs. E2ECM runs one independent binary classifier per
//! dialogue act and can never attach parameters; CDM picks a single act
//! and a single slot with multi-class classifiers, gating the slot with
//! per-slot presence classifiers. Their structural limits (no
//! parameters / at most one act) are the point of the comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ActItem, Corpus, DialogueAction};
use crate::model::{argmax, EncoderParams, GdpModel, ModelConfig, TrackerParams};
use crate::numerics::{NodeId, NumericsError, ParamId, ParamSet, Tape};

/// Which policy maker a model (or checkpoint) carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Gdp,
    E2ecm,
    Cdm,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Gdp => "gdp",
            PolicyKind::E2ecm => "e2ecm",
            PolicyKind::Cdm => "cdm",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gdp" => Ok(PolicyKind::Gdp),
            "e2ecm" => Ok(PolicyKind::E2ecm),
            "cdm" => Ok(PolicyKind::Cdm),
            other => Err(format!(
                "unknown policy '{other}' (expected gdp, e2ecm, or cdm)"
            )),
        }
    }
}

/// Classifier input `[encoder final state, tracker final state, k_t]`.
pub fn classifier_features(
    tape: &mut Tape,
    enc_final: NodeId,
    trk_final: NodeId,
    kb_count: &[f64],
) -> Result<NodeId, NumericsError> {
    let kt = tape.input(vec![kb_count.len()], kb_count.to_vec())?;
    tape.concat(&[enc_final, trk_final, kt])
}

/// Width of the classifier input for a given architecture.
pub fn classifier_feat_dim(cfg: &ModelConfig) -> usize {
    2 * cfg.d_enc + cfg.d_enc + cfg.kb_dim
}

/// Act labels ordered by gold-corpus frequency (descending, ties
/// lexicographic). Multi-label act sets are serialized in this order so
/// the output — and therefore template lookup — is stable.
pub fn act_frequency_order(corpus: &Corpus) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for dialogue in corpus.dialogues() {
        for turn in dialogue {
            for item in &turn.action.items {
                *counts.entry(&item.act).or_insert(0) += 1;
            }
        }
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    order.into_iter().map(|(act, _)| act.to_string()).collect()
}

/// Slot names in lexicographic order.
pub fn slot_order(corpus: &Corpus) -> Vec<String> {
    let mut slots: Vec<String> = corpus
        .dialogues()
        .iter()
        .flatten()
        .flat_map(|t| t.action.items.iter().filter_map(|it| it.slot.clone()))
        .collect();
    slots.sort();
    slots.dedup();
    slots
}

/// One sigmoid classifier per act over the shared feature vector.
#[derive(Debug, Clone)]
pub struct E2ecmHead {
    /// Canonical act order; index i belongs to `classifiers[i]`.
    pub acts: Vec<String>,
    /// Per-act `(weights, bias)`.
    pub classifiers: Vec<(ParamId, ParamId)>,
    /// An act is emitted when its score reaches this value.
    pub threshold: f64,
}

impl E2ecmHead {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        acts: &[String],
        feat_dim: usize,
        threshold: f64,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        if acts.is_empty() {
            return Err(NumericsError::InvalidArgument(
                "e2ecm needs at least one act label".into(),
            ));
        }
        let mut classifiers = Vec::with_capacity(acts.len());
        for act in acts {
            let w =
                ps.register_uniform(&format!("e2ecm.cls.{act}.w"), vec![feat_dim], range, rng)?;
            let b = ps.register_zeros(&format!("e2ecm.cls.{act}.b"), vec![1])?;
            classifiers.push((w, b));
        }
        Ok(Self { acts: acts.to_vec(), classifiers, threshold })
    }

    pub fn lookup(ps: &ParamSet, acts: &[String], threshold: f64) -> Result<Self, NumericsError> {
        let mut classifiers = Vec::with_capacity(acts.len());
        for act in acts {
            classifiers.push((
                ps.id(&format!("e2ecm.cls.{act}.w"))?,
                ps.id(&format!("e2ecm.cls.{act}.b"))?,
            ));
        }
        Ok(Self { acts: acts.to_vec(), classifiers, threshold })
    }

    /// Per-act probabilities in `self.acts` order.
    pub fn scores(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
    ) -> Result<Vec<NodeId>, NumericsError> {
        let mut out = Vec::with_capacity(self.classifiers.len());
        for &(w, b) in &self.classifiers {
            let wn = tape.param(ps, w);
            let bn = tape.param(ps, b);
            let logit = tape.dot(wn, feat)?;
            let logit = tape.add(logit, bn)?;
            out.push(tape.sigmoid(logit));
        }
        Ok(out)
    }

    /// Thresholded act set, acts in canonical order, never any
    /// parameters.
    pub fn predict(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
    ) -> Result<DialogueAction, NumericsError> {
        let scores = self.scores(tape, ps, feat)?;
        let mut items = Vec::new();
        for (act, score) in self.acts.iter().zip(&scores) {
            if tape.value(*score)[0] >= self.threshold {
                items.push(ActItem::bare(act.clone()));
            }
        }
        Ok(DialogueAction::new(items))
    }

    /// Multi-label binary cross-entropy against the gold act set. Gold
    /// acts outside the head's label inventory are an error — the
    /// classifier could never express them.
    pub fn loss(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
        gold: &DialogueAction,
    ) -> Result<NodeId, NumericsError> {
        let gold_acts = gold.act_labels();
        for act in &gold_acts {
            if !self.acts.iter().any(|a| a == act) {
                return Err(NumericsError::InvalidArgument(format!(
                    "gold act '{act}' is not in the e2ecm label set"
                )));
            }
        }
        let scores = self.scores(tape, ps, feat)?;
        let mut total: Option<NodeId> = None;
        for (act, score) in self.acts.iter().zip(&scores) {
            let label = if gold_acts.contains(&act.as_str()) { 1.0 } else { 0.0 };
            let term = tape.bce(*score, label)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        // acts is non-empty by construction
        Ok(total.expect("e2ecm head has classifiers"))
    }
}

/// Multi-class act + multi-class slot classifiers, with per-slot
/// presence gates deciding whether the chosen slot is attached.
#[derive(Debug, Clone)]
pub struct CdmHead {
    pub acts: Vec<String>,
    pub slots: Vec<String>,
    pub act_w: ParamId,
    pub act_b: ParamId,
    pub slot_w: ParamId,
    pub slot_b: ParamId,
    /// Per-slot `(weights, bias)`, aligned with `slots`.
    pub presence: Vec<(ParamId, ParamId)>,
}

impl CdmHead {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        acts: &[String],
        slots: &[String],
        feat_dim: usize,
        range: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        if acts.is_empty() || slots.is_empty() {
            return Err(NumericsError::InvalidArgument(
                "cdm needs non-empty act and slot inventories".into(),
            ));
        }
        let act_w = ps.register_uniform("cdm.act.w", vec![acts.len(), feat_dim], range, rng)?;
        let act_b = ps.register_zeros("cdm.act.b", vec![acts.len()])?;
        let slot_w = ps.register_uniform("cdm.slot.w", vec![slots.len(), feat_dim], range, rng)?;
        let slot_b = ps.register_zeros("cdm.slot.b", vec![slots.len()])?;
        let mut presence = Vec::with_capacity(slots.len());
        for slot in slots {
            let w =
                ps.register_uniform(&format!("cdm.pres.{slot}.w"), vec![feat_dim], range, rng)?;
            let b = ps.register_zeros(&format!("cdm.pres.{slot}.b"), vec![1])?;
            presence.push((w, b));
        }
        Ok(Self {
            acts: acts.to_vec(),
            slots: slots.to_vec(),
            act_w,
            act_b,
            slot_w,
            slot_b,
            presence,
        })
    }

    pub fn lookup(
        ps: &ParamSet,
        acts: &[String],
        slots: &[String],
    ) -> Result<Self, NumericsError> {
        let mut presence = Vec::with_capacity(slots.len());
        for slot in slots {
            presence.push((
                ps.id(&format!("cdm.pres.{slot}.w"))?,
                ps.id(&format!("cdm.pres.{slot}.b"))?,
            ));
        }
        Ok(Self {
            acts: acts.to_vec(),
            slots: slots.to_vec(),
            act_w: ps.id("cdm.act.w")?,
            act_b: ps.id("cdm.act.b")?,
            slot_w: ps.id("cdm.slot.w")?,
            slot_b: ps.id("cdm.slot.b")?,
            presence,
        })
    }

    fn act_dist(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let w = tape.param(ps, self.act_w);
        let b = tape.param(ps, self.act_b);
        let logits = tape.matvec(w, feat)?;
        let logits = tape.add(logits, b)?;
        tape.softmax(logits)
    }

    fn slot_dist(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let w = tape.param(ps, self.slot_w);
        let b = tape.param(ps, self.slot_b);
        let logits = tape.matvec(w, feat)?;
        let logits = tape.add(logits, b)?;
        tape.softmax(logits)
    }

    fn presence_score(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
        slot_idx: usize,
    ) -> Result<NodeId, NumericsError> {
        let (w, b) = self.presence[slot_idx];
        let wn = tape.param(ps, w);
        let bn = tape.param(ps, b);
        let logit = tape.dot(wn, feat)?;
        let logit = tape.add(logit, bn)?;
        Ok(tape.sigmoid(logit))
    }

    /// Exactly one act. Its single candidate slot (argmax) is attached —
    /// with the slot's placeholder as value — only when that slot's
    /// presence classifier fires.
    pub fn predict(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
    ) -> Result<DialogueAction, NumericsError> {
        let act_dist = self.act_dist(tape, ps, feat)?;
        let act = self.acts[argmax(tape.value(act_dist))].clone();
        let slot_dist = self.slot_dist(tape, ps, feat)?;
        let slot_idx = argmax(tape.value(slot_dist));
        let pres = self.presence_score(tape, ps, feat, slot_idx)?;
        let item = if tape.value(pres)[0] >= 0.5 {
            let slot = self.slots[slot_idx].clone();
            let value = format!("{slot}_slot");
            ActItem::full(act, slot, value)
        } else {
            ActItem::bare(act)
        };
        Ok(DialogueAction::new(vec![item]))
    }

    /// Cross-entropy on the first gold item's act, cross-entropy on the
    /// first parameterized gold item's slot (skipped when no gold item
    /// has one), and per-slot presence binary cross-entropies labeled by
    /// whether any gold item uses the slot.
    pub fn loss(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        feat: NodeId,
        gold: &DialogueAction,
    ) -> Result<NodeId, NumericsError> {
        let gold = gold.canonicalize();
        let first = gold.items.first().ok_or_else(|| {
            NumericsError::InvalidArgument("cdm loss needs a non-empty gold action".into())
        })?;
        let act_idx = self.acts.iter().position(|a| *a == first.act).ok_or_else(|| {
            NumericsError::InvalidArgument(format!(
                "gold act '{}' is not in the cdm label set",
                first.act
            ))
        })?;
        let act_dist = self.act_dist(tape, ps, feat)?;
        let mut total = tape.cross_entropy(act_dist, act_idx)?;

        if let Some(slot) = gold.items.iter().find_map(|it| it.slot.as_deref()) {
            let slot_idx = self.slots.iter().position(|s| s == slot).ok_or_else(|| {
                NumericsError::InvalidArgument(format!(
                    "gold slot '{slot}' is not in the cdm label set"
                ))
            })?;
            let slot_dist = self.slot_dist(tape, ps, feat)?;
            let slot_ce = tape.cross_entropy(slot_dist, slot_idx)?;
            total = tape.add(total, slot_ce)?;
        }

        for (i, slot) in self.slots.iter().enumerate() {
            let used = gold.items.iter().any(|it| it.slot.as_deref() == Some(slot));
            let score = self.presence_score(tape, ps, feat, i)?;
            let term = tape.bce(score, if used { 1.0 } else { 0.0 })?;
            total = tape.add(total, term)?;
        }
        Ok(total)
    }
}

/// Encoder + tracker + E2ECM head.
#[derive(Debug, Clone)]
pub struct E2ecmModel {
    pub cfg: ModelConfig,
    pub vocab_size: usize,
    pub enc: EncoderParams,
    pub trk: TrackerParams,
    pub head: E2ecmHead,
}

impl E2ecmModel {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
        acts: &[String],
        threshold: f64,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let r = cfg.init_range;
        let enc = EncoderParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, r, rng)?;
        let trk =
            TrackerParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, cfg.d_attn, r, rng)?;
        let head =
            E2ecmHead::register(ps, acts, classifier_feat_dim(cfg), threshold, r, rng)?;
        Ok(Self { cfg: cfg.clone(), vocab_size, enc, trk, head })
    }

    pub fn lookup(
        ps: &ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
        acts: &[String],
        threshold: f64,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            cfg: cfg.clone(),
            vocab_size,
            enc: EncoderParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            trk: TrackerParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            head: E2ecmHead::lookup(ps, acts, threshold)?,
        })
    }
}

/// Encoder + tracker + CDM head.
#[derive(Debug, Clone)]
pub struct CdmModel {
    pub cfg: ModelConfig,
    pub vocab_size: usize,
    pub enc: EncoderParams,
    pub trk: TrackerParams,
    pub head: CdmHead,
}

impl CdmModel {
    pub fn register<R: Rng>(
        ps: &mut ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
        acts: &[String],
        slots: &[String],
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let r = cfg.init_range;
        let enc = EncoderParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, r, rng)?;
        let trk =
            TrackerParams::register(ps, vocab_size, cfg.d_emb, cfg.d_enc, cfg.d_attn, r, rng)?;
        let head = CdmHead::register(ps, acts, slots, classifier_feat_dim(cfg), r, rng)?;
        Ok(Self { cfg: cfg.clone(), vocab_size, enc, trk, head })
    }

    pub fn lookup(
        ps: &ParamSet,
        vocab_size: usize,
        cfg: &ModelConfig,
        acts: &[String],
        slots: &[String],
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            cfg: cfg.clone(),
            vocab_size,
            enc: EncoderParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            trk: TrackerParams::lookup(ps, cfg.d_emb, cfg.d_enc)?,
            head: CdmHead::lookup(ps, acts, slots)?,
        })
    }
}

/// Any of the three pipelines behind one type, for training, evaluation
/// and checkpointing code that is generic over the policy maker.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Gdp(GdpModel),
    E2ecm(E2ecmModel),
    Cdm(CdmModel),
}

impl AnyModel {
    pub fn kind(&self) -> PolicyKind {
        match self {
            AnyModel::Gdp(_) => PolicyKind::Gdp,
            AnyModel::E2ecm(_) => PolicyKind::E2ecm,
            AnyModel::Cdm(_) => PolicyKind::Cdm,
        }
    }

    pub fn cfg(&self) -> &ModelConfig {
        match self {
            AnyModel::Gdp(m) => &m.cfg,
            AnyModel::E2ecm(m) => &m.cfg,
            AnyModel::Cdm(m) => &m.cfg,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            AnyModel::Gdp(m) => m.vocab_size,
            AnyModel::E2ecm(m) => m.vocab_size,
            AnyModel::Cdm(m) => m.vocab_size,
        }
    }

    pub fn enc(&self) -> &EncoderParams {
        match self {
            AnyModel::Gdp(m) => &m.enc,
            AnyModel::E2ecm(m) => &m.enc,
            AnyModel::Cdm(m) => &m.enc,
        }
    }

    pub fn trk(&self) -> &TrackerParams {
        match self {
            AnyModel::Gdp(m) => &m.trk,
            AnyModel::E2ecm(m) => &m.trk,
            AnyModel::Cdm(m) => &m.trk,
        }
    }

    /// Parameter-name prefix of the action head (everything else is the
    /// shared encoder/tracker/embedding).
    pub fn head_prefix(&self) -> &'static str {
        match self {
            AnyModel::Gdp(_) => "pol.",
            AnyModel::E2ecm(_) => "e2ecm.",
            AnyModel::Cdm(_) => "cdm.",
        }
    }

    /// Freezes the embedding, encoder and tracker, leaving only the
    /// action head trainable — the fine-tuning regime.
    pub fn freeze_shared(&self, ps: &mut ParamSet) {
        ps.set_trainable_prefix("embed", false);
        ps.set_trainable_prefix("enc.", false);
        ps.set_trainable_prefix("trk.", false);
    }
}
