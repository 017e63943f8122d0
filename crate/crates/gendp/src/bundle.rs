//! A model plus everything needed to run it: parameters, vocabulary,
//! lexicons, and (for the classifier baselines) the label orders and
//! decision threshold their heads were built with. Bundles round-trip
//! through checkpoint files; the extras block carries the non-tensor
//! state.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    act_frequency_order, slot_order, AnyModel, CdmModel, E2ecmModel, PolicyKind,
};
use crate::corpus::codec::Lexicons;
use crate::corpus::{Corpus, Vocabulary};
use crate::model::{GdpModel, ModelConfig};
use crate::numerics::checkpoint::{self, CheckpointError};
use crate::numerics::rng::{stream, tags};
use crate::numerics::{NumericsError, ParamSet};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint extras malformed: {0}")]
    Extras(#[from] serde_json::Error),
    #[error("checkpoint carries unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("{0} checkpoint is missing its classifier head metadata")]
    MissingHead(PolicyKind),
}

/// Label orders and threshold a classifier head was registered with;
/// needed to rebuild the head from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadInfo {
    pub acts: Vec<String>,
    pub slots: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub ps: ParamSet,
    pub model: AnyModel,
    pub vocab: Vocabulary,
    pub lexicons: Lexicons,
    pub head: Option<HeadInfo>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ExtrasSchema {
    vocab: Vec<String>,
    lexicons: Lexicons,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<HeadInfo>,
}

/// Registers a fresh model of the requested kind. Classifier label
/// orders are taken from training-corpus statistics; `threshold` is the
/// E2ECM decision boundary (ignored by the other kinds).
pub fn init_model(
    kind: PolicyKind,
    cfg: &ModelConfig,
    train: &Corpus,
    vocab: Vocabulary,
    threshold: f64,
    seed: u64,
) -> Result<ModelBundle, BundleError> {
    let mut ps = ParamSet::new();
    let mut rng = stream(seed, &[tags::INIT]);
    let lexicons = Lexicons::from_corpus(train);
    let (model, head) = match kind {
        PolicyKind::Gdp => (
            AnyModel::Gdp(GdpModel::register(&mut ps, vocab.size(), cfg, &mut rng)?),
            None,
        ),
        PolicyKind::E2ecm => {
            let acts = act_frequency_order(train);
            let model = E2ecmModel::register(&mut ps, vocab.size(), cfg, &acts, threshold, &mut rng)?;
            (
                AnyModel::E2ecm(model),
                Some(HeadInfo { acts, slots: Vec::new(), threshold }),
            )
        }
        PolicyKind::Cdm => {
            let acts = act_frequency_order(train);
            let slots = slot_order(train);
            let model = CdmModel::register(&mut ps, vocab.size(), cfg, &acts, &slots, &mut rng)?;
            (AnyModel::Cdm(model), Some(HeadInfo { acts, slots, threshold: 0.0 }))
        }
    };
    Ok(ModelBundle { ps, model, vocab, lexicons, head, seed })
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        let extras = ExtrasSchema {
            vocab: self.vocab.tokens().to_vec(),
            lexicons: self.lexicons.clone(),
            head: self.head.clone(),
        };
        checkpoint::save(
            path,
            self.seed,
            self.model.kind().as_str(),
            serde_json::to_value(self.model.cfg())?,
            serde_json::to_value(&extras)?,
            &self.ps,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let ck = checkpoint::load(path)?;
        let kind: PolicyKind = ck
            .manifest
            .model_kind
            .parse()
            .map_err(|_| BundleError::UnknownKind(ck.manifest.model_kind.clone()))?;
        let cfg: ModelConfig = serde_json::from_value(ck.manifest.config.clone())?;
        let extras: ExtrasSchema = serde_json::from_value(ck.manifest.extras.clone())?;
        let vocab = Vocabulary::from_tokens(extras.vocab);

        // Register a same-shaped parameter set (the values are
        // placeholders), then overwrite every tensor from the file.
        let mut ps = ParamSet::new();
        let mut rng = stream(ck.manifest.seed, &[tags::INIT]);
        let model = match kind {
            PolicyKind::Gdp => {
                AnyModel::Gdp(GdpModel::register(&mut ps, vocab.size(), &cfg, &mut rng)?)
            }
            PolicyKind::E2ecm => {
                let head = extras.head.as_ref().ok_or(BundleError::MissingHead(kind))?;
                AnyModel::E2ecm(E2ecmModel::register(
                    &mut ps,
                    vocab.size(),
                    &cfg,
                    &head.acts,
                    head.threshold,
                    &mut rng,
                )?)
            }
            PolicyKind::Cdm => {
                let head = extras.head.as_ref().ok_or(BundleError::MissingHead(kind))?;
                AnyModel::Cdm(CdmModel::register(
                    &mut ps,
                    vocab.size(),
                    &cfg,
                    &head.acts,
                    &head.slots,
                    &mut rng,
                )?)
            }
        };
        ck.apply_to(&mut ps)?;
        Ok(Self {
            ps,
            model,
            vocab,
            lexicons: extras.lexicons,
            head: extras.head,
            seed: ck.manifest.seed,
        })
    }
}
