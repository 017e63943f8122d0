//! Supervised training and REINFORCE fine-tuning.
//!
//! Supervised training teacher-forces both decoders and minimizes the
//! summed cross-entropy of gold belief and action tokens. Fine-tuning
//! freezes everything but the policy decoder and follows the sampled
//! action's per-step rewards, estimated by rolling the policy out to
//! completion.

mod reinforce;
mod reward;
mod supervised;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::vocab::PAD;
use crate::corpus::{serialize_action, serialize_belief, BeliefState, Corpus, DialogueAction, Vocabulary};
use crate::eval::EvalError;
use crate::model::context_ids;
use crate::numerics::NumericsError;

pub use reinforce::{
    dev_apra, reinforce_update, sample_step_rewards, train_rl, RlEpochStat, RlOutcome, RlSetup,
    StepRewardTrace,
};
pub use reward::{reward, reward_for_tokens};
pub use supervised::{mean_loss, supervised_loss, train_supervised, EpochStat, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("bad training config: {0}")]
    InvalidConfig(String),
    #[error("gradient reached frozen parameter '{0}'")]
    FrozenGradient(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimization hyperparameters. Defaults are the reference values:
/// Adam at 0.001 supervised / 0.0001 for fine-tuning, weight decay
/// 0.001, early stopping on dev loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_supervised: f64,
    pub lr_rl: f64,
    pub weight_decay: f64,
    /// Stop after this many epochs without a dev-loss improvement.
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_supervised: 0.001,
            lr_rl: 0.0001,
            weight_decay: 0.001,
            patience: 3,
            batch_size: 16,
            max_epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.lr_supervised <= 0.0 || self.lr_rl <= 0.0 {
            return Err(TrainingError::InvalidConfig(
                "learning rates must be positive".into(),
            ));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainingError::InvalidConfig(
                "weight decay must be non-negative".into(),
            ));
        }
        if self.patience == 0 {
            return Err(TrainingError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainingError::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The fine-tuning reward scheme: +2 for an exactly right action, +1
/// when only the act set is right, −5 otherwise, with decay λ spreading
/// the terminal outcome back over earlier decode steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub full_correct: f64,
    pub act_only_correct: f64,
    pub wrong: f64,
    /// λ — per-step discount toward the start of the sequence.
    pub decay: f64,
    /// N — completions sampled per step for reward estimation.
    pub rollouts: usize,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            full_correct: 2.0,
            act_only_correct: 1.0,
            wrong: -5.0,
            decay: 0.8,
            rollouts: 5,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.rollouts == 0 {
            return Err(TrainingError::InvalidConfig(
                "reward estimation needs at least one rollout".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(TrainingError::InvalidConfig(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }

    /// `(lowest, highest)` attainable reward value.
    pub fn bounds(&self) -> (f64, f64) {
        let vals = [self.full_correct, self.act_only_correct, self.wrong];
        (
            vals.iter().copied().fold(f64::INFINITY, f64::min),
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// One turn, ready for the training loop: context already tokenized
/// against the gold history (teacher forcing), gold targets serialized
/// and encoded, and the gold-belief KB count for k_t.
#[derive(Debug, Clone)]
pub struct TurnExample {
    pub dialogue: usize,
    pub turn: usize,
    pub ctx_ids: Vec<usize>,
    /// Gold belief tokens plus terminator.
    pub gold_belief_ids: Vec<usize>,
    /// Gold action tokens plus terminator.
    pub gold_action_ids: Vec<usize>,
    pub gold_action: DialogueAction,
    /// KB result count under the gold belief.
    pub kb_count: usize,
}

/// Flattens a corpus into per-turn training examples. The encoder
/// context for turn t uses the *gold* belief and response of turn t−1.
/// PAD never carries loss: any padding token in a target is dropped
/// here, so the loss builders see only real positions.
pub fn prepare_examples(corpus: &Corpus, vocab: &Vocabulary) -> Vec<TurnExample> {
    let mut out = Vec::with_capacity(corpus.turn_count());
    for (d, dialogue) in corpus.dialogues().iter().enumerate() {
        let mut prev_belief = BeliefState::empty();
        let mut prev_response: &[String] = &[];
        for (t, turn) in dialogue.iter().enumerate() {
            let ctx_ids = context_ids(vocab, &prev_belief, prev_response, &turn.user);
            let mut gold_belief_ids = vocab.encode(&serialize_belief(&turn.belief));
            gold_belief_ids.retain(|&id| id != PAD);
            let mut gold_action_ids = vocab.encode(&serialize_action(&turn.action));
            gold_action_ids.retain(|&id| id != PAD);
            out.push(TurnExample {
                dialogue: d,
                turn: t,
                ctx_ids,
                gold_belief_ids,
                gold_action_ids,
                gold_action: turn.action.clone(),
                kb_count: turn.kb_count,
            });
            prev_belief = turn.belief.clone();
            prev_response = &turn.response;
        }
    }
    out
}

/// Writes a supervised training curve: `epoch,train_loss,dev_loss`.
pub fn write_supervised_curve(path: &Path, curve: &[EpochStat]) -> Result<(), TrainingError> {
    let mut buf = String::from("epoch,train_loss,dev_loss\n");
    for s in curve {
        buf.push_str(&format!("{},{},{}\n", s.epoch, s.train_loss, s.dev_loss));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

/// Writes a fine-tuning curve: `epoch,mean_reward,dev_apra`.
pub fn write_rl_curve(path: &Path, curve: &[RlEpochStat]) -> Result<(), TrainingError> {
    let mut buf = String::from("epoch,mean_reward,dev_apra\n");
    for s in curve {
        buf.push_str(&format!("{},{},{}\n", s.epoch, s.mean_reward, s.dev_apra));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

/// Tracks the best dev metric and counts epochs without improvement.
pub(crate) struct EarlyStopper {
    best: Option<f64>,
    stale: usize,
    patience: usize,
}

impl EarlyStopper {
    pub(crate) fn new(patience: usize) -> Self {
        Self { best: None, stale: 0, patience }
    }

    /// Feeds one epoch's dev loss; returns `(improved, stop_now)`.
    pub(crate) fn observe(&mut self, value: f64) -> (bool, bool) {
        match self.best {
            Some(best) if value >= best => {
                self.stale += 1;
                (false, self.stale >= self.patience)
            }
            _ => {
                self.best = Some(value);
                self.stale = 0;
                (true, false)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, Split};

    #[test]
    fn config_validation_catches_bad_values() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr_rl: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());

        assert!(RewardSpec::default().validate().is_ok());
        assert!(RewardSpec { rollouts: 0, ..Default::default() }.validate().is_err());
        assert!(RewardSpec { decay: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!(RewardSpec::default().bounds(), (-5.0, 2.0));
    }

    #[test]
    fn examples_chain_gold_history() {
        let text = concat!(
            r#"{"turns":[{"user":"cheap food","belief":["cheap"],"action":[["request","food"]],"response":"what food ?","kb_count":3},"#,
            r#"{"user":"french","belief":["cheap","french"],"action":[["offer","name","name_slot"]],"response":"ok","kb_count":1}]}"#,
            "\n",
        );
        let corpus = parse_corpus(text, Split::Train).unwrap();
        let vocab = Vocabulary::build(corpus.all_tokens());
        let ex = prepare_examples(&corpus, &vocab);
        assert_eq!(ex.len(), 2);

        // First turn: no history, context is just the user utterance.
        assert_eq!(ex[0].ctx_ids, vocab.encode(&["cheap".into(), "food".into()]));
        // Second turn: gold belief + gold response + user.
        let want: Vec<String> =
            ["cheap", "what", "food", "french"].iter().map(|s| s.to_string()).collect();
        assert_eq!(ex[1].ctx_ids, vocab.encode(&want));

        // Targets end with their terminators and carry the gold counts.
        assert_eq!(*ex[0].gold_belief_ids.last().unwrap(), crate::corpus::vocab::EOS_BELIEF);
        assert_eq!(*ex[1].gold_action_ids.last().unwrap(), crate::corpus::vocab::EOS_ACTION);
        assert_eq!(ex[0].kb_count, 3);
        assert_eq!(ex[1].turn, 1);
    }

    #[test]
    fn early_stopper_follows_the_patience_rule() {
        // Dev losses improve through epoch 3, then only worsen; with
        // patience 2 the stop lands on epoch 5 and epoch 3 stays best.
        let mut stopper = EarlyStopper::new(2);
        assert_eq!(stopper.observe(5.0), (true, false));
        assert_eq!(stopper.observe(4.0), (true, false));
        assert_eq!(stopper.observe(3.0), (true, false));
        assert_eq!(stopper.observe(3.5), (false, false));
        assert_eq!(stopper.observe(4.1), (false, true));
    }

    #[test]
    fn equal_dev_loss_counts_as_no_improvement() {
        let mut stopper = EarlyStopper::new(1);
        assert_eq!(stopper.observe(2.0), (true, false));
        assert_eq!(stopper.observe(2.0), (false, true));
    }
}
