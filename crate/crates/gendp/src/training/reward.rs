//! The action reward: right action, right acts, or wrong.

use crate::corpus::{deserialize_action, DialogueAction, Lexicons};

use super::RewardSpec;

/// Scores a decoded action against gold. A fully matching action (acts,
/// slots and values, in order) earns the full reward; matching the act
/// multiset with any parameter wrong earns the partial one; anything
/// else — including a malformed decode — earns the penalty.
pub fn reward(
    decoded: &DialogueAction,
    decode_malformed: bool,
    gold: &DialogueAction,
    spec: &RewardSpec,
) -> f64 {
    if decode_malformed {
        return spec.wrong;
    }
    let decoded = decoded.canonicalize();
    let gold = gold.canonicalize();
    if decoded.items == gold.items {
        spec.full_correct
    } else if decoded.act_labels() == gold.act_labels() {
        spec.act_only_correct
    } else {
        spec.wrong
    }
}

/// Convenience wrapper scoring a raw decoded token sequence.
pub fn reward_for_tokens(
    tokens: &[String],
    lex: &Lexicons,
    gold: &DialogueAction,
    spec: &RewardSpec,
) -> f64 {
    let (decoded, well_formed) = deserialize_action(tokens, lex);
    reward(&decoded, !well_formed, gold, spec)
}
