//! Token-sequence codecs for dialogue actions and belief states.
//!
//! Actions flatten to `act [slot [value]] … <eos_a>`; beliefs to
//! `constraint … <eos_b>`. The decoder's softmax ranges over the shared
//! vocabulary, so generated sequences can be arbitrary token soup — the
//! action deserializer is therefore greedy and total: act-lexicon tokens
//! start items, following tokens fill slot then value, and anything that
//! fits nowhere is dropped and flags the parse as malformed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::vocab::{
    EOS_ACTION_TOKEN, EOS_BELIEF_TOKEN, PAD_TOKEN, SOS_TOKEN, UNK_TOKEN,
};
use super::{ActItem, BeliefState, Corpus, DialogueAction};

/// Act and slot label sets harvested from a training corpus. The act set
/// drives action parsing; the slot set is used by baselines and NLG.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct Lexicons {
    pub acts: BTreeSet<String>,
    pub slots: BTreeSet<String>,
}

impl Lexicons {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut lex = Lexicons::default();
        for turn in corpus.dialogues().iter().flatten() {
            for item in &turn.action.items {
                lex.acts.insert(item.act.clone());
                if let Some(s) = &item.slot {
                    lex.slots.insert(s.clone());
                }
            }
        }
        lex
    }

    pub fn is_act(&self, token: &str) -> bool {
        self.acts.contains(token)
    }
}

/// Flattens an action to its token sequence, terminated by `<eos_a>`.
/// Items keep their canonical (input) order — the corpora order acts
/// meaningfully, e.g. `offer` before the `inform`s that qualify it.
pub fn serialize_action(action: &DialogueAction) -> Vec<String> {
    let canon = action.canonicalize();
    let mut out = Vec::new();
    for item in &canon.items {
        out.push(item.act.clone());
        if let Some(s) = &item.slot {
            out.push(s.clone());
        }
        if let Some(v) = &item.value {
            out.push(v.clone());
        }
    }
    out.push(EOS_ACTION_TOKEN.to_string());
    out
}

/// Greedy inverse of [`serialize_action`]. Returns the parsed action and
/// whether the sequence was well-formed; a `false` flag means tokens were
/// dropped (leading parameters, a third parameter, reserved tokens). A
/// missing `<eos_a>` (decode cap reached) is not by itself malformed.
pub fn deserialize_action(tokens: &[String], lex: &Lexicons) -> (DialogueAction, bool) {
    let mut items: Vec<ActItem> = Vec::new();
    let mut current: Option<ActItem> = None;
    let mut well_formed = true;
    for tok in tokens {
        let tok = tok.as_str();
        if tok == EOS_ACTION_TOKEN {
            break;
        }
        if matches!(tok, PAD_TOKEN | UNK_TOKEN | SOS_TOKEN | EOS_BELIEF_TOKEN) {
            well_formed = false;
            continue;
        }
        if lex.is_act(tok) {
            if let Some(item) = current.take() {
                items.push(item);
            }
            current = Some(ActItem::bare(tok));
            continue;
        }
        match current.as_mut() {
            None => well_formed = false,
            Some(item) if item.slot.is_none() => item.slot = Some(tok.to_string()),
            Some(item) if item.value.is_none() => item.value = Some(tok.to_string()),
            Some(_) => well_formed = false,
        }
    }
    if let Some(item) = current.take() {
        items.push(item);
    }
    (DialogueAction::new(items).canonicalize(), well_formed)
}

/// Flattens a belief to its constraint tokens plus `<eos_b>`.
pub fn serialize_belief(belief: &BeliefState) -> Vec<String> {
    let mut out: Vec<String> = belief.tokens().to_vec();
    out.push(EOS_BELIEF_TOKEN.to_string());
    out
}

/// Collects constraint tokens up to `<eos_b>`, dropping reserved tokens
/// and duplicates (first mention wins).
pub fn deserialize_belief(tokens: &[String]) -> BeliefState {
    let mut out = Vec::new();
    for tok in tokens {
        let tok = tok.as_str();
        if tok == EOS_BELIEF_TOKEN {
            break;
        }
        if matches!(tok, PAD_TOKEN | UNK_TOKEN | SOS_TOKEN | EOS_ACTION_TOKEN) {
            continue;
        }
        out.push(tok.to_string());
    }
    BeliefState::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicons {
        let mut l = Lexicons::default();
        for a in ["offer", "inform", "request", "canthelp"] {
            l.acts.insert(a.into());
        }
        for s in ["name", "addr", "food", "pricerange", "area"] {
            l.slots.insert(s.into());
        }
        l
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn serializes_offer_then_inform_in_input_order() {
        let a = DialogueAction::new(vec![
            ActItem::full("offer", "name", "name_slot"),
            ActItem::full("inform", "addr", "addr_slot"),
        ]);
        assert_eq!(
            serialize_action(&a),
            toks("offer name name_slot inform addr addr_slot <eos_a>")
        );
    }

    #[test]
    fn empty_action_is_just_the_terminator() {
        assert_eq!(serialize_action(&DialogueAction::default()), toks("<eos_a>"));
    }

    #[test]
    fn multi_inform_keeps_canonical_order() {
        let a = DialogueAction::new(vec![
            ActItem::full("inform", "food", "french"),
            ActItem::full("inform", "pricerange", "cheap"),
            ActItem::full("offer", "name", "name_slot"),
        ]);
        assert_eq!(
            serialize_action(&a),
            toks("inform food french inform pricerange cheap offer name name_slot <eos_a>")
        );
    }

    #[test]
    fn deserializes_clean_sequence_as_well_formed() {
        let (a, ok) = deserialize_action(&toks("offer name name_slot <eos_a>"), &lex());
        assert!(ok);
        assert_eq!(a.items, vec![ActItem::full("offer", "name", "name_slot")]);

        let (empty, ok) = deserialize_action(&toks("<eos_a>"), &lex());
        assert!(ok);
        assert!(empty.items.is_empty());
    }

    #[test]
    fn leading_parameter_token_flags_malformed() {
        let (a, ok) = deserialize_action(&toks("name_slot offer <eos_a>"), &lex());
        assert!(!ok);
        assert_eq!(a.items, vec![ActItem::bare("offer")]);
    }

    #[test]
    fn third_parameter_flags_malformed_but_keeps_item() {
        let (a, ok) =
            deserialize_action(&toks("offer name name_slot extra <eos_a>"), &lex());
        assert!(!ok);
        assert_eq!(a.items, vec![ActItem::full("offer", "name", "name_slot")]);
    }

    #[test]
    fn missing_terminator_alone_is_not_malformed() {
        let (a, ok) = deserialize_action(&toks("request food"), &lex());
        assert!(ok);
        assert_eq!(a.items, vec![ActItem::with_slot("request", "food")]);
    }

    #[test]
    fn reserved_tokens_inside_action_flag_malformed() {
        let (a, ok) = deserialize_action(&toks("offer <unk> <eos_a>"), &lex());
        assert!(!ok);
        assert_eq!(a.items, vec![ActItem::bare("offer")]);
    }

    #[test]
    fn action_roundtrip_equals_canonical_form() {
        let cases = vec![
            DialogueAction::new(vec![ActItem::bare("canthelp")]),
            DialogueAction::new(vec![
                ActItem::full("offer", "name", "name_slot"),
                ActItem::full("inform", "addr", "addr_slot"),
                ActItem::with_slot("request", "area"),
            ]),
            DialogueAction::new(vec![
                ActItem::full("inform", "food", "french"),
                ActItem::full("inform", "food", "french"),
            ]),
        ];
        for a in cases {
            let (back, ok) = deserialize_action(&serialize_action(&a), &lex());
            assert!(ok);
            assert_eq!(back, a.canonicalize());
        }
    }

    #[test]
    fn belief_codec_roundtrips() {
        let b = BeliefState::new(vec!["cheap".into(), "east".into()]);
        assert_eq!(serialize_belief(&b), toks("cheap east <eos_b>"));
        assert_eq!(serialize_belief(&BeliefState::empty()), toks("<eos_b>"));
        assert_eq!(deserialize_belief(&serialize_belief(&b)), b);
    }

    #[test]
    fn belief_deserialize_stops_at_terminator_and_dedups() {
        let b = deserialize_belief(&toks("cheap cheap east <eos_b> stale"));
        assert_eq!(b.tokens(), ["cheap", "east"]);
    }
}
