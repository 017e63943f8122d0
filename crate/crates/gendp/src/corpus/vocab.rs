//! Shared vocabulary over utterances, beliefs, and actions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Reserved ids, in fixed order at the front of every vocabulary.
pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS_BELIEF: usize = 3;
pub const EOS_ACTION: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_BELIEF_TOKEN: &str = "<eos_b>";
pub const EOS_ACTION_TOKEN: &str = "<eos_a>";

const RESERVED: [&str; 5] = [
    PAD_TOKEN,
    UNK_TOKEN,
    SOS_TOKEN,
    EOS_BELIEF_TOKEN,
    EOS_ACTION_TOKEN,
];

/// Token ↔ id mapping. Ids 0..5 are reserved; the rest are assigned by
/// descending corpus frequency, ties broken lexicographically, which makes
/// the assignment a pure function of the training corpus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an iterator over corpus tokens (with repetitions).
    pub fn build<'a>(tokens: impl Iterator<Item = &'a str>) -> Self {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for t in tokens {
            if !RESERVED.contains(&t) {
                *freq.entry(t).or_insert(0) += 1;
            }
        }
        let mut by_freq: Vec<(&str, u64)> = freq.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut list: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        list.extend(by_freq.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(list)
    }

    /// Reconstructs from an id-ordered token list (checkpoint extras).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, ids }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Id for `token`, or UNK when the token is out of vocabulary.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// Rebuilds the lookup map after deserialization (serde skips it).
    pub fn rebuild_index(&mut self) {
        self.ids = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}
