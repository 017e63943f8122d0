//! Dialogue corpus: data model, JSONL loading, vocabulary, codecs.
//!
//! A corpus file is JSON-lines, one dialogue per line:
//!
//! ```json
//! {"turns":[{"user":"i want cheap food","belief":["cheap"],
//!            "action":[["request","food"]],"response":"what kind of food ?",
//!            "kb_count":9}]}
//! ```
//!
//! Actions are lists of 1–3 element arrays `[act]`, `[act, slot]`, or
//! `[act, slot, value]`; values are delexicalized placeholders such as
//! `name_slot` that the template generator fills in later.

pub mod codec;
pub mod tokenize;
pub mod vocab;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{
    deserialize_action, deserialize_belief, serialize_action, serialize_belief, Lexicons,
};
pub use tokenize::tokenize;
pub use vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("corpus line {line}: action token `{token}` missing from frozen vocabulary")]
    UnknownActionToken { line: usize, token: String },
}

/// One act with optional parameters, e.g. `offer(name=name_slot)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActItem {
    pub act: String,
    pub slot: Option<String>,
    pub value: Option<String>,
}

impl ActItem {
    pub fn new(
        act: impl Into<String>,
        slot: Option<String>,
        value: Option<String>,
    ) -> Result<Self, String> {
        let act = act.into();
        if act.is_empty() {
            return Err("act label is empty".into());
        }
        if value.is_some() && slot.is_none() {
            return Err(format!("act `{act}` has a value but no slot"));
        }
        Ok(Self { act, slot, value })
    }

    pub fn bare(act: impl Into<String>) -> Self {
        Self { act: act.into(), slot: None, value: None }
    }

    pub fn with_slot(act: impl Into<String>, slot: impl Into<String>) -> Self {
        Self { act: act.into(), slot: Some(slot.into()), value: None }
    }

    pub fn full(
        act: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        Self {
            act: act.into(),
            slot: Some(slot.into()),
            value: Some(value.into()),
        }
    }
}

/// An ordered multiset of act items. Canonical form keeps the original
/// order (the gold corpora already order acts meaningfully — `offer`
/// before the `inform`s it qualifies) and drops exact duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAction {
    pub items: Vec<ActItem>,
}

impl DialogueAction {
    pub fn new(items: Vec<ActItem>) -> Self {
        Self { items }
    }

    pub fn canonicalize(&self) -> Self {
        let mut seen = BTreeSet::new();
        let items = self
            .items
            .iter()
            .filter(|it| seen.insert((*it).clone()))
            .cloned()
            .collect();
        Self { items }
    }

    /// The multiset of bare act labels, for act-only comparison.
    pub fn act_labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = self.items.iter().map(|i| i.act.as_str()).collect();
        labels.sort_unstable();
        labels
    }
}

/// Accumulated user constraints, deduplicated in first-mention order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState {
    tokens: Vec<String>,
}

impl BeliefState {
    pub fn new(tokens: Vec<String>) -> Self {
        let mut seen = BTreeSet::new();
        let tokens = tokens
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect();
        Self { tokens }
    }

    pub fn empty() -> Self {
        Self { tokens: Vec::new() }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One system turn with its gold annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub user: Vec<String>,
    pub belief: BeliefState,
    pub action: DialogueAction,
    pub response: Vec<String>,
    pub response_surface: String,
    pub kb_count: usize,
}

pub type Dialogue = Vec<Turn>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    split: Split,
}

impl Corpus {
    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.len()).sum()
    }

    /// Every surface token in the corpus, with repetitions — the stream
    /// the vocabulary is built from.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.dialogues.iter().flatten().flat_map(|t| {
            t.user
                .iter()
                .map(String::as_str)
                .chain(t.belief.tokens().iter().map(String::as_str))
                .chain(t.action.items.iter().flat_map(|it| {
                    std::iter::once(it.act.as_str())
                        .chain(it.slot.as_deref())
                        .chain(it.value.as_deref())
                }))
                .chain(t.response.iter().map(String::as_str))
        })
    }
}

/// Whether the loader builds a fresh vocabulary from this file or reuses
/// a frozen one (dev/test must see the train vocabulary).
pub enum VocabPolicy {
    Build,
    Frozen(Vocabulary),
}

#[derive(Deserialize)]
struct RawDialogue {
    turns: Vec<RawTurn>,
}

#[derive(Deserialize)]
struct RawTurn {
    user: String,
    belief: Vec<String>,
    action: Vec<Vec<String>>,
    response: String,
    kb_count: usize,
}

fn convert_turn(raw: RawTurn, line: usize) -> Result<Turn, CorpusError> {
    let mut items = Vec::with_capacity(raw.action.len());
    for entry in raw.action {
        let item = match entry.len() {
            1 => ActItem::new(entry[0].clone(), None, None),
            2 => ActItem::new(entry[0].clone(), Some(entry[1].clone()), None),
            3 => ActItem::new(entry[0].clone(), Some(entry[1].clone()), Some(entry[2].clone())),
            n => Err(format!("action entry has {n} elements, expected 1–3")),
        }
        .map_err(|message| CorpusError::Parse { line, message })?;
        items.push(item);
    }
    Ok(Turn {
        user: tokenize(&raw.user),
        belief: BeliefState::new(raw.belief),
        action: DialogueAction::new(items).canonicalize(),
        response: tokenize(&raw.response),
        response_surface: raw.response,
        kb_count: raw.kb_count,
    })
}

pub fn parse_corpus(text: &str, split: Split) -> Result<Corpus, CorpusError> {
    let mut dialogues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDialogue =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        let mut turns = Vec::with_capacity(raw.turns.len());
        for t in raw.turns {
            turns.push(convert_turn(t, lineno)?);
        }
        if turns.is_empty() {
            return Err(CorpusError::Parse {
                line: lineno,
                message: "dialogue has no turns".into(),
            });
        }
        dialogues.push(turns);
    }
    if dialogues.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(Corpus { dialogues, split })
}

/// Loads a JSONL corpus file. With [`VocabPolicy::Build`] the vocabulary
/// is constructed from this file's tokens; with a frozen vocabulary,
/// unseen utterance tokens fall back to UNK at encode time but unseen
/// gold *action* tokens are an error — a target sequence the decoder's
/// softmax cannot express would silently corrupt training.
pub fn load_corpus(
    path: &Path,
    split: Split,
    policy: VocabPolicy,
) -> Result<(Corpus, Vocabulary), CorpusError> {
    let text = fs::read_to_string(path)?;
    let corpus = parse_corpus(&text, split)?;
    let vocab = match policy {
        VocabPolicy::Build => Vocabulary::build(corpus.all_tokens()),
        VocabPolicy::Frozen(v) => {
            for (di, d) in corpus.dialogues.iter().enumerate() {
                for turn in d {
                    for it in &turn.action.items {
                        for tok in std::iter::once(it.act.as_str())
                            .chain(it.slot.as_deref())
                            .chain(it.value.as_deref())
                        {
                            if v.id(tok).is_none() {
                                return Err(CorpusError::UnknownActionToken {
                                    line: di + 1,
                                    token: tok.to_string(),
                                });
                            }
                        }
                    }
                }
            }
            v
        }
    };
    Ok((corpus, vocab))
}
