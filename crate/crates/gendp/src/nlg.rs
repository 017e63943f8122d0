//! Template-based natural language generation.
//!
//! The bank maps a serialized action (terminator stripped, tokens joined
//! by spaces) to a delexicalized surface string. Lookup is exact first,
//! then best act-item prefix, then a default. Placeholders of the form
//! `<slot>_slot` are filled from the first KB record of the query result.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::codec::{deserialize_action, serialize_action, Lexicons};
use crate::corpus::vocab::EOS_ACTION_TOKEN;
use crate::corpus::{ActItem, Corpus, DialogueAction};
use crate::kb::QueryResult;

pub const DEFAULT_SURFACE: &str = "i am sorry , could you say that again ?";

#[derive(Debug, Error)]
pub enum NlgError {
    #[error("template io: {0}")]
    Io(#[from] std::io::Error),
    #[error("template parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Serialized-action key with the terminator stripped: the empty action
/// keys the designated default template as `""`.
pub fn action_key(action: &DialogueAction) -> String {
    let toks = serialize_action(action);
    toks[..toks.len() - 1].join(" ")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateFileEntry {
    key: String,
    surface: String,
}

#[derive(Debug, Clone)]
struct Entry {
    surface: String,
    items: Vec<ActItem>,
}

#[derive(Debug, Clone)]
pub struct TemplateBank {
    entries: BTreeMap<String, Entry>,
}

impl TemplateBank {
    /// Extracts templates from a training corpus: for each distinct gold
    /// action, the most frequent delexicalized response wins (ties to
    /// the lexicographically smallest surface).
    pub fn build_from_corpus(corpus: &Corpus, lex: &Lexicons) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for turn in corpus.dialogues().iter().flatten() {
            let key = action_key(&turn.action);
            *counts
                .entry(key)
                .or_default()
                .entry(turn.response_surface.clone())
                .or_insert(0) += 1;
        }
        let mut entries = BTreeMap::new();
        for (key, surfaces) in counts {
            let (best, _) = surfaces
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .expect("non-empty surface map");
            entries.insert(
                key.clone(),
                Entry { surface: best.clone(), items: parse_key(&key, lex) },
            );
        }
        let mut bank = Self { entries };
        bank.ensure_default();
        bank
    }

    /// Loads a JSON bank file: an array of `{key, surface}` objects.
    pub fn load(path: &Path, lex: &Lexicons) -> Result<Self, NlgError> {
        let list: Vec<TemplateFileEntry> =
            serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut bank = Self { entries: BTreeMap::new() };
        for e in list {
            bank.insert(e.key, e.surface, lex);
        }
        bank.ensure_default();
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<(), NlgError> {
        let list: Vec<TemplateFileEntry> = self
            .entries
            .iter()
            .map(|(k, e)| TemplateFileEntry { key: k.clone(), surface: e.surface.clone() })
            .collect();
        fs::write(path, serde_json::to_string_pretty(&list)?)?;
        Ok(())
    }

    /// Merges `{key, surface}` overrides from a file, replacing existing
    /// entries key by key.
    pub fn merge_overrides(&mut self, path: &Path, lex: &Lexicons) -> Result<(), NlgError> {
        let list: Vec<TemplateFileEntry> =
            serde_json::from_str(&fs::read_to_string(path)?)?;
        for e in list {
            self.insert(e.key, e.surface, lex);
        }
        Ok(())
    }

    fn insert(&mut self, key: String, surface: String, lex: &Lexicons) {
        let items = parse_key(&key, lex);
        self.entries.insert(key, Entry { surface, items });
    }

    /// Guarantees the fallback entry exists (it normally comes from
    /// corpus building; hand-assembled banks need it too).
    pub fn ensure_default(&mut self) {
        self.entries.entry(String::new()).or_insert(Entry {
            surface: DEFAULT_SURFACE.to_string(),
            items: Vec::new(),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Picks the surface for a decoded action: exact key match first;
    /// otherwise the entry whose leading act items best match the
    /// query's (longest prefix, then fewest leftover items, then
    /// lexicographically smallest key); otherwise the default.
    pub fn select(&self, action: &DialogueAction) -> &str {
        let canon = action.canonicalize();
        let key = action_key(&canon);
        if let Some(e) = self.entries.get(&key) {
            return &e.surface;
        }
        let mut best: Option<(usize, usize, &str, &Entry)> = None;
        for (k, e) in &self.entries {
            let lcp = prefix_len(&canon.items, &e.items);
            if lcp == 0 {
                continue;
            }
            let leftover = e.items.len() - lcp;
            let better = match &best {
                None => true,
                Some((bl, blo, bk, _)) => {
                    lcp > *bl || (lcp == *bl && (leftover < *blo || (leftover == *blo && k.as_str() < *bk)))
                }
            };
            if better {
                best = Some((lcp, leftover, k, e));
            }
        }
        match best {
            Some((_, _, _, e)) => &e.surface,
            None => &self.entries[""].surface,
        }
    }

    /// Every key whose parsed items round-trip and whose placeholders
    /// all appear among its value tokens; returns offending keys. The
    /// auto-extracted bank keeps such entries (real corpora mention
    /// values the action omits) — this is a lint, not a gate.
    pub fn placeholder_violations(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| {
                let values: Vec<&str> =
                    e.items.iter().filter_map(|i| i.value.as_deref()).collect();
                surface_placeholders(&e.surface)
                    .iter()
                    .any(|p| !values.contains(&p.as_str()))
            })
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Leading items of `query` matched against `key_items` position by
/// position. A bare query item (no slot) matches any item with the same
/// act — a classifier that only knows act labels still finds an act-
/// compatible template; a parameterized item must agree exactly.
fn prefix_len(query: &[ActItem], key_items: &[ActItem]) -> usize {
    query
        .iter()
        .zip(key_items)
        .take_while(|(q, k)| {
            q.act == k.act
                && (q.slot.is_none()
                    || (q.slot == k.slot && (q.value.is_none() || q.value == k.value)))
        })
        .count()
}

fn parse_key(key: &str, lex: &Lexicons) -> Vec<ActItem> {
    let mut toks: Vec<String> = key.split_whitespace().map(str::to_string).collect();
    toks.push(EOS_ACTION_TOKEN.to_string());
    deserialize_action(&toks, lex).0.items
}

fn surface_placeholders(surface: &str) -> Vec<String> {
    surface
        .split_whitespace()
        .filter_map(|w| {
            let core = w.trim_matches(|c: char| ".,!?;:\"()".contains(c));
            core.strip_suffix("_slot")
                .filter(|s| !s.is_empty())
                .map(|_| core.to_string())
        })
        .collect()
}

/// Replaces each `<slot>_slot` placeholder with the first matched
/// record's value for that slot. Returns the surface and whether any
/// placeholder could not be filled (no results, or the record lacks the
/// slot) — those are left intact.
pub fn lexicalize(surface: &str, result: &QueryResult) -> (String, bool) {
    let mut unfilled = false;
    let out: Vec<String> = surface
        .split_whitespace()
        .map(|w| {
            let core = w.trim_matches(|c: char| ".,!?;:\"()".contains(c));
            let slot = match core.strip_suffix("_slot").filter(|s| !s.is_empty()) {
                Some(s) => s,
                None => return w.to_string(),
            };
            match result.first().and_then(|r| r.get(slot)) {
                Some(value) => w.replace(core, value),
                None => {
                    unfilled = true;
                    w.to_string()
                }
            }
        })
        .collect();
    (out.join(" "), unfilled)
}
