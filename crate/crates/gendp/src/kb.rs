//! Knowledge base: storage, constraint queries, and the one-hot encoding
//! of the result count that conditions the policy decoder.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BeliefState;

/// Width of the result-count encoding; counts at or above the last
/// bucket clamp into it.
pub const KB_ENCODING_DIM: usize = 20;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("kb io: {0}")]
    Io(#[from] std::io::Error),
    #[error("kb parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("kb record {index} has no `name` field")]
    MissingName { index: usize },
    #[error("kb has two records named `{0}`")]
    DuplicateName(String),
}

/// One entity as a flat slot→value map; `name` is its identity.
pub type KbRecord = BTreeMap<String, String>;

/// Maps a constraint token (e.g. `cheap`) to the slot it constrains
/// (e.g. `pricerange`). Tokens absent from the ontology match nothing.
pub type Ontology = BTreeMap<String, String>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kb {
    records: Vec<KbRecord>,
}

impl Kb {
    pub fn new(records: Vec<KbRecord>) -> Result<Self, KbError> {
        let mut names = std::collections::BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            match r.get("name") {
                None => return Err(KbError::MissingName { index: i }),
                Some(n) => {
                    if !names.insert(n.clone()) {
                        return Err(KbError::DuplicateName(n.clone()));
                    }
                }
            }
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let records: Vec<KbRecord> = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::new(records)
    }

    pub fn records(&self) -> &[KbRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_ontology(path: &Path) -> Result<Ontology, KbError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Records matching every constraint, in KB file order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub records: Vec<KbRecord>,
    pub count: usize,
}

impl QueryResult {
    pub fn first(&self) -> Option<&KbRecord> {
        self.records.first()
    }
}

/// Conjunctive query: a record matches when, for every belief token, the
/// slot the ontology assigns to that token holds exactly that value. An
/// empty belief matches everything; a token the ontology doesn't know
/// matches nothing.
pub fn query(kb: &Kb, belief: &BeliefState, ontology: &Ontology) -> QueryResult {
    let mut constraints: Vec<(&str, &str)> = Vec::new();
    let mut impossible = false;
    for tok in belief.tokens() {
        match ontology.get(tok) {
            Some(slot) => constraints.push((slot.as_str(), tok.as_str())),
            None => impossible = true,
        }
    }
    let records: Vec<KbRecord> = if impossible {
        Vec::new()
    } else {
        kb.records
            .iter()
            .filter(|r| {
                constraints
                    .iter()
                    .all(|(slot, value)| r.get(*slot).map(String::as_str) == Some(*value))
            })
            .cloned()
            .collect()
    };
    let count = records.len();
    QueryResult { records, count }
}

/// One-hot vector over [`KB_ENCODING_DIM`] buckets; index `min(count, 19)`.
pub fn encode_count(count: usize) -> Vec<f64> {
    let mut v = vec![0.0; KB_ENCODING_DIM];
    v[count.min(KB_ENCODING_DIM - 1)] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pairs: &[(&str, &str)]) -> KbRecord {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn fixture() -> (Kb, Ontology) {
        let kb = Kb::new(vec![
            record(&[("name", "golden house"), ("food", "french"), ("pricerange", "cheap"), ("area", "east"), ("addr", "12 king st")]),
            record(&[("name", "rice boat"), ("food", "indian"), ("pricerange", "cheap"), ("area", "west"), ("addr", "3 mill rd")]),
            record(&[("name", "la margherita"), ("food", "italian"), ("pricerange", "expensive"), ("area", "east"), ("addr", "9 elm st")]),
            record(&[("name", "the gardenia"), ("food", "italian"), ("pricerange", "moderate"), ("area", "centre"), ("addr", "2 rose ln")]),
            record(&[("name", "peking tower"), ("food", "chinese"), ("pricerange", "cheap"), ("area", "south"), ("addr", "8 oak ave")]),
        ])
        .unwrap();
        let mut ont = Ontology::new();
        for (v, s) in [
            ("french", "food"), ("indian", "food"), ("italian", "food"), ("chinese", "food"),
            ("cheap", "pricerange"), ("expensive", "pricerange"), ("moderate", "pricerange"),
            ("east", "area"), ("west", "area"), ("centre", "area"), ("south", "area"),
        ] {
            ont.insert(v.to_string(), s.to_string());
        }
        (kb, ont)
    }

    #[test]
    fn empty_belief_matches_all_records() {
        let (kb, ont) = fixture();
        let r = query(&kb, &BeliefState::empty(), &ont);
        assert_eq!(r.count, 5);
        assert_eq!(r.records.len(), 5);
        assert_eq!(r.first().unwrap()["name"], "golden house");
    }

    #[test]
    fn conjunctive_constraints_narrow_to_one() {
        let (kb, ont) = fixture();
        let b = BeliefState::new(vec!["french".into(), "cheap".into()]);
        let r = query(&kb, &b, &ont);
        assert_eq!(r.count, 1);
        assert_eq!(r.records[0]["name"], "golden house");
    }

    #[test]
    fn unknown_constraint_token_matches_nothing() {
        let (kb, ont) = fixture();
        let r = query(&kb, &BeliefState::new(vec!["swedish".into()]), &ont);
        assert_eq!(r.count, 0);
        assert!(r.records.is_empty());
    }

    #[test]
    fn adding_a_constraint_never_increases_count() {
        let (kb, ont) = fixture();
        let base = query(&kb, &BeliefState::new(vec!["cheap".into()]), &ont);
        for extra in ["east", "west", "italian", "chinese"] {
            let narrowed = query(
                &kb,
                &BeliefState::new(vec!["cheap".into(), extra.into()]),
                &ont,
            );
            assert!(narrowed.count <= base.count);
        }
    }

    #[test]
    fn encode_count_is_one_hot_with_clamping() {
        for (count, idx) in [(3usize, 3usize), (0, 0), (100, 19), (19, 19), (20, 19)] {
            let v = encode_count(count);
            assert_eq!(v.len(), KB_ENCODING_DIM);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
            assert_eq!(v[idx], 1.0);
        }
    }

    #[test]
    fn records_must_have_unique_names() {
        assert!(matches!(
            Kb::new(vec![record(&[("food", "thai")])]),
            Err(KbError::MissingName { index: 0 })
        ));
        assert!(matches!(
            Kb::new(vec![
                record(&[("name", "dup")]),
                record(&[("name", "dup")]),
            ]),
            Err(KbError::DuplicateName(_))
        ));
    }
}
