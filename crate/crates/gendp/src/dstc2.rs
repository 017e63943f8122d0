//! DSTC2 conversion into the JSONL corpus shape.
//!
//! A DSTC2 session is a directory holding `log.json` (the system side)
//! and `label.json` (the user side, with transcriptions and goal
//! labels). The mapping into our one-dialogue-per-line format:
//!
//! - User turn i pairs with system turn i+1: that system transcript is
//!   the gold response and its dialog acts the gold action. The opening
//!   system greeting has no user input and the final user turn has no
//!   system reply, so both fall away.
//! - The belief is the turn's goal-label values. Values that persist
//!   keep their position, new ones are appended in slot-name order, and
//!   a value stays verbatim even when it spans several words.
//! - Each dialog-act slot pair becomes one action item. The DSTC2
//!   request convention `["slot", "food"]` maps to a slot-without-value
//!   item; every real value is delexicalized to `<slot>_slot`, in both
//!   the action and the response transcript (longest values first).
//! - `kb_count` is filled from live queries when a KB and ontology are
//!   supplied; otherwise every count is 0.
//! - An empty user transcription becomes the literal token `noise` so
//!   the encoder always has input.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::BeliefState;
use crate::kb::{query, Kb, Ontology};
use crate::toy::{GenDialogue, GenTurn};

#[derive(Debug, Error)]
pub enum Dstc2Error {
    #[error("dstc2 io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dstc2 parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dstc2 parse in {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("no session directories with log.json and label.json under {0}")]
    NoSessions(PathBuf),
}

/// Optional KB for filling `kb_count` during conversion.
#[derive(Debug, Default)]
pub struct Dstc2Options {
    pub kb: Option<Kb>,
    pub ontology: Option<Ontology>,
}

#[derive(Deserialize)]
struct LogFile {
    turns: Vec<LogTurn>,
}

#[derive(Deserialize)]
struct LogTurn {
    output: LogOutput,
}

#[derive(Deserialize)]
struct LogOutput {
    #[serde(default)]
    transcript: String,
    #[serde(rename = "dialog-acts", default)]
    dialog_acts: Vec<DialogAct>,
}

#[derive(Deserialize)]
struct DialogAct {
    act: String,
    #[serde(default)]
    slots: Vec<(String, serde_json::Value)>,
}

#[derive(Deserialize)]
struct LabelFile {
    turns: Vec<LabelTurn>,
}

#[derive(Deserialize)]
struct LabelTurn {
    #[serde(default)]
    transcription: String,
    #[serde(rename = "goal-labels", default)]
    goal_labels: BTreeMap<String, String>,
}

fn val_str(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn action_items(acts: &[DialogAct]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for da in acts {
        if da.act.is_empty() {
            continue;
        }
        if da.slots.is_empty() {
            out.push(vec![da.act.clone()]);
            continue;
        }
        for (slot, value) in &da.slots {
            if slot == "slot" {
                out.push(vec![da.act.clone(), val_str(value)]);
            } else {
                out.push(vec![da.act.clone(), slot.clone(), format!("{slot}_slot")]);
            }
        }
    }
    out
}

fn delex(transcript: &str, acts: &[DialogAct]) -> String {
    let mut pairs: Vec<(String, String)> = acts
        .iter()
        .flat_map(|da| da.slots.iter())
        .filter(|(slot, _)| slot != "slot")
        .map(|(slot, value)| (slot.clone(), val_str(value).to_lowercase()))
        .filter(|(_, value)| !value.is_empty())
        .collect();
    pairs.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.cmp(b)));
    pairs.dedup();
    let mut text = transcript.to_lowercase();
    for (slot, value) in &pairs {
        text = text.replace(value.as_str(), &format!("{slot}_slot"));
    }
    text
}

/// Persisting goal values keep their order; new ones append in
/// slot-name order; dropped goals disappear.
fn update_belief(prev: &[String], goals: &BTreeMap<String, String>) -> Vec<String> {
    let current: Vec<&String> = goals.values().collect();
    let mut next: Vec<String> = prev
        .iter()
        .filter(|v| current.iter().any(|c| c == v))
        .cloned()
        .collect();
    for v in current {
        if !next.contains(v) {
            next.push(v.clone());
        }
    }
    next
}

fn convert_parsed(log: &LogFile, label: &LabelFile, opts: &Dstc2Options) -> Option<GenDialogue> {
    let n = log.turns.len().min(label.turns.len());
    if n < 2 {
        return None;
    }
    let mut belief: Vec<String> = Vec::new();
    let mut turns = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let raw = label.turns[i].transcription.trim();
        let user = if raw.is_empty() { "noise".to_string() } else { raw.to_lowercase() };
        belief = update_belief(&belief, &label.turns[i].goal_labels);
        let sys = &log.turns[i + 1].output;
        let kb_count = match (&opts.kb, &opts.ontology) {
            (Some(kb), Some(ont)) => query(kb, &BeliefState::new(belief.clone()), ont).count,
            _ => 0,
        };
        turns.push(GenTurn {
            user,
            belief: belief.clone(),
            action: action_items(&sys.dialog_acts),
            response: delex(&sys.transcript, &sys.dialog_acts),
            kb_count,
        });
    }
    Some(GenDialogue { turns })
}

/// Converts one session from its raw file contents. Sessions too short
/// to pair a user turn with a system reply come back as `None`.
pub fn convert_session(
    log_text: &str,
    label_text: &str,
    opts: &Dstc2Options,
) -> Result<Option<GenDialogue>, Dstc2Error> {
    let log: LogFile = serde_json::from_str(log_text)?;
    let label: LabelFile = serde_json::from_str(label_text)?;
    Ok(convert_parsed(&log, &label, opts))
}

fn collect_sessions(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), Dstc2Error> {
    if dir.join("log.json").is_file() && dir.join("label.json").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_sessions(&path, out)?;
        }
    }
    Ok(())
}

/// Converts every session directory under `root` (sorted by path, so
/// output order is stable) into dialogues.
pub fn convert_tree(root: &Path, opts: &Dstc2Options) -> Result<Vec<GenDialogue>, Dstc2Error> {
    let mut sessions = Vec::new();
    collect_sessions(root, &mut sessions)?;
    sessions.sort();
    let mut out = Vec::new();
    for dir in &sessions {
        let read = |name: &str| -> Result<(String, String), Dstc2Error> {
            let path = dir.join(name);
            Ok((fs::read_to_string(&path)?, path.display().to_string()))
        };
        let (log_text, log_path) = read("log.json")?;
        let (label_text, label_path) = read("label.json")?;
        let log: LogFile = serde_json::from_str(&log_text)
            .map_err(|source| Dstc2Error::Parse { path: log_path, source })?;
        let label: LabelFile = serde_json::from_str(&label_text)
            .map_err(|source| Dstc2Error::Parse { path: label_path, source })?;
        if let Some(d) = convert_parsed(&log, &label, opts) {
            if !d.turns.is_empty() {
                out.push(d);
            }
        }
    }
    if out.is_empty() {
        return Err(Dstc2Error::NoSessions(root.to_path_buf()));
    }
    Ok(out)
}

pub fn write_jsonl(dialogues: &[GenDialogue], path: &Path) -> Result<(), Dstc2Error> {
    let mut f = fs::File::create(path)?;
    for d in dialogues {
        f.write_all(serde_json::to_string(d)?.as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::codec::{deserialize_action, serialize_action, Lexicons};
    use crate::corpus::{load_corpus, Split, VocabPolicy};
    use crate::kb::KbRecord;

    const LOG: &str = r#"{
        "session-id": "voip-fixture-1",
        "turns": [
            {"output": {"transcript": "hello , welcome to the restaurant system . how may i help you ?", "dialog-acts": [{"act": "welcomemsg", "slots": []}]}},
            {"output": {"transcript": "what kind of food would you like ?", "dialog-acts": [{"act": "request", "slots": [["slot", "food"]]}]}},
            {"output": {"transcript": "roma serves italian food", "dialog-acts": [{"act": "offer", "slots": [["name", "roma"]]}, {"act": "inform", "slots": [["food", "italian"]]}]}}
        ]
    }"#;

    const LABEL: &str = r#"{
        "turns": [
            {"transcription": "im looking for a cheap restaurant", "goal-labels": {"pricerange": "cheap"}},
            {"transcription": "uh italian", "goal-labels": {"pricerange": "cheap", "food": "italian"}},
            {"transcription": "thank you good bye", "goal-labels": {"pricerange": "cheap", "food": "italian"}}
        ]
    }"#;

    #[test]
    fn aligns_users_with_the_following_system_turn() {
        let d = convert_session(LOG, LABEL, &Dstc2Options::default())
            .unwrap()
            .unwrap();
        assert_eq!(d.turns.len(), 2);

        let t0 = &d.turns[0];
        assert_eq!(t0.user, "im looking for a cheap restaurant");
        assert_eq!(t0.belief, vec!["cheap"]);
        assert_eq!(t0.action, vec![vec!["request".to_string(), "food".to_string()]]);
        assert_eq!(t0.response, "what kind of food would you like ?");
        assert_eq!(t0.kb_count, 0);

        let t1 = &d.turns[1];
        assert_eq!(t1.belief, vec!["cheap", "italian"]);
        assert_eq!(
            t1.action,
            vec![
                vec!["offer".to_string(), "name".to_string(), "name_slot".to_string()],
                vec!["inform".to_string(), "food".to_string(), "food_slot".to_string()],
            ]
        );
        assert_eq!(t1.response, "name_slot serves food_slot food");
    }

    #[test]
    fn changed_goals_drop_the_old_value() {
        let label = r#"{"turns": [
            {"transcription": "cheap food", "goal-labels": {"pricerange": "cheap"}},
            {"transcription": "no make that expensive", "goal-labels": {"pricerange": "expensive"}},
            {"transcription": "bye", "goal-labels": {}}
        ]}"#;
        let log = r#"{"turns": [
            {"output": {"transcript": "hello", "dialog-acts": []}},
            {"output": {"transcript": "ok", "dialog-acts": [{"act": "reqmore", "slots": []}]}},
            {"output": {"transcript": "ok", "dialog-acts": [{"act": "reqmore", "slots": []}]}}
        ]}"#;
        let d = convert_session(log, label, &Dstc2Options::default())
            .unwrap()
            .unwrap();
        assert_eq!(d.turns[0].belief, vec!["cheap"]);
        assert_eq!(d.turns[1].belief, vec!["expensive"]);
    }

    #[test]
    fn empty_transcriptions_become_a_noise_token() {
        let label = r#"{"turns": [
            {"transcription": "", "goal-labels": {}},
            {"transcription": "bye", "goal-labels": {}}
        ]}"#;
        let log = r#"{"turns": [
            {"output": {"transcript": "hello", "dialog-acts": []}},
            {"output": {"transcript": "sorry ?", "dialog-acts": [{"act": "repeat", "slots": []}]}}
        ]}"#;
        let d = convert_session(log, label, &Dstc2Options::default())
            .unwrap()
            .unwrap();
        assert_eq!(d.turns[0].user, "noise");
    }

    #[test]
    fn kb_counts_come_from_live_queries_when_supplied() {
        let record = |pairs: &[(&str, &str)]| -> KbRecord {
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
        };
        let kb = Kb::new(vec![
            record(&[("name", "roma"), ("pricerange", "cheap"), ("food", "italian")]),
            record(&[("name", "pizza hut"), ("pricerange", "cheap"), ("food", "italian")]),
        ])
        .unwrap();
        let mut ontology = Ontology::new();
        ontology.insert("cheap".into(), "pricerange".into());
        ontology.insert("italian".into(), "food".into());
        let opts = Dstc2Options { kb: Some(kb), ontology: Some(ontology) };
        let d = convert_session(LOG, LABEL, &opts).unwrap().unwrap();
        assert_eq!(d.turns[0].kb_count, 2);
        assert_eq!(d.turns[1].kb_count, 2);
    }

    #[test]
    fn tree_conversion_writes_loadable_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let s1 = dir.path().join("Mar13_S0A0").join("voip-1");
        let s2 = dir.path().join("Mar13_S0A0").join("voip-2");
        for s in [&s1, &s2] {
            fs::create_dir_all(s).unwrap();
            fs::write(s.join("log.json"), LOG).unwrap();
            fs::write(s.join("label.json"), LABEL).unwrap();
        }
        // A stray directory without session files is ignored.
        fs::create_dir_all(dir.path().join("docs")).unwrap();

        let dialogues = convert_tree(dir.path(), &Dstc2Options::default()).unwrap();
        assert_eq!(dialogues.len(), 2);

        let out = dir.path().join("train.jsonl");
        write_jsonl(&dialogues, &out).unwrap();
        let (corpus, _vocab) = load_corpus(&out, Split::Train, VocabPolicy::Build).unwrap();
        assert_eq!(corpus.dialogues().len(), 2);
        let lex = Lexicons::from_corpus(&corpus);
        for turn in corpus.dialogues().iter().flatten() {
            let tokens = serialize_action(&turn.action);
            let (back, well_formed) = deserialize_action(&tokens, &lex);
            assert!(well_formed);
            assert_eq!(back, turn.action);
        }
    }

    #[test]
    fn empty_roots_and_short_sessions_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            convert_tree(dir.path(), &Dstc2Options::default()),
            Err(Dstc2Error::NoSessions(_))
        ));

        // One-turn sessions cannot pair a user turn with a system reply.
        let s = dir.path().join("voip-1");
        fs::create_dir_all(&s).unwrap();
        fs::write(s.join("log.json"), r#"{"turns": [{"output": {"transcript": "hello"}}]}"#)
            .unwrap();
        fs::write(s.join("label.json"), r#"{"turns": [{"transcription": "hi"}]}"#).unwrap();
        assert!(matches!(
            convert_tree(dir.path(), &Dstc2Options::default()),
            Err(Dstc2Error::NoSessions(_))
        ));
    }
}
