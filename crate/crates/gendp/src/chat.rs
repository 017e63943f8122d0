//! Live dialogue sessions: the stateful loop behind the interactive
//! CLI and the C API. A session owns a trained model plus the KB and
//! templates, and carries the belief/response history forward between
//! turns the same way corpus evaluation does.

use thiserror::Error;

use crate::bundle::ModelBundle;
use crate::corpus::{tokenize, BeliefState};
use crate::eval::{predict_turn, EvalContext, EvalError};
use crate::kb::{Kb, Ontology, KB_ENCODING_DIM};
use crate::nlg::TemplateBank;

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("utterance has no usable tokens")]
    EmptyUtterance,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Everything one exchange produced, down to the raw action tokens, so
/// callers can show a debug view alongside the reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatTurn {
    /// Belief tokens the tracker decoded for this turn.
    pub belief: Vec<String>,
    /// How many KB records the belief matched.
    pub kb_count: usize,
    /// Index of the hot bit in the count encoding (count capped at 19).
    pub kb_bucket: usize,
    /// Raw decoded action tokens, terminator included.
    pub action_tokens: Vec<String>,
    /// True when the decoded action had to be repaired.
    pub malformed: bool,
    /// The rendered reply with slot placeholders filled in.
    pub reply: String,
    /// The delexicalized reply tokens, space-joined — what the model
    /// sees as R_{t-1} next turn.
    pub reply_delex: String,
}

/// A conversation in progress. `respond` advances it one turn; the
/// history it keeps is exactly what the next turn is conditioned on.
#[derive(Debug, Clone)]
pub struct ChatSession {
    bundle: ModelBundle,
    kb: Kb,
    ontology: Ontology,
    templates: TemplateBank,
    prev_belief: BeliefState,
    prev_response: Vec<String>,
}

impl ChatSession {
    pub fn new(bundle: ModelBundle, kb: Kb, ontology: Ontology, templates: TemplateBank) -> Self {
        Self {
            bundle,
            kb,
            ontology,
            templates,
            prev_belief: BeliefState::empty(),
            prev_response: Vec::new(),
        }
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    /// Forgets the dialogue so far; the model itself is untouched.
    pub fn reset(&mut self) {
        self.prev_belief = BeliefState::empty();
        self.prev_response = Vec::new();
    }

    /// Runs one turn: tokenizes the utterance, predicts belief, action
    /// and reply, and folds the outcome into the session history.
    pub fn respond(&mut self, user_text: &str) -> Result<ChatTurn, ChatError> {
        let user = tokenize(user_text);
        if user.is_empty() {
            return Err(ChatError::EmptyUtterance);
        }
        let ctx = EvalContext {
            ps: &self.bundle.ps,
            model: &self.bundle.model,
            vocab: &self.bundle.vocab,
            lexicons: &self.bundle.lexicons,
            kb: &self.kb,
            ontology: &self.ontology,
        };
        let (pred, _timings) = predict_turn(
            &ctx,
            &self.prev_belief,
            &self.prev_response,
            &user,
            Some(&self.templates),
        )?;
        self.prev_belief = pred.belief.clone();
        self.prev_response = pred.response.clone();
        Ok(ChatTurn {
            belief: pred.belief.tokens().to_vec(),
            kb_count: pred.kb_count,
            kb_bucket: pred.kb_count.min(KB_ENCODING_DIM - 1),
            action_tokens: pred.action_tokens,
            malformed: pred.malformed,
            reply: pred.response_surface,
            reply_delex: pred.response.join(" "),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PolicyKind;
    use crate::bundle::init_model;
    use crate::corpus::vocab::EOS_ACTION;
    use crate::corpus::{parse_corpus, Split, Vocabulary};
    use crate::kb::KbRecord;
    use crate::model::ModelConfig;
    use crate::nlg::DEFAULT_SURFACE;

    const CORPUS: &str = concat!(
        r#"{"turns":[{"user":"i want cheap french food","belief":["cheap","french"],"#,
        r#""action":[["offer","name","name_slot"],["inform","food","food_slot"]],"#,
        r#""response":"name_slot serves food_slot food","kb_count":1},"#,
        r#"{"user":"what is the address","belief":["cheap","french"],"#,
        r#""action":[["offer","name","name_slot"],["inform","addr","addr_slot"]],"#,
        r#""response":"sure , name_slot is on addr_slot","kb_count":1}]}"#,
        "\n",
        r#"{"turns":[{"user":"somewhere in the east","belief":["east"],"#,
        r#""action":[["request","food"]],"#,
        r#""response":"what kind of food would you like ?","kb_count":1}]}"#,
    );

    fn record(fields: &[(&str, &str)]) -> KbRecord {
        fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn fixture() -> ChatSession {
        let corpus = parse_corpus(CORPUS, Split::Train).unwrap();
        let vocab = Vocabulary::build(corpus.all_tokens());
        let bundle =
            init_model(PolicyKind::Gdp, &ModelConfig::tiny(), &corpus, vocab, 0.5, 11).unwrap();
        let templates = TemplateBank::build_from_corpus(&corpus, &bundle.lexicons);
        let kb = Kb::new(vec![
            record(&[
                ("name", "the golden fork"),
                ("food", "french"),
                ("pricerange", "cheap"),
                ("area", "east"),
                ("addr", "12 mill lane"),
                ("phone", "01223 000111"),
            ]),
            record(&[
                ("name", "the red lion"),
                ("food", "chinese"),
                ("pricerange", "expensive"),
                ("area", "west"),
                ("addr", "3 king street"),
                ("phone", "01223 000222"),
            ]),
        ])
        .unwrap();
        let ontology: Ontology = [
            ("cheap", "pricerange"),
            ("expensive", "pricerange"),
            ("french", "food"),
            ("chinese", "food"),
            ("east", "area"),
            ("west", "area"),
        ]
        .iter()
        .map(|(v, s)| (v.to_string(), s.to_string()))
        .collect();
        ChatSession::new(bundle, kb, ontology, templates)
    }

    #[test]
    fn empty_utterances_are_rejected() {
        let mut session = fixture();
        assert!(matches!(session.respond(""), Err(ChatError::EmptyUtterance)));
        assert!(matches!(session.respond("  ,, ?? !! "), Err(ChatError::EmptyUtterance)));
    }

    #[test]
    fn a_rigged_terminator_yields_the_default_reply() {
        let mut session = fixture();
        let out_b = session.bundle.ps.id("pol.out.b").unwrap();
        session.bundle.ps.data_mut(out_b)[EOS_ACTION] = 50.0;

        let turn = session.respond("hello there").unwrap();
        assert_eq!(turn.action_tokens, vec!["<eos_a>".to_string()]);
        assert!(!turn.malformed);
        assert_eq!(turn.reply, DEFAULT_SURFACE);
        assert_eq!(turn.reply_delex, "i am sorry could you say that again");
        assert_eq!(turn.kb_bucket, turn.kb_count.min(KB_ENCODING_DIM - 1));
    }

    #[test]
    fn replies_feed_back_into_the_history() {
        let mut session = fixture();
        let turn = session.respond("i want cheap french food").unwrap();
        assert_eq!(session.prev_belief.tokens(), turn.belief.as_slice());
        assert_eq!(session.prev_response.join(" "), turn.reply_delex);
    }

    #[test]
    fn reset_restores_the_opening_state() {
        let mut session = fixture();
        let first = session.respond("i want cheap french food").unwrap();
        let _second = session.respond("what is the address").unwrap();

        session.reset();
        assert!(session.prev_belief.is_empty());
        assert!(session.prev_response.is_empty());
        let again = session.respond("i want cheap french food").unwrap();
        assert_eq!(first, again);
    }
}
