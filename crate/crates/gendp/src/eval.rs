//! Per-turn accuracy metrics, corpus BLEU, and the evaluation pipeline
//! that chains a model's own belief predictions across a dialogue.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{classifier_features, AnyModel};
use crate::corpus::{
    deserialize_action, deserialize_belief, serialize_action, tokenize, BeliefState, Corpus,
    DialogueAction, Lexicons, Vocabulary,
};
use crate::kb::{encode_count, query, Kb, Ontology, KB_ENCODING_DIM};
use crate::model::{context_ids, encode_context, run_policy, track_state, PolicyMode, TrackMode};
use crate::nlg::{lexicalize, TemplateBank};
use crate::numerics::{NumericsError, ParamSet, Tape};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {left} predictions vs {right} references")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
    #[error("bad evaluation setup: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Fraction of turns whose predicted belief equals gold exactly
/// (both sides are already deduplicated in first-mention order).
pub fn bpra(predicted: &[BeliefState], gold: &[BeliefState]) -> Result<f64, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "belief accuracy",
            left: predicted.len(),
            right: gold.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Fraction of turns whose predicted action token sequence matches gold
/// token-for-token (terminator included). Classifier outputs must be
/// serialized through the action codec before scoring.
pub fn apra(predicted: &[Vec<String>], gold: &[Vec<String>]) -> Result<f64, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "action accuracy",
            left: predicted.len(),
            right: gold.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predicted.len() as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4: uniform n-gram weights, brevity penalty, and
/// add-one smoothing applied only to n-gram orders with zero matches.
/// Orders longer than every candidate contribute a neutral factor.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            what: "bleu",
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }

    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    for n in 1..=4 {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, reference) in candidates.iter().zip(references) {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                total += count;
                matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
        let p = if total == 0 {
            1.0
        } else if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += 0.25 * p.ln();
    }

    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * log_sum.exp())
}

/// Everything an evaluation run reads; parameters stay immutable.
pub struct EvalContext<'a> {
    pub ps: &'a ParamSet,
    pub model: &'a AnyModel,
    pub vocab: &'a Vocabulary,
    pub lexicons: &'a Lexicons,
    pub kb: &'a Kb,
    pub ontology: &'a Ontology,
}

/// One turn's full model output.
#[derive(Debug, Clone)]
pub struct TurnPrediction {
    pub belief: BeliefState,
    /// Action token sequence as scored by APRA (terminator included
    /// when emitted).
    pub action_tokens: Vec<String>,
    pub action: DialogueAction,
    pub malformed: bool,
    /// KB result count under the predicted belief.
    pub kb_count: usize,
    /// Delexicalized response tokens (empty without a template bank).
    pub response: Vec<String>,
    /// Lexicalized response tokens.
    pub response_lex: Vec<String>,
    /// Lexicalized surface, for interactive use.
    pub response_surface: String,
}

/// Wall-clock split: the whole pipeline vs the action decode alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalTimings {
    pub full_s: f64,
    pub policy_s: f64,
}

/// Predicts one system turn from a live history: runs the tracker on
/// the context, queries the KB under the *predicted* belief, decodes
/// the action, and (given templates) renders the response. This is the
/// single prediction path shared by corpus evaluation and the chat
/// loop.
pub fn predict_turn(
    ctx: &EvalContext,
    prev_belief: &BeliefState,
    prev_response: &[String],
    user: &[String],
    templates: Option<&TemplateBank>,
) -> Result<(TurnPrediction, EvalTimings), EvalError> {
    let cfg = ctx.model.cfg();
    if cfg.kb_dim != KB_ENCODING_DIM {
        return Err(EvalError::Config(format!(
            "model expects {}-dim KB encodings, counts encode to {KB_ENCODING_DIM}",
            cfg.kb_dim
        )));
    }
    if cfg.max_belief_len == 0 || cfg.max_action_len == 0 {
        return Err(EvalError::Config("decode caps must be positive".into()));
    }

    let started = Instant::now();
    let ids = context_ids(ctx.vocab, prev_belief, prev_response, user);
    let mut tape = Tape::new();
    let enc_out = encode_context(&mut tape, ctx.ps, ctx.model.enc(), &ids)?;
    let trk_out = track_state(
        &mut tape,
        ctx.ps,
        ctx.model.trk(),
        ctx.model.enc().embed,
        &enc_out,
        TrackMode::FreeRunning { max_len: cfg.max_belief_len },
    )?;
    let belief_tokens = ctx.vocab.decode(&trk_out.tokens);
    let belief = deserialize_belief(&belief_tokens);
    let result = query(ctx.kb, &belief, ctx.ontology);
    let k_t = encode_count(result.count);

    let policy_started = Instant::now();
    let (action_tokens, action, malformed) = match ctx.model {
        AnyModel::Gdp(m) => {
            let (keys_u, keys_d) = m.policy_keys(&mut tape, ctx.ps, &enc_out, &trk_out.h_d)?;
            let run = run_policy(
                &mut tape,
                ctx.ps,
                &m.pol,
                m.enc.embed,
                enc_out.final_state,
                &keys_u,
                &keys_d,
                &k_t,
                PolicyMode::Greedy,
                cfg.max_action_len,
            )?;
            let tokens = ctx.vocab.decode(&run.tokens);
            let (action, well_formed) = deserialize_action(&tokens, ctx.lexicons);
            (tokens, action, !well_formed)
        }
        AnyModel::E2ecm(m) => {
            let trk_final = *trk_out.h_d.last().expect("tracker emits at least one state");
            let feat = classifier_features(&mut tape, enc_out.final_state, trk_final, &k_t)?;
            let action = m.head.predict(&mut tape, ctx.ps, feat)?;
            (serialize_action(&action), action, false)
        }
        AnyModel::Cdm(m) => {
            let trk_final = *trk_out.h_d.last().expect("tracker emits at least one state");
            let feat = classifier_features(&mut tape, enc_out.final_state, trk_final, &k_t)?;
            let action = m.head.predict(&mut tape, ctx.ps, feat)?;
            (serialize_action(&action), action, false)
        }
    };
    let policy = policy_started.elapsed();

    let (response, response_lex, response_surface) = match templates {
        Some(bank) => {
            let surface = bank.select(&action);
            let (lex, _unfilled) = lexicalize(surface, &result);
            (tokenize(surface), tokenize(&lex), lex)
        }
        None => (Vec::new(), Vec::new(), String::new()),
    };
    let full = started.elapsed();

    Ok((
        TurnPrediction {
            belief,
            action_tokens,
            action,
            malformed,
            kb_count: result.count,
            response,
            response_lex,
            response_surface,
        },
        EvalTimings { full_s: full.as_secs_f64(), policy_s: policy.as_secs_f64() },
    ))
}

/// Runs the model over a corpus the way it would run live: the belief
/// fed into turn t's context is the model's own prediction from turn
/// t−1, while the previous system response comes from the corpus, so
/// every turn is scored against a fixed history. k_t is computed from
/// the predicted belief.
pub fn predict_corpus(
    ctx: &EvalContext,
    corpus: &Corpus,
    templates: Option<&TemplateBank>,
) -> Result<(Vec<TurnPrediction>, EvalTimings), EvalError> {
    let mut preds = Vec::with_capacity(corpus.turn_count());
    let mut full = 0.0;
    let mut policy = 0.0;

    for dialogue in corpus.dialogues() {
        let mut prev_belief = BeliefState::empty();
        let mut prev_response: &[String] = &[];
        for turn in dialogue {
            let (pred, t) =
                predict_turn(ctx, &prev_belief, prev_response, &turn.user, templates)?;
            full += t.full_s;
            policy += t.policy_s;
            prev_belief = pred.belief.clone();
            prev_response = &turn.response;
            preds.push(pred);
        }
    }

    Ok((preds, EvalTimings { full_s: full, policy_s: policy }))
}

/// One row of the per-turn breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct TurnRecord {
    pub dialogue: usize,
    pub turn: usize,
    pub belief_correct: bool,
    pub action_correct: bool,
    pub malformed_action: bool,
}

/// Metrics plus bookkeeping for one model on one corpus. Wall-clock
/// timings are reported separately so this report — and its JSON — is a
/// pure function of (checkpoint, corpus, config).
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    pub turns: usize,
    pub bpra: f64,
    pub apra: f64,
    /// BLEU on delexicalized responses (the primary number).
    pub bleu: f64,
    /// BLEU after filling placeholders from each turn's KB result.
    pub bleu_lexicalized: f64,
    pub malformed_actions: usize,
    pub param_counts: BTreeMap<String, usize>,
    pub per_turn: Vec<TurnRecord>,
}

/// Parameter totals per submodule, plus the grand total.
pub fn param_counts(ps: &ParamSet, model: &AnyModel) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    counts.insert("embedding".to_string(), ps.numel_by_prefix("embed"));
    counts.insert("encoder".to_string(), ps.numel_by_prefix("enc."));
    counts.insert("tracker".to_string(), ps.numel_by_prefix("trk."));
    counts.insert(
        "policy".to_string(),
        ps.numel_by_prefix(model.head_prefix()),
    );
    counts.insert("total".to_string(), ps.numel_by_prefix(""));
    counts
}

pub fn evaluate(
    ctx: &EvalContext,
    corpus: &Corpus,
    templates: &TemplateBank,
) -> Result<(EvalReport, EvalTimings), EvalError> {
    let (preds, timings) = predict_corpus(ctx, corpus, Some(templates))?;

    let turns: Vec<_> = corpus.dialogues().iter().flatten().collect();
    let gold_beliefs: Vec<BeliefState> = turns.iter().map(|t| t.belief.clone()).collect();
    let gold_actions: Vec<Vec<String>> = turns.iter().map(|t| serialize_action(&t.action)).collect();
    let gold_responses: Vec<Vec<String>> = turns.iter().map(|t| t.response.clone()).collect();
    let gold_lex: Vec<Vec<String>> = turns
        .iter()
        .map(|t| {
            let result = query(ctx.kb, &t.belief, ctx.ontology);
            let (lex, _) = lexicalize(&t.response_surface, &result);
            tokenize(&lex)
        })
        .collect();

    let pred_beliefs: Vec<BeliefState> = preds.iter().map(|p| p.belief.clone()).collect();
    let pred_actions: Vec<Vec<String>> = preds.iter().map(|p| p.action_tokens.clone()).collect();
    let pred_responses: Vec<Vec<String>> = preds.iter().map(|p| p.response.clone()).collect();
    let pred_lex: Vec<Vec<String>> = preds.iter().map(|p| p.response_lex.clone()).collect();

    let mut per_turn = Vec::with_capacity(preds.len());
    let mut flat = 0;
    for (d, dialogue) in corpus.dialogues().iter().enumerate() {
        for t in 0..dialogue.len() {
            let p = &preds[flat];
            per_turn.push(TurnRecord {
                dialogue: d,
                turn: t,
                belief_correct: p.belief == gold_beliefs[flat],
                action_correct: p.action_tokens == gold_actions[flat],
                malformed_action: p.malformed,
            });
            flat += 1;
        }
    }

    let report = EvalReport {
        model: ctx.model.kind().to_string(),
        split: corpus.split().to_string(),
        turns: preds.len(),
        bpra: bpra(&pred_beliefs, &gold_beliefs)?,
        apra: apra(&pred_actions, &gold_actions)?,
        bleu: bleu(&pred_responses, &gold_responses)?,
        bleu_lexicalized: bleu(&pred_lex, &gold_lex)?,
        malformed_actions: preds.iter().filter(|p| p.malformed).count(),
        param_counts: param_counts(ctx.ps, ctx.model),
        per_turn,
    };
    Ok((report, timings))
}

/// One line of the results table.
pub struct TableRow {
    pub name: String,
    pub bpra: f64,
    pub apra: f64,
    pub bleu: f64,
    pub time_full_s: f64,
    pub time_policy_s: f64,
}

impl TableRow {
    pub fn new(report: &EvalReport, timings: EvalTimings) -> Self {
        Self {
            name: report.model.clone(),
            bpra: report.bpra,
            apra: report.apra,
            bleu: report.bleu,
            time_full_s: timings.full_s,
            time_policy_s: timings.policy_s,
        }
    }
}

/// Renders the results in the usual column layout: per-model BPRA,
/// APRA, BLEU, then wall-clock seconds for the full pipeline and for
/// the action decode alone.
pub fn render_table(rows: &[TableRow]) -> String {
    let name_w = rows.iter().map(|r| r.name.len()).chain([5]).max().unwrap();
    let mut out = format!(
        "{:<name_w$}  {:>6}  {:>6}  {:>6}  {:>12}  {:>10}\n",
        "Model", "BPRA", "APRA", "BLEU", "Time_full(s)", "Time_DP(s)"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:>6.4}  {:>6.4}  {:>6.4}  {:>12.2}  {:>10.2}\n",
            r.name, r.bpra, r.apra, r.bleu, r.time_full_s, r.time_policy_s
        ));
    }
    out
}
