//! Task-oriented dialogue pipeline with a generative dialogue policy.
//!
//! The pipeline encodes the running dialogue context with a bidirectional
//! GRU, decodes the user's accumulated constraints with an attention-based
//! tracker, queries a knowledge base, and then *generates* the next system
//! action token by token, conditioned on the query-result count. Responses
//! are produced by a template generator keyed on the decoded action.
//!
//! Everything is built on a small reverse-mode differentiation engine in
//! [`numerics`]; training covers both teacher-forced cross-entropy and
//! REINFORCE fine-tuning of the action decoder.

pub mod baselines;
pub mod bundle;
pub mod chat;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod kb;
pub mod model;
pub mod dstc2;
pub mod nlg;
pub mod numerics;
pub mod toy;
pub mod training;
