//! The single-sequence layout: context, belief state, database summary,
//! actions and delexicalized response, each wrapped in its own delimiter
//! tokens, plus total parsers that turn generated text back into structure.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::database::DbSummary;
use crate::error::{Error, Result};
use crate::ontology::SlotVocabulary;

pub const CONTEXT: &str = "<|context|>";
pub const USER: &str = "<|user|>";
pub const SYSTEM: &str = "<|system|>";
pub const END_CONTEXT: &str = "<|endofcontext|>";
pub const BELIEF: &str = "<|belief|>";
pub const END_BELIEF: &str = "<|endofbelief|>";
pub const DB: &str = "<|db|>";
pub const END_DB: &str = "<|endofdb|>";
pub const ACTION: &str = "<|action|>";
pub const END_ACTION: &str = "<|endofaction|>";
pub const RESPONSE: &str = "<|response|>";
pub const END_RESPONSE: &str = "<|endofresponse|>";

pub const SEGMENT_TOKENS: [&str; 12] = [
    CONTEXT,
    USER,
    SYSTEM,
    END_CONTEXT,
    BELIEF,
    END_BELIEF,
    DB,
    END_DB,
    ACTION,
    END_ACTION,
    RESPONSE,
    END_RESPONSE,
];

pub const END_TOKENS: [&str; 5] = [END_CONTEXT, END_BELIEF, END_DB, END_ACTION, END_RESPONSE];

/// Separator between triplets inside the belief and action segments. It is
/// surrounded by spaces so that it forms its own word-level token.
pub const TRIPLET_SEPARATOR: &str = " , ";

/// Lowercases and collapses runs of whitespace.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeliefTriplet {
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl BeliefTriplet {
    pub fn new(domain: &str, slot: &str, value: &str) -> Self {
        Self {
            domain: domain.to_string(),
            slot: slot.to_string(),
            value: value.to_string(),
        }
    }

    pub fn is_valid(&self) -> bool {
        [&self.domain, &self.slot, &self.value]
            .iter()
            .all(|f| !f.trim().is_empty() && !f.contains(','))
    }
}

/// Belief state: at most one value per `(domain, slot)`, iterated in
/// `(domain, slot)` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<[String; 3]>", into = "Vec<[String; 3]>")]
pub struct BeliefState {
    slots: BTreeMap<(String, String), String>,
}

impl From<Vec<[String; 3]>> for BeliefState {
    fn from(v: Vec<[String; 3]>) -> Self {
        let mut b = BeliefState::default();
        for [d, s, val] in v {
            b.insert(&d, &s, &val);
        }
        b
    }
}

impl From<BeliefState> for Vec<[String; 3]> {
    fn from(b: BeliefState) -> Self {
        b.slots
            .into_iter()
            .map(|((d, s), v)| [d, s, v])
            .collect()
    }
}

impl FromIterator<BeliefTriplet> for BeliefState {
    fn from_iter<I: IntoIterator<Item = BeliefTriplet>>(iter: I) -> Self {
        let mut b = BeliefState::default();
        for t in iter {
            b.insert(&t.domain, &t.slot, &t.value);
        }
        b
    }
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or overwrites the value for `(domain, slot)`.
    pub fn insert(&mut self, domain: &str, slot: &str, value: &str) {
        self.slots
            .insert((domain.to_string(), slot.to_string()), value.to_string());
    }

    pub fn remove(&mut self, domain: &str, slot: &str) -> Option<String> {
        self.slots.remove(&(domain.to_string(), slot.to_string()))
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&str> {
        self.slots
            .get(&(domain.to_string(), slot.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.slots
            .iter()
            .map(|((d, s), v)| (d.as_str(), s.as_str(), v.as_str()))
    }

    pub fn triplets(&self) -> Vec<BeliefTriplet> {
        self.iter()
            .map(|(d, s, v)| BeliefTriplet::new(d, s, v))
            .collect()
    }

    /// Distinct domains, sorted.
    pub fn domains(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.slots.keys().map(|(d, _)| d.as_str()).collect();
        out.dedup();
        out
    }

    pub fn for_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.iter()
            .filter(move |(d, _, _)| *d == domain)
            .map(|(_, s, v)| (s, v))
    }

    pub fn has_value(&self, value: &str) -> bool {
        self.slots.values().any(|v| v == value)
    }
}

/// Lowercases and collapses whitespace in every field; colliding keys keep the
/// value encountered last in key order. Idempotent.
pub fn canonicalize_belief(b: &BeliefState) -> BeliefState {
    let mut out = BeliefState::new();
    for (d, s, v) in b.iter() {
        out.insert(&normalize_text(d), &normalize_text(s), &normalize_text(v));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionTriplet {
    pub domain: String,
    pub action_type: String,
    pub slot: String,
}

impl ActionTriplet {
    pub fn new(domain: &str, action_type: &str, slot: &str) -> Self {
        Self {
            domain: domain.to_string(),
            action_type: action_type.to_string(),
            slot: slot.to_string(),
        }
    }
}

impl fmt::Display for ActionTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.domain, self.action_type, self.slot)
    }
}

/// One annotated exchange: the user utterance and the gold system side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    /// Lexicalized system response, as it appears in later contexts.
    pub system: String,
    pub system_delex: String,
    pub belief: BeliefState,
    pub actions: Vec<ActionTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db: Option<DbSummary>,
}

/// How sequences are laid out. The default is the full layout; the other
/// switches exist for the no-database setting and the end-token ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializationOptions {
    pub include_db: bool,
    pub end_tokens: bool,
}

impl Default for SerializationOptions {
    fn default() -> Self {
        Self {
            include_db: true,
            end_tokens: true,
        }
    }
}

impl SerializationOptions {
    fn wrap(&self, open: &str, body: &str, close: &str) -> String {
        let mut out = String::from(open);
        if !body.is_empty() {
            out.push(' ');
            out.push_str(body);
        }
        if self.end_tokens {
            out.push(' ');
            out.push_str(close);
        }
        out
    }

    pub fn context(&self, turns: &[Turn], t: usize) -> Result<String> {
        if t >= turns.len() {
            return Err(Error::InvalidArgument(format!(
                "turn {t} out of range for a dialogue of {} turns",
                turns.len()
            )));
        }
        let users: Vec<&str> = turns[..=t].iter().map(|x| x.user.as_str()).collect();
        let systems: Vec<&str> = turns[..t].iter().map(|x| x.system.as_str()).collect();
        Ok(self.context_from_utterances(&users, &systems))
    }

    /// `users` has one more entry than `systems`; roles alternate starting
    /// and ending with the user.
    pub fn context_from_utterances(&self, users: &[&str], systems: &[&str]) -> String {
        let mut body = Vec::new();
        for (i, u) in users.iter().enumerate() {
            body.push(format!("{USER} {}", normalize_ws(u)));
            if let Some(s) = systems.get(i) {
                body.push(format!("{SYSTEM} {}", normalize_ws(s)));
            }
        }
        self.wrap(CONTEXT, &body.join(" "), END_CONTEXT)
    }

    pub fn belief(&self, b: &BeliefState) -> String {
        let body = b
            .iter()
            .map(|(d, s, v)| format!("{d} {s} {v}"))
            .collect::<Vec<_>>()
            .join(TRIPLET_SEPARATOR);
        self.wrap(BELIEF, &body, END_BELIEF)
    }

    pub fn db(&self, summary: &DbSummary) -> String {
        self.wrap(DB, &summary.segment_body(), END_DB)
    }

    pub fn actions(&self, actions: &[ActionTriplet]) -> String {
        let body = actions
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(TRIPLET_SEPARATOR);
        self.wrap(ACTION, &body, END_ACTION)
    }

    pub fn response(&self, delex: &str) -> String {
        self.wrap(RESPONSE, &normalize_ws(delex), END_RESPONSE)
    }

    /// `[C_t; B_t; D_t; A_t; S_t]` for turn `t`.
    pub fn training_sequence(&self, turns: &[Turn], t: usize) -> Result<String> {
        let context = self.context(turns, t)?;
        let turn = &turns[t];
        if turn.user.trim().is_empty() {
            return Err(Error::MissingAnnotation(format!("turn {t}: empty user utterance")));
        }
        let mut parts = vec![context, self.belief(&turn.belief)];
        if self.include_db {
            let db = turn
                .db
                .as_ref()
                .ok_or_else(|| Error::MissingAnnotation(format!("turn {t}: database summary")))?;
            parts.push(self.db(db));
        }
        parts.push(self.actions(&turn.actions));
        parts.push(self.response(&turn.system_delex));
        Ok(parts.join(" "))
    }

    /// The tokens after which each decoding stage stops: the segment's end
    /// token, or nothing when end tokens are stripped.
    pub fn stop_token(&self, end: &'static str) -> Option<&'static str> {
        self.end_tokens.then_some(end)
    }
}

/// Belief serialization with the default layout.
pub fn serialize_belief(b: &BeliefState) -> String {
    SerializationOptions::default().belief(b)
}

pub fn serialize_training_sequence(turns: &[Turn], t: usize) -> Result<String> {
    SerializationOptions::default().training_sequence(turns, t)
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseFlag {
    MissingOpener(String),
    MissingCloser(String),
    MalformedChunk(String),
}

/// Words between the first `open` token and the next `close` token (or the
/// end of the text when the closer is absent).
fn segment<'a>(words: &[&'a str], open: &str, close: &str, flags: &mut Vec<ParseFlag>) -> Option<Vec<&'a str>> {
    let Some(start) = words.iter().position(|w| *w == open) else {
        flags.push(ParseFlag::MissingOpener(open.to_string()));
        return None;
    };
    let rest = &words[start + 1..];
    match rest.iter().position(|w| *w == close) {
        Some(end) => Some(rest[..end].to_vec()),
        None => {
            flags.push(ParseFlag::MissingCloser(close.to_string()));
            Some(rest.to_vec())
        }
    }
}

fn split_chunks<'a>(words: &[&'a str]) -> Vec<Vec<&'a str>> {
    let mut chunks = vec![Vec::new()];
    for w in words {
        if *w == "," {
            chunks.push(Vec::new());
        } else if let Some(stripped) = w.strip_suffix(',') {
            // Tolerate the unspaced "value," form printed in the literature.
            if !stripped.is_empty() {
                chunks.last_mut().unwrap().push(stripped);
            }
            chunks.push(Vec::new());
        } else {
            chunks.last_mut().unwrap().push(w);
        }
    }
    chunks.retain(|c| !c.is_empty());
    chunks
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeliefParse {
    pub belief: BeliefState,
    pub dropped: usize,
    pub flags: Vec<ParseFlag>,
}

impl BeliefParse {
    /// The opener was missing, so nothing could be parsed.
    pub fn is_failure(&self) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, ParseFlag::MissingOpener(_)))
    }
}

/// Extracts the belief state from generated text. Never fails: problems are
/// reported through `flags` and `dropped`.
pub fn parse_belief(generated: &str, slots: &SlotVocabulary) -> BeliefParse {
    let words: Vec<&str> = generated.split_whitespace().collect();
    let mut out = BeliefParse::default();
    let Some(span) = segment(&words, BELIEF, END_BELIEF, &mut out.flags) else {
        return out;
    };
    for chunk in split_chunks(&span) {
        match split_belief_chunk(&chunk, slots) {
            Some((d, s, v)) => out.belief.insert(&d, &s, &v),
            None => {
                out.dropped += 1;
                out.flags.push(ParseFlag::MalformedChunk(chunk.join(" ")));
            }
        }
    }
    out
}

fn split_belief_chunk(chunk: &[&str], slots: &SlotVocabulary) -> Option<(String, String, String)> {
    if chunk.len() < 3 {
        return None;
    }
    let domain = chunk[0];
    let rest = &chunk[1..];
    let mut best: Option<usize> = None;
    for slot in slots.slots_for(domain) {
        let n = slot.split(' ').count();
        if n < rest.len() && rest[..n].join(" ") == slot && best.is_none_or(|b| n > b) {
            best = Some(n);
        }
    }
    let n = best?;
    Some((
        domain.to_string(),
        rest[..n].join(" "),
        rest[n..].join(" "),
    ))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionResponseParse {
    pub actions: Vec<ActionTriplet>,
    pub response: String,
    pub flags: Vec<ParseFlag>,
}

/// Extracts actions and the delexicalized response from generated text.
/// Actions are comma-separated `domain action_type slot` triplets; without
/// commas the words are read three at a time.
pub fn parse_action_response(generated: &str) -> ActionResponseParse {
    let words: Vec<&str> = generated.split_whitespace().collect();
    let mut out = ActionResponseParse::default();
    if let Some(span) = segment(&words, ACTION, END_ACTION, &mut out.flags) {
        out.actions = parse_actions(&span, &mut out.flags);
    }
    if let Some(span) = segment(&words, RESPONSE, END_RESPONSE, &mut out.flags) {
        out.response = span.join(" ");
    }
    out
}

fn parse_actions(span: &[&str], flags: &mut Vec<ParseFlag>) -> Vec<ActionTriplet> {
    let has_commas = span.iter().any(|w| w.contains(','));
    let chunks: Vec<Vec<&str>> = if has_commas {
        split_chunks(span)
    } else {
        span.chunks(3).map(|c| c.to_vec()).collect()
    };
    let mut actions = Vec::new();
    for chunk in chunks {
        if let [d, a, s] = chunk[..] {
            actions.push(ActionTriplet::new(d, a, s));
        } else {
            flags.push(ParseFlag::MalformedChunk(chunk.join(" ")));
        }
    }
    actions
}
