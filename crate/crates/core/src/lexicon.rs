//! Delexicalization and lexicalization of system responses.
//!
//! Placeholders are `[<domain>_<slot>]` for identifying attributes and
//! `[value_<type>]` for shared value types; the map lives in the ontology.
//! When a shared placeholder occurs several times, the k-th occurrence takes
//! the k-th matching attribute in ontology slot order, so
//! `[value_place] ... [value_place]` on a train row reads departure, then
//! destination.

use std::collections::HashMap;

use crate::database::EntityRow;
use crate::ontology::{Ontology, COUNT_PLACEHOLDER};
use crate::schema::BeliefState;

pub fn is_placeholder(token: &str) -> bool {
    token.len() > 2 && token.starts_with('[') && token.ends_with(']') && !token[1..].contains('[')
}

fn is_time(token: &str) -> bool {
    match token.split_once(':') {
        Some((h, m)) => {
            (1..=2).contains(&h.len())
                && m.len() == 2
                && h.bytes().all(|b| b.is_ascii_digit())
                && m.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

fn is_price(token: &str) -> bool {
    match token.split_once('.') {
        Some((a, b)) => {
            !a.is_empty()
                && !b.is_empty()
                && a.bytes().all(|c| c.is_ascii_digit())
                && b.bytes().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

fn is_count(token: &str) -> bool {
    !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit())
}

/// Replaces entity and belief values with placeholders, longest match first;
/// remaining bare times, prices and integers become `[value_time]`,
/// `[value_price]` and `[value_count]`. Idempotent.
pub fn delexicalize(response: &str, row: Option<&EntityRow>, belief: &BeliefState, ontology: &Ontology) -> String {
    let mut candidates: Vec<(Vec<String>, String)> = Vec::new();
    if let Some(row) = row {
        for (slot, value) in &row.attributes {
            if let Some(ph) = ontology.placeholder(&row.domain, slot) {
                candidates.push((words(value), ph.to_string()));
            }
        }
    }
    for (d, s, v) in belief.iter() {
        if let Some(ph) = ontology.placeholder(d, s) {
            candidates.push((words(v), ph.to_string()));
        }
    }
    candidates.retain(|(w, _)| !w.is_empty());
    // Stable: row values win ties against belief values.
    candidates.sort_by(|a, b| {
        b.0.len()
            .cmp(&a.0.len())
            .then_with(|| b.0.join(" ").len().cmp(&a.0.join(" ").len()))
    });

    let tokens: Vec<&str> = response.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for (value, ph) in &candidates {
            let n = value.len();
            if i + n <= tokens.len()
                && tokens[i..i + n].iter().zip(value).all(|(t, v)| *t == v)
                && !tokens[i..i + n].iter().any(|t| is_placeholder(t))
            {
                out.push(ph.clone());
                i += n;
                continue 'outer;
            }
        }
        let t = tokens[i];
        let generic = if is_placeholder(t) {
            t
        } else if is_time(t) {
            "[value_time]"
        } else if is_price(t) {
            "[value_price]"
        } else if is_count(t) {
            COUNT_PLACEHOLDER
        } else {
            t
        };
        out.push(generic.to_string());
        i += 1;
    }
    out.join(" ")
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicalized {
    pub text: String,
    pub unresolved: Vec<String>,
}

/// Fills placeholders from the first row, then the belief state, then the
/// match count (`rows.len()`). Placeholders with no source stay verbatim and
/// are reported.
pub fn lexicalize(delex: &str, belief: &BeliefState, rows: &[EntityRow], ontology: &Ontology) -> Lexicalized {
    let first = rows.first();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Lexicalized::default();
    let mut words = Vec::new();
    for token in delex.split_whitespace() {
        if !is_placeholder(token) {
            words.push(token.to_string());
            continue;
        }
        let k = {
            let c = seen.entry(token).or_insert(0);
            *c += 1;
            *c - 1
        };
        let candidates = fill_candidates(token, first, belief, ontology);
        let value = if !candidates.is_empty() {
            Some(candidates[k.min(candidates.len() - 1)].clone())
        } else if token == COUNT_PLACEHOLDER {
            Some(rows.len().to_string())
        } else {
            None
        };
        match value {
            Some(v) => words.push(v),
            None => {
                words.push(token.to_string());
                out.unresolved.push(token.to_string());
            }
        }
    }
    out.text = words.join(" ");
    out
}

/// Values that may fill `placeholder`: row attributes in ontology slot order,
/// then belief values of the row's domain, then other belief values.
fn fill_candidates(placeholder: &str, row: Option<&EntityRow>, belief: &BeliefState, ontology: &Ontology) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(row) = row {
        if let Some(spec) = ontology.domain(&row.domain) {
            for slot in &spec.slots {
                if slot.placeholder == placeholder {
                    if let Some(v) = row.get(&slot.name) {
                        out.push(v.to_string());
                    }
                }
            }
        }
    }
    let row_domain = row.map(|r| r.domain.as_str());
    let mut own = Vec::new();
    let mut other = Vec::new();
    for (d, s, v) in belief.iter() {
        if ontology.placeholder(d, s) == Some(placeholder) {
            if Some(d) == row_domain {
                own.push(v.to_string());
            } else {
                other.push(v.to_string());
            }
        }
    }
    out.extend(own);
    out.extend(other);
    out
}

/// The entity a response offers: the first row, when the response names it
/// through its domain's identifying placeholder.
pub fn offered_entity<'a>(delex: &str, rows: &'a [EntityRow], ontology: &Ontology) -> Option<&'a EntityRow> {
    let row = rows.first()?;
    let spec = ontology.domain(&row.domain)?;
    let key_placeholder = &spec.slot(&spec.entity_key)?.placeholder;
    delex
        .split_whitespace()
        .any(|t| t == key_placeholder)
        .then_some(row)
}
