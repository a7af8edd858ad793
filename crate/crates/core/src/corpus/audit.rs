//! Detection of suspicious belief annotations by string evidence.
//!
//! * missing label: an ontology value spoken by the user is absent from the
//!   turn's belief state;
//! * spurious label: a belief value occurs nowhere in the context and is not
//!   a near miss of anything;
//! * misspelled value: a belief value that is not an ontology value and does
//!   not occur in the context, but lies within edit distance 2 of a context
//!   n-gram or a known value, or equals one with a token dropped.
//!
//! Ambiguous-context noise is not audited: telling it apart needs semantics
//! that string matching cannot supply.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::noise::NoiseType;
use super::Dialogue;
use crate::database::Database;
use crate::ontology::Ontology;
use crate::schema::normalize_text;

const MAX_EDITS: usize = 2;
const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuditFlag {
    pub dialogue: String,
    pub turn: usize,
    pub noise_type: NoiseType,
    pub evidence: String,
}

/// Ontology values usable as belief values, longest (in tokens) first.
pub(crate) struct ValueIndex {
    by_len: Vec<Vec<String>>,
    all: BTreeSet<String>,
}

impl ValueIndex {
    pub(crate) fn new(ontology: &Ontology) -> Self {
        let all: BTreeSet<String> = ontology
            .domains
            .iter()
            .flat_map(|d| d.belief_slots())
            .flat_map(|s| s.values.iter().map(|v| normalize_text(v)))
            .filter(|v| !v.is_empty())
            .collect();
        let mut by_len: Vec<Vec<String>> = all
            .iter()
            .map(|v| v.split(' ').map(String::from).collect())
            .collect();
        by_len.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Self { by_len, all }
    }

    pub(crate) fn contains(&self, v: &str) -> bool {
        self.all.contains(v)
    }

    /// Values mentioned in `text`, scanning left to right and taking the
    /// longest value at each position.
    pub(crate) fn spot(&self, text: &str) -> Vec<String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut out = Vec::new();
        let mut i = 0;
        'outer: while i < tokens.len() {
            for v in &self.by_len {
                if i + v.len() <= tokens.len() && tokens[i..i + v.len()].iter().zip(v).all(|(a, b)| a == b) {
                    out.push(v.join(" "));
                    i += v.len();
                    continue 'outer;
                }
            }
            i += 1;
        }
        out
    }
}

pub(crate) fn contains_phrase(text: &str, phrase: &str) -> bool {
    let t: Vec<&str> = text.split_whitespace().collect();
    let p: Vec<&str> = phrase.split_whitespace().collect();
    !p.is_empty() && t.windows(p.len()).any(|w| w == p.as_slice())
}

/// One of the two strings equals the other with a single token removed.
fn token_drop(a: &str, b: &str) -> bool {
    let (long, short) = if a.split(' ').count() > b.split(' ').count() { (a, b) } else { (b, a) };
    let lt: Vec<&str> = long.split(' ').collect();
    let st: Vec<&str> = short.split(' ').collect();
    lt.len() == st.len() + 1
        && (0..lt.len()).any(|skip| {
            lt.iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, w)| *w)
                .eq(st.iter().copied())
        })
}

pub(crate) fn is_near(a: &str, b: &str) -> bool {
    a != b && (strsim::levenshtein(a, b) <= MAX_EDITS || token_drop(a, b))
}

fn ngrams(text: &str) -> Vec<String> {
    let t: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    for n in 1..=MAX_NGRAM {
        for w in t.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

/// Flags suspicious annotations, ordered by dialogue, turn, type and evidence.
pub fn audit_annotations(dialogues: &[Dialogue], ontology: &Ontology, db: Option<&Database>) -> Vec<AuditFlag> {
    let index = ValueIndex::new(ontology);
    let db_values: BTreeSet<String> = db
        .map(|db| {
            db.all_rows()
                .flat_map(|r| r.attributes.values().map(|v| normalize_text(v)))
                .collect()
        })
        .unwrap_or_default();
    let mut flags = Vec::new();
    for d in dialogues {
        let users: Vec<String> = d.turns.iter().map(|t| normalize_text(&t.user)).collect();
        let systems: Vec<String> = d.turns.iter().map(|t| normalize_text(&t.system)).collect();
        for (t, turn) in d.turns.iter().enumerate() {
            let context: Vec<&str> = users[..=t]
                .iter()
                .chain(&systems[..t])
                .map(String::as_str)
                .collect();
            let in_context = |v: &str| context.iter().any(|u| contains_phrase(u, v));
            let values: BTreeSet<&str> = turn.belief.iter().map(|(_, _, v)| v).collect();
            let mut misspelled: Vec<&str> = Vec::new();
            for (dom, slot, v) in turn.belief.iter() {
                if in_context(v) {
                    continue;
                }
                let near = if index.contains(v) {
                    None
                } else {
                    context
                        .iter()
                        .flat_map(|u| ngrams(u))
                        .chain(index.all.iter().cloned())
                        .chain(db_values.iter().cloned())
                        .find(|c| is_near(v, c))
                };
                match near {
                    Some(c) => {
                        misspelled.push(v);
                        flags.push(AuditFlag {
                            dialogue: d.id.clone(),
                            turn: t,
                            noise_type: NoiseType::Misspelled,
                            evidence: format!("{dom} {slot} {v:?} is close to {c:?}"),
                        });
                    }
                    None => flags.push(AuditFlag {
                        dialogue: d.id.clone(),
                        turn: t,
                        noise_type: NoiseType::SpuriousLabel,
                        evidence: format!("{dom} {slot} {v:?} does not occur in the context"),
                    }),
                }
            }
            let mut spotted = BTreeSet::new();
            for u in &users[..=t] {
                spotted.extend(index.spot(u));
            }
            for v in spotted {
                if values.contains(v.as_str()) || misspelled.iter().any(|m| is_near(m, &v)) {
                    continue;
                }
                flags.push(AuditFlag {
                    dialogue: d.id.clone(),
                    turn: t,
                    noise_type: NoiseType::MissingLabel,
                    evidence: format!("{v:?} is mentioned but not labeled"),
                });
            }
        }
    }
    flags.sort();
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::corpus::DomainGoal;
    use crate::schema::{BeliefState, Turn};

    fn one_turn(user: &str, belief: &[(&str, &str, &str)]) -> Dialogue {
        let mut b = BeliefState::new();
        for (d, s, v) in belief {
            b.insert(d, s, v);
        }
        let mut goal = crate::corpus::Goal::default();
        goal.domains.insert("train".into(), DomainGoal::default());
        Dialogue {
            id: "x".into(),
            goal,
            turns: vec![Turn {
                user: user.into(),
                system: "ok".into(),
                system_delex: "ok".into(),
                belief: b,
                actions: vec![],
                db: None,
            }],
        }
    }

    #[test]
    fn clean_corpus_has_no_flags() {
        let o = Ontology::synthetic();
        let c = generate_synthetic_corpus(&o, 150, 5).unwrap();
        let flags = audit_annotations(&c.dialogues, &o, Some(&c.database));
        assert!(flags.is_empty(), "{flags:?}");
    }

    #[test]
    fn unlabeled_day_is_missing_label() {
        let o = Ontology::synthetic();
        let d = one_turn("i need a train leaving on tuesday .", &[("train", "destination", "ely")]);
        let d = Dialogue {
            turns: vec![Turn {
                user: "i need a train to ely leaving on tuesday .".into(),
                ..d.turns[0].clone()
            }],
            ..d
        };
        let flags = audit_annotations(&[d], &o, None);
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].noise_type, NoiseType::MissingLabel);
        assert!(flags[0].evidence.contains("tuesday"));
    }

    #[test]
    fn token_drop_is_misspelling() {
        let o = Ontology::synthetic();
        let d = one_turn(
            "i want to go from ely to london kings cross .",
            &[("train", "departure", "ely"), ("train", "destination", "london cross")],
        );
        let flags = audit_annotations(&[d], &o, None);
        assert_eq!(flags.len(), 1, "{flags:?}");
        assert_eq!(flags[0].noise_type, NoiseType::Misspelled);
    }

    #[test]
    fn absent_ontology_value_is_spurious() {
        let o = Ontology::synthetic();
        let d = one_turn("i need a train to ely .", &[("train", "destination", "ely"), ("train", "day", "friday")]);
        let flags = audit_annotations(&[d], &o, None);
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].noise_type, NoiseType::SpuriousLabel);
    }

    #[test]
    fn misspelled_value_suppresses_missing_label() {
        let o = Ontology::synthetic();
        let d = one_turn("a train to peterborough .", &[("train", "destination", "peterbourough")]);
        let flags = audit_annotations(&[d], &o, None);
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].noise_type, NoiseType::Misspelled);
    }

    #[test]
    fn spotting_prefers_longest_values() {
        let idx = ValueIndex::new(&Ontology::synthetic());
        assert_eq!(idx.spot("the ashley hotel in the north"), vec!["ashley hotel", "north"]);
        assert_eq!(idx.spot("to london kings cross"), vec!["london kings cross"]);
    }

    #[test]
    fn near_relation() {
        assert!(is_near("the gandhi", "gandhi"));
        assert!(is_near("0915", "09:15"));
        assert!(!is_near("ely", "ely"));
        assert!(!is_near("cambridge", "stevenage"));
    }
}
