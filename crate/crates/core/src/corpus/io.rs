//! Corpus files: JSON Lines, one dialogue per line.
//!
//! ```json
//! {"id": "sd00000",
//!  "goal": {"train": {"info": {"day": "sunday"}, "book": {"book people": "2"}, "reqt": ["price"]}},
//!  "turns": [{"user": "...", "system": "...", "system_delex": "...",
//!             "belief": [["train", "day", "sunday"]],
//!             "actions": [{"domain": "train", "action_type": "request", "slot": "leaveat"}],
//!             "db": {"match_count": 3, "bucket": "three", "booking": "not_applicable"}}]}
//! ```
//!
//! MultiWOZ mapping: `goal.<domain>.info/book/reqt` are the benchmark goal
//! fields of the same name; `user`/`system` are the even/odd `log[].text`
//! entries; `belief` flattens the system entry's `metadata.<domain>.semi`
//! and `.book` (book slots prefixed with `book `); `actions` flattens
//! `dialog_act` into (domain, act, slot) triplets.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dialogue;
use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::schema::{canonicalize_belief, BeliefState};

/// A non-fatal finding while loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadFlag {
    pub dialogue: String,
    pub turn: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub dialogues: Vec<Dialogue>,
    pub flags: Vec<LoadFlag>,
}

pub fn save_corpus(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for d in dialogues {
        let line = serde_json::to_string(d)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_corpus(path: &Path, ontology: &Ontology) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string(), ontology)
}

/// Parses JSON Lines text. Beliefs are canonicalized; commas inside values
/// are stripped and slots unknown to the ontology are kept but flagged.
pub fn parse_corpus(text: &str, source: &str, ontology: &Ontology) -> Result<LoadedCorpus> {
    let slots = ontology.slot_vocabulary();
    let mut dialogues = Vec::new();
    let mut flags = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut d: Dialogue = serde_json::from_str(line).map_err(|e| Error::Schema {
            path: format!("{source}:{}:{}", lineno + 1, e.column()),
            message: e.to_string(),
        })?;
        if d.turns.is_empty() {
            return Err(Error::Schema {
                path: format!("{source}:{} ({})", lineno + 1, d.id),
                message: "a dialogue needs at least one turn".into(),
            });
        }
        for (t, turn) in d.turns.iter_mut().enumerate() {
            if turn.user.trim().is_empty() {
                return Err(Error::Schema {
                    path: format!("{source}:{} ({}) turns[{t}].user", lineno + 1, d.id),
                    message: "empty user utterance".into(),
                });
            }
            let mut cleaned = BeliefState::new();
            for (dom, s, v) in canonicalize_belief(&turn.belief).iter() {
                let value = if v.contains(',') {
                    flags.push(LoadFlag {
                        dialogue: d.id.clone(),
                        turn: t,
                        message: format!("comma stripped from value {v:?} of {dom} {s}"),
                    });
                    v.replace(',', " ").split_whitespace().collect::<Vec<_>>().join(" ")
                } else {
                    v.to_string()
                };
                if !slots.contains(dom, s) {
                    flags.push(LoadFlag {
                        dialogue: d.id.clone(),
                        turn: t,
                        message: format!("unknown slot {dom} {s}"),
                    });
                }
                cleaned.insert(dom, s, &value);
            }
            turn.belief = cleaned;
        }
        dialogues.push(d);
    }
    Ok(LoadedCorpus { dialogues, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;

    #[test]
    fn roundtrip() {
        let o = Ontology::synthetic();
        let c = generate_synthetic_corpus(&o, 20, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&path, &c.dialogues).unwrap();
        let back = load_corpus(&path, &o).unwrap();
        assert_eq!(back.dialogues, c.dialogues);
        assert!(back.flags.is_empty());
    }

    #[test]
    fn empty_file() {
        let back = parse_corpus("", "mem", &Ontology::synthetic()).unwrap();
        assert!(back.dialogues.is_empty());
    }

    #[test]
    fn unknown_slot_is_flagged_once() {
        let line = r#"{"id":"x","goal":{},"turns":[{"user":"hi","system":"hello","system_delex":"hello","belief":[["train","colour","Red"],["train","day","sunday"]],"actions":[]}]}"#;
        let back = parse_corpus(line, "mem", &Ontology::synthetic()).unwrap();
        assert_eq!(back.flags.len(), 1);
        assert_eq!(back.dialogues[0].turns[0].belief.get("train", "colour"), Some("red"));
    }

    #[test]
    fn schema_violation_names_location() {
        let err = parse_corpus("{\"id\": 3}", "corpus.jsonl", &Ontology::synthetic()).unwrap_err();
        match err {
            Error::Schema { path, .. } => assert!(path.starts_with("corpus.jsonl:1")),
            other => panic!("unexpected {other:?}"),
        }
        let no_turns = r#"{"id":"x","goal":{},"turns":[]}"#;
        assert!(parse_corpus(no_turns, "c", &Ontology::synthetic()).is_err());
    }
}
