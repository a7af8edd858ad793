//! Dialogues with goals: the synthetic generator, JSON Lines storage, noise
//! injection and the annotation auditor.

pub mod audit;
pub mod generator;
pub mod io;
pub mod noise;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::database::EntityRow;
use crate::schema::Turn;

/// What the user wants from one domain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    /// Constraints the offered entity must satisfy.
    pub info: BTreeMap<String, String>,
    /// Booking requirements, if the user books.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub book: BTreeMap<String, String>,
    /// Attributes the user asks for.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reqt: Vec<String>,
}

impl DomainGoal {
    pub fn satisfied_by(&self, row: &EntityRow) -> bool {
        self.info.iter().all(|(s, v)| row.get(s) == Some(v.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Goal {
    pub domains: BTreeMap<String, DomainGoal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub goal: Goal,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn user_utterances(&self, upto: usize) -> Vec<&str> {
        self.turns[..=upto].iter().map(|t| t.user.as_str()).collect()
    }
}

pub use audit::{audit_annotations, AuditFlag};
pub use generator::{generate_synthetic_corpus, SyntheticCorpus};
pub use io::{load_corpus, save_corpus, LoadFlag, LoadedCorpus};
pub use noise::{inject_noise, NoiseRecord, NoiseType};
