//! Domains, slots, value sets and the placeholder map.
//!
//! File format (JSON):
//!
//! ```json
//! { "domains": [ { "name": "hotel", "keywords": ["hotel"], "entity_key": "name",
//!     "slots": [ { "name": "area", "kind": "search", "values": ["north"],
//!                  "placeholder": "[value_area]" } ] } ] }
//! ```
//!
//! `search` slots are tracked in the belief state and matched against the
//! database, `book` slots are tracked but never matched, and `attribute` slots
//! exist only on database rows (phone numbers, references, ...).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COUNT_PLACEHOLDER: &str = "[value_count]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Search,
    Book,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    #[serde(default)]
    pub values: Vec<String>,
    pub placeholder: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    /// Words that signal the user is talking about this domain.
    pub keywords: Vec<String>,
    /// The attribute identifying an offered entity (`name`, `id`).
    pub entity_key: String,
    pub slots: Vec<SlotSpec>,
}

impl DomainSpec {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn belief_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(|s| s.kind != SlotKind::Attribute)
    }

    pub fn search_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(|s| s.kind == SlotKind::Search)
    }

    pub fn is_book_slot(&self, slot: &str) -> bool {
        self.slot(slot).is_some_and(|s| s.kind == SlotKind::Book)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub domains: Vec<DomainSpec>,
}

impl Ontology {
    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> Vec<&str> {
        self.domains.iter().map(|d| d.name.as_str()).collect()
    }

    /// Slot names usable in belief triplets, per domain.
    pub fn slot_vocabulary(&self) -> SlotVocabulary {
        let mut by_domain = BTreeMap::new();
        for d in &self.domains {
            let slots: BTreeSet<String> = d.belief_slots().map(|s| s.name.clone()).collect();
            by_domain.insert(d.name.clone(), slots);
        }
        SlotVocabulary { by_domain }
    }

    /// Placeholder for a `(domain, slot)` pair.
    pub fn placeholder(&self, domain: &str, slot: &str) -> Option<&str> {
        self.domain(domain)?
            .slot(slot)
            .map(|s| s.placeholder.as_str())
    }

    /// Every placeholder surface the lexicon may emit, sorted.
    pub fn placeholder_vocabulary(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .domains
            .iter()
            .flat_map(|d| d.slots.iter().map(|s| s.placeholder.clone()))
            .collect();
        out.insert(COUNT_PLACEHOLDER.to_string());
        out.insert("[value_time]".to_string());
        out.insert("[value_price]".to_string());
        out
    }

    /// All values of belief slots, each with the `(domain, slot)` pairs that
    /// list it.
    pub fn value_index(&self) -> BTreeMap<String, Vec<(String, String)>> {
        let mut index: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for d in &self.domains {
            for s in d.belief_slots() {
                for v in &s.values {
                    index
                        .entry(v.clone())
                        .or_default()
                        .push((d.name.clone(), s.name.clone()));
                }
            }
        }
        index
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.domains {
            if d.name.is_empty() || d.name.contains(char::is_whitespace) {
                return Err(Error::Ontology(format!("bad domain name {:?}", d.name)));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Ontology(format!("duplicate domain {}", d.name)));
            }
            if d.slot(&d.entity_key).is_none() {
                return Err(Error::Ontology(format!(
                    "domain {} has no slot for its entity key {}",
                    d.name, d.entity_key
                )));
            }
            let mut slots = BTreeSet::new();
            for s in &d.slots {
                if s.name.is_empty() || !slots.insert(s.name.as_str()) {
                    return Err(Error::Ontology(format!(
                        "domain {}: bad or duplicate slot {:?}",
                        d.name, s.name
                    )));
                }
                if !(s.placeholder.starts_with('[') && s.placeholder.ends_with(']')) {
                    return Err(Error::Ontology(format!(
                        "slot {} {}: placeholder {:?} is not bracketed",
                        d.name, s.name, s.placeholder
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ontology: Ontology = serde_json::from_str(&text)?;
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// The two-domain ontology used by the synthetic corpus.
    pub fn synthetic() -> Self {
        fn slot(name: &str, kind: SlotKind, values: &[&str], placeholder: &str) -> SlotSpec {
            SlotSpec {
                name: name.into(),
                kind,
                values: values.iter().map(|v| v.to_string()).collect(),
                placeholder: placeholder.into(),
            }
        }
        use SlotKind::*;
        const DAYS: [&str; 7] = [
            "monday",
            "tuesday",
            "wednesday",
            "thursday",
            "friday",
            "saturday",
            "sunday",
        ];
        let hotel = DomainSpec {
            name: "hotel".into(),
            keywords: ["hotel", "hotels", "guesthouse", "guesthouses", "stay", "lodging"]
                .map(String::from)
                .to_vec(),
            entity_key: "name".into(),
            slots: vec![
                slot(
                    "area",
                    Search,
                    &["north", "south", "east", "west", "centre"],
                    "[value_area]",
                ),
                slot(
                    "pricerange",
                    Search,
                    &["cheap", "moderate", "expensive"],
                    "[value_pricerange]",
                ),
                slot("type", Search, &["hotel", "guesthouse"], "[value_type]"),
                slot("stars", Search, &["2", "3", "4", "5"], "[value_stars]"),
                slot("name", Search, &HOTEL_NAMES, "[hotel_name]"),
                slot("book day", Book, &DAYS, "[value_day]"),
                slot(
                    "book people",
                    Book,
                    &["1", "2", "3", "4", "5", "6", "7", "8"],
                    "[value_people]",
                ),
                slot("book stay", Book, &["1", "2", "3", "4", "5"], "[value_stay]"),
                slot("phone", Attribute, &[], "[hotel_phone]"),
                slot("address", Attribute, &[], "[hotel_address]"),
                slot("postcode", Attribute, &[], "[hotel_postcode]"),
                slot("reference", Attribute, &[], "[hotel_reference]"),
            ],
        };
        let train = DomainSpec {
            name: "train".into(),
            keywords: ["train", "trains", "ticket", "tickets"]
                .map(String::from)
                .to_vec(),
            entity_key: "id".into(),
            slots: vec![
                slot("departure", Search, &PLACES, "[value_place]"),
                slot("destination", Search, &PLACES, "[value_place]"),
                slot("day", Search, &DAYS, "[value_day]"),
                slot("leaveat", Search, &TRAIN_TIMES, "[value_time]"),
                slot(
                    "book people",
                    Book,
                    &["1", "2", "3", "4", "5", "6", "7", "8"],
                    "[value_people]",
                ),
                slot("id", Attribute, &[], "[train_id]"),
                slot("arriveby", Attribute, &[], "[value_time]"),
                slot("price", Attribute, &[], "[value_price]"),
                slot("duration", Attribute, &[], "[value_duration]"),
                slot("reference", Attribute, &[], "[train_reference]"),
            ],
        };
        Ontology {
            domains: vec![hotel, train],
        }
    }
}

pub const HOTEL_NAMES: [&str; 24] = [
    "acorn guest house",
    "alexander bed and breakfast",
    "allenbell",
    "archway house",
    "arbury lodge",
    "ashley hotel",
    "autumn house",
    "avalon",
    "aylesbray lodge",
    "carolina bed and breakfast",
    "cityroomz",
    "el shaddai",
    "finches bed and breakfast",
    "gonville hotel",
    "hamilton lodge",
    "hobsons house",
    "huntingdon marriott",
    "kirkwood house",
    "leverton house",
    "limehouse",
    "lovell lodge",
    "rosas bed and breakfast",
    "warkworth house",
    "worth house",
];

pub const PLACES: [&str; 6] = [
    "cambridge",
    "ely",
    "london kings cross",
    "norwich",
    "peterborough",
    "stevenage",
];

pub const TRAIN_TIMES: [&str; 12] = [
    "05:15", "06:40", "07:50", "09:15", "10:30", "11:50", "13:10", "14:45", "16:00", "17:35",
    "19:20", "21:05",
];

/// Known belief slot names per domain, used to split multi-word slot names
/// from values when parsing generated belief states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotVocabulary {
    by_domain: BTreeMap<String, BTreeSet<String>>,
}

impl SlotVocabulary {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut by_domain: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (d, s) in pairs {
            by_domain.entry(d.to_string()).or_default().insert(s.to_string());
        }
        Self { by_domain }
    }

    /// Slot names for `domain`; for an unknown domain, the union over all
    /// domains.
    pub fn slots_for(&self, domain: &str) -> Vec<&str> {
        match self.by_domain.get(domain) {
            Some(slots) => slots.iter().map(String::as_str).collect(),
            None => {
                let all: BTreeSet<&str> = self
                    .by_domain
                    .values()
                    .flat_map(|s| s.iter().map(String::as_str))
                    .collect();
                all.into_iter().collect()
            }
        }
    }

    pub fn contains(&self, domain: &str, slot: &str) -> bool {
        self.by_domain.get(domain).is_some_and(|s| s.contains(slot))
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.by_domain.keys().map(String::as_str)
    }
}
