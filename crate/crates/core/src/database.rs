//! In-memory entity store and the database summary segment.
//!
//! The database file is a JSON object with one array of attribute maps per
//! domain:
//!
//! ```json
//! { "train": [ { "id": "tr1159", "departure": "cambridge", "destination": "ely" } ] }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::schema::{normalize_text, BeliefState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRow {
    pub domain: String,
    pub attributes: BTreeMap<String, String>,
}

impl EntityRow {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.attributes.get(slot).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchBucket {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "many")]
    Many,
}

impl MatchBucket {
    pub fn from_count(count: usize) -> Self {
        match count {
            0 => MatchBucket::Zero,
            1 => MatchBucket::One,
            2 => MatchBucket::Two,
            3 => MatchBucket::Three,
            _ => MatchBucket::Many,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            MatchBucket::Zero => "0",
            MatchBucket::One => "1",
            MatchBucket::Two => "2",
            MatchBucket::Three => "3",
            MatchBucket::Many => "many",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookingStatus {
    Available,
    NotAvailable,
    NotApplicable,
}

impl BookingStatus {
    pub fn token(&self) -> &'static str {
        match self {
            BookingStatus::Available => "available",
            BookingStatus::NotAvailable => "not_available",
            BookingStatus::NotApplicable => "not_applicable",
        }
    }
}

/// Aggregated query result fed to the model. The exact count is kept for
/// lexicalization; only the bucket is serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DbSummary {
    pub match_count: usize,
    pub bucket: MatchBucket,
    pub booking: BookingStatus,
}

impl DbSummary {
    pub fn from_count(match_count: usize, booking: BookingStatus) -> Self {
        Self {
            match_count,
            bucket: MatchBucket::from_count(match_count),
            booking,
        }
    }

    pub fn segment_body(&self) -> String {
        format!("{} {}", self.bucket.token(), self.booking.token())
    }
}

impl fmt::Display for DbSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} matches)", self.segment_body(), self.match_count)
    }
}

pub fn summarize_results(rows: &[EntityRow], booking: Option<BookingStatus>) -> DbSummary {
    DbSummary::from_count(rows.len(), booking.unwrap_or(BookingStatus::NotApplicable))
}

/// Booking-style slots never constrain a search.
pub fn is_booking_slot(slot: &str) -> bool {
    slot.starts_with("book ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    domains: BTreeMap<String, Vec<EntityRow>>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: EntityRow) {
        self.domains.entry(row.domain.clone()).or_default().push(row);
    }

    pub fn rows(&self, domain: &str) -> &[EntityRow] {
        self.domains.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.domains.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_rows(&self) -> impl Iterator<Item = &EntityRow> {
        self.domains.values().flatten()
    }

    /// Rows of `domain` whose attributes equal every non-booking constraint
    /// the belief state places on that domain, in stored order.
    pub fn query(&self, belief: &BeliefState, domain: &str) -> Vec<EntityRow> {
        let constraints: Vec<(&str, String)> = belief
            .for_domain(domain)
            .filter(|(s, _)| !is_booking_slot(s))
            .map(|(s, v)| (s, normalize_text(v)))
            .collect();
        self.rows(domain)
            .iter()
            .filter(|row| {
                constraints
                    .iter()
                    .all(|(s, v)| row.get(s).is_some_and(|rv| rv == v))
            })
            .cloned()
            .collect()
    }

    /// Parses and validates a database document against the ontology.
    pub fn from_json(text: &str, ontology: &Ontology) -> Result<Self> {
        let raw: BTreeMap<String, Vec<BTreeMap<String, String>>> = serde_json::from_str(text)?;
        let mut offenders = Vec::new();
        let mut db = Database::new();
        for (domain, rows) in raw {
            let Some(spec) = ontology.domain(&domain) else {
                offenders.push(format!("unknown domain {domain:?}"));
                continue;
            };
            for (i, attrs) in rows.into_iter().enumerate() {
                let mut row = EntityRow {
                    domain: domain.clone(),
                    attributes: BTreeMap::new(),
                };
                for (slot, value) in attrs {
                    if spec.slot(&slot).is_none() {
                        offenders.push(format!("{domain}[{i}]: unknown slot {slot:?}"));
                    }
                    row.attributes.insert(slot, normalize_text(&value));
                }
                db.push(row);
            }
        }
        if !offenders.is_empty() {
            return Err(Error::Ontology(offenders.join("; ")));
        }
        Ok(db)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw: BTreeMap<&str, Vec<&BTreeMap<String, String>>> = self
            .domains
            .iter()
            .map(|(d, rows)| (d.as_str(), rows.iter().map(|r| &r.attributes).collect()))
            .collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn load(path: &Path, ontology: &Ontology) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            return Ok(Database::new());
        }
        Self::from_json(&text, ontology)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Booking outcome for `domain`: not applicable unless the belief carries a
/// booking slot for it, then available exactly when some entity matches.
pub fn booking_status(belief: &BeliefState, domain: &str, rows: &[EntityRow]) -> BookingStatus {
    let wants_booking = belief.for_domain(domain).any(|(s, _)| is_booking_slot(s));
    match (wants_booking, rows.is_empty()) {
        (false, _) => BookingStatus::NotApplicable,
        (true, false) => BookingStatus::Available,
        (true, true) => BookingStatus::NotAvailable,
    }
}

/// The domain a turn is about: the domain of the rightmost domain keyword in
/// the latest user utterance that contains one, falling back to the first
/// domain of the belief state.
pub fn active_domain(ontology: &Ontology, user_utterances: &[&str], belief: &BeliefState) -> Option<String> {
    for utterance in user_utterances.iter().rev() {
        let words: Vec<&str> = utterance.split_whitespace().collect();
        for w in words.iter().rev() {
            if let Some(d) = ontology
                .domains
                .iter()
                .find(|d| d.keywords.iter().any(|k| k == w))
            {
                return Some(d.name.clone());
            }
        }
    }
    belief.domains().first().map(|d| d.to_string())
}

/// Query result and summary for one turn, as used both to build training
/// data from gold beliefs and at inference from generated beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnQuery {
    pub domain: Option<String>,
    pub rows: Vec<EntityRow>,
    pub summary: DbSummary,
}

pub fn query_turn(db: &Database, ontology: &Ontology, user_utterances: &[&str], belief: &BeliefState) -> TurnQuery {
    match active_domain(ontology, user_utterances, belief) {
        Some(domain) => {
            let rows = db.query(belief, &domain);
            let summary = summarize_results(&rows, Some(booking_status(belief, &domain, &rows)));
            TurnQuery {
                domain: Some(domain),
                rows,
                summary,
            }
        }
        None => TurnQuery {
            domain: None,
            rows: Vec::new(),
            summary: summarize_results(&[], None),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::BeliefTriplet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(domain: &str, attrs: &[(&str, &str)]) -> EntityRow {
        EntityRow {
            domain: domain.into(),
            attributes: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    #[test]
    fn empty_file_loads_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        fs::write(&path, "").unwrap();
        assert!(Database::load(&path, &Ontology::synthetic()).unwrap().is_empty());
    }

    #[test]
    fn single_train_row() {
        let o = Ontology::synthetic();
        let db = Database::from_json(r#"{"train": [{"id": "TR1159", "destination": "Ely"}]}"#, &o).unwrap();
        assert_eq!(db.len(), 1);
        assert_eq!(db.rows("train")[0].get("id"), Some("tr1159"));
    }

    #[test]
    fn unknown_domain_and_slot_are_listed() {
        let o = Ontology::synthetic();
        let err = Database::from_json(
            r#"{"police": [{}], "train": [{"colour": "red", "id": "tr1"}]}"#,
            &o,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("police") && err.contains("colour"), "{err}");
    }

    #[test]
    fn save_load_roundtrip() {
        let o = Ontology::synthetic();
        let mut db = Database::new();
        db.push(row("hotel", &[("name", "avalon"), ("area", "north")]));
        db.push(row("train", &[("id", "tr1"), ("day", "monday")]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        db.save(&path).unwrap();
        assert_eq!(Database::load(&path, &o).unwrap(), db);
    }

    #[test]
    fn query_basics() {
        let mut db = Database::new();
        db.push(row("hotel", &[("name", "a"), ("area", "north")]));
        db.push(row("hotel", &[("name", "b"), ("area", "south")]));
        assert_eq!(db.query(&BeliefState::new(), "hotel").len(), 2);
        let mut b = BeliefState::new();
        b.insert("hotel", "area", "east");
        assert!(db.query(&b, "hotel").is_empty());
        b.insert("hotel", "area", "North ");
        b.insert("hotel", "book people", "4");
        let rows = db.query(&b, "hotel");
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].get("name"), Some("a"));
    }

    #[test]
    fn summary_segment() {
        let s = summarize_results(&[], None);
        assert_eq!(format!("<|db|> {} <|endofdb|>", s.segment_body()), "<|db|> 0 not_applicable <|endofdb|>");
        let rows = vec![row("hotel", &[]); 7];
        assert_eq!(summarize_results(&rows, None).bucket, MatchBucket::Many);
    }

    #[test]
    fn bucket_monotone_and_consistent() {
        let mut prev = MatchBucket::from_count(0);
        for count in 0..=100 {
            let b = MatchBucket::from_count(count);
            assert!(b >= prev);
            assert_eq!(b == MatchBucket::Many, count >= 4);
            prev = b;
        }
    }

    #[test]
    fn booking_status_rule() {
        let rows = vec![row("hotel", &[])];
        let mut b = BeliefState::new();
        b.insert("hotel", "area", "north");
        assert_eq!(booking_status(&b, "hotel", &rows), BookingStatus::NotApplicable);
        b.insert("hotel", "book day", "friday");
        assert_eq!(booking_status(&b, "hotel", &rows), BookingStatus::Available);
        assert_eq!(booking_status(&b, "hotel", &[]), BookingStatus::NotAvailable);
    }

    #[test]
    fn active_domain_prefers_latest_keyword() {
        let o = Ontology::synthetic();
        let b = BeliefState::new();
        let users = ["i need a hotel in the north", "yes please", "i also need a train"];
        assert_eq!(active_domain(&o, &users, &b).as_deref(), Some("train"));
        assert_eq!(active_domain(&o, &users[..2], &b).as_deref(), Some("hotel"));
        let mut b = BeliefState::new();
        b.insert("train", "day", "monday");
        assert_eq!(active_domain(&o, &["hello"], &b).as_deref(), Some("train"));
        assert_eq!(active_domain(&o, &["hello"], &BeliefState::new()), None);
    }

    fn random_store(rng: &mut ChaCha8Rng) -> Database {
        let mut db = Database::new();
        for _ in 0..rng.gen_range(0..12) {
            let mut attrs = BTreeMap::new();
            for slot in ["area", "stars", "type"] {
                if rng.gen_bool(0.9) {
                    attrs.insert(slot.to_string(), format!("v{}", rng.gen_range(0..3)));
                }
            }
            db.push(EntityRow {
                domain: "hotel".into(),
                attributes: attrs,
            });
        }
        db
    }

    fn random_belief(rng: &mut ChaCha8Rng) -> BeliefState {
        let mut b = BeliefState::new();
        for slot in ["area", "stars", "type", "book people"] {
            if rng.gen_bool(0.4) {
                b.insert("hotel", slot, &format!("v{}", rng.gen_range(0..3)));
            }
        }
        if rng.gen_bool(0.3) {
            b.insert("train", "day", "v0");
        }
        b
    }

    /// Exhaustive filter written independently of `Database::query`.
    fn brute_force(db: &Database, b: &BeliefState, domain: &str) -> Vec<EntityRow> {
        let mut out = Vec::new();
        for r in db.all_rows() {
            if r.domain != domain {
                continue;
            }
            let mut ok = true;
            for t in b.triplets() {
                let BeliefTriplet { domain: d, slot, value } = t;
                if d != domain || slot.starts_with("book ") {
                    continue;
                }
                if r.attributes.get(&slot) != Some(&value) {
                    ok = false;
                }
            }
            if ok {
                out.push(r.clone());
            }
        }
        out
    }

    #[test]
    fn query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let db = random_store(&mut rng);
            let b = random_belief(&mut rng);
            assert_eq!(db.query(&b, "hotel"), brute_force(&db, &b, "hotel"));
        }
    }

    #[test]
    fn adding_constraints_never_grows_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let db = random_store(&mut rng);
            let b = random_belief(&mut rng);
            let before = db.query(&b, "hotel");
            let mut tighter = b.clone();
            let slot = ["area", "stars", "type"][rng.gen_range(0..3)];
            if tighter.get("hotel", slot).is_some() {
                continue;
            }
            tighter.insert("hotel", slot, &format!("v{}", rng.gen_range(0..3)));
            let after = db.query(&tighter, "hotel");
            assert!(after.len() <= before.len());
            assert!(after.iter().all(|r| before.contains(r)));
        }
    }
}
