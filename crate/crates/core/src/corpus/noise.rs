//! Controlled corruption of gold belief annotations.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audit::{contains_phrase, ValueIndex};
use super::Dialogue;
use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::schema::{normalize_text, BeliefTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoiseType {
    /// The context admits several readings.
    #[serde(rename = "T1")]
    Ambiguous,
    /// The context supports a triplet that is not labeled.
    #[serde(rename = "T2")]
    MissingLabel,
    /// A labeled triplet has no support in the context.
    #[serde(rename = "T3")]
    SpuriousLabel,
    /// A labeled value is misspelled.
    #[serde(rename = "T4")]
    Misspelled,
}

impl NoiseType {
    pub fn code(&self) -> &'static str {
        match self {
            NoiseType::Ambiguous => "T1",
            NoiseType::MissingLabel => "T2",
            NoiseType::SpuriousLabel => "T3",
            NoiseType::Misspelled => "T4",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "ambiguous" => Ok(NoiseType::Ambiguous),
            "t2" | "missing" | "missing_label" => Ok(NoiseType::MissingLabel),
            "t3" | "spurious" | "spurious_label" => Ok(NoiseType::SpuriousLabel),
            "t4" | "misspelled" => Ok(NoiseType::Misspelled),
            _ => Err(Error::InvalidArgument(format!("unknown noise type {s:?}"))),
        }
    }
}

/// Ground truth for one corruption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub dialogue: String,
    pub turn: usize,
    pub noise_type: NoiseType,
    pub original: Option<BeliefTriplet>,
    pub corrupted: Option<BeliefTriplet>,
}

fn triplet_text(t: &Option<BeliefTriplet>) -> String {
    t.as_ref()
        .map(|t| format!("{} {} {}", t.domain, t.slot, t.value))
        .unwrap_or_default()
}

pub fn write_noise_records(path: &Path, records: &[NoiseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dialogue", "turn", "type", "original", "corrupted"])?;
    for r in records {
        w.write_record([
            r.dialogue.clone(),
            r.turn.to_string(),
            r.noise_type.to_string(),
            triplet_text(&r.original),
            triplet_text(&r.corrupted),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Corrupts each eligible turn with probability `rate`, skipping turns in
/// `protected` (pairs of dialogue id and turn index). Each corrupted turn gets
/// exactly one record; other turns are untouched.
pub fn inject_noise(
    dialogues: &[Dialogue],
    ontology: &Ontology,
    noise: NoiseType,
    rate: f64,
    seed: u64,
    protected: &BTreeSet<(String, usize)>,
) -> Result<(Vec<Dialogue>, Vec<NoiseRecord>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("noise rate {rate} is outside [0, 1]")));
    }
    if noise == NoiseType::Ambiguous {
        return Err(Error::InvalidArgument(
            "ambiguous-context noise (T1) cannot be injected; choose T2, T3 or T4".into(),
        ));
    }
    let index = ValueIndex::new(ontology);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dialogues.to_vec();
    let mut records = Vec::new();
    for d in &mut out {
        for t in 0..d.turns.len() {
            if protected.contains(&(d.id.clone(), t)) || rate == 0.0 || !rng.gen_bool(rate) {
                continue;
            }
            let users: Vec<String> = d.turns[..=t].iter().map(|x| normalize_text(&x.user)).collect();
            let mut context = users.clone();
            context.extend(d.turns[..t].iter().map(|x| normalize_text(&x.system)));
            let change = match noise {
                NoiseType::MissingLabel => drop_label(d, t, &users, &index, &mut rng),
                NoiseType::SpuriousLabel => add_label(d, t, &context, ontology, &mut rng),
                NoiseType::Misspelled => misspell(d, t, &context, &index, &mut rng),
                NoiseType::Ambiguous => unreachable!(),
            };
            if let Some((original, corrupted)) = change {
                records.push(NoiseRecord {
                    dialogue: d.id.clone(),
                    turn: t,
                    noise_type: noise,
                    original,
                    corrupted,
                });
            }
        }
    }
    Ok((out, records))
}

type Change = (Option<BeliefTriplet>, Option<BeliefTriplet>);

/// Removes a triplet whose value the user spoke and no other triplet shares.
fn drop_label(d: &mut Dialogue, t: usize, users: &[String], index: &ValueIndex, rng: &mut ChaCha8Rng) -> Option<Change> {
    let spoken: BTreeSet<String> = users.iter().flat_map(|u| index.spot(u)).collect();
    let belief = &d.turns[t].belief;
    let candidates: Vec<BeliefTriplet> = belief
        .triplets()
        .into_iter()
        .filter(|x| spoken.contains(&x.value) && belief.iter().filter(|(_, _, v)| *v == x.value).count() == 1)
        .collect();
    let pick = candidates.choose(rng)?.clone();
    d.turns[t].belief.remove(&pick.domain, &pick.slot);
    Some((Some(pick), None))
}

/// Adds an ontology value for an unlabeled slot that the context never
/// mentions.
fn add_label(d: &mut Dialogue, t: usize, context: &[String], ontology: &Ontology, rng: &mut ChaCha8Rng) -> Option<Change> {
    let belief = &d.turns[t].belief;
    let mut options = Vec::new();
    for domain in &ontology.domains {
        for slot in domain.belief_slots() {
            if belief.get(&domain.name, &slot.name).is_some() {
                continue;
            }
            for v in &slot.values {
                if !context.iter().any(|c| contains_phrase(c, v)) && !belief.has_value(v) {
                    options.push(BeliefTriplet::new(&domain.name, &slot.name, v));
                }
            }
        }
    }
    let pick = options.choose(rng)?.clone();
    d.turns[t].belief.insert(&pick.domain, &pick.slot, &pick.value);
    Some((None, Some(pick)))
}

/// Applies one small edit to a labeled value that the context contains.
fn misspell(d: &mut Dialogue, t: usize, context: &[String], index: &ValueIndex, rng: &mut ChaCha8Rng) -> Option<Change> {
    let belief = &d.turns[t].belief;
    let mut candidates: Vec<BeliefTriplet> = belief
        .triplets()
        .into_iter()
        .filter(|x| x.value.chars().count() >= 3 && context.iter().any(|c| contains_phrase(c, &x.value)))
        .collect();
    candidates.shuffle(rng);
    for original in candidates {
        let mut edits = edits_of(&original.value, rng);
        edits.shuffle(rng);
        let ok = edits.into_iter().find(|e| {
            !e.is_empty()
                && !e.contains(',')
                && e.split_whitespace().collect::<Vec<_>>().join(" ") == *e
                && !index.contains(e)
                && !belief.has_value(e)
                && !context.iter().any(|c| contains_phrase(c, e))
        });
        if let Some(e) = ok {
            let corrupted = BeliefTriplet::new(&original.domain, &original.slot, &e);
            d.turns[t].belief.insert(&original.domain, &original.slot, &e);
            return Some((Some(original), Some(corrupted)));
        }
    }
    None
}

/// Candidate one-step corruptions: drop a leading "the", remove a space or
/// colon, or delete, insert or substitute a single character.
fn edits_of(value: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    let chars: Vec<char> = value.chars().collect();
    let mut out = Vec::new();
    if let Some(rest) = value.strip_prefix("the ") {
        out.push(rest.to_string());
    }
    for (i, c) in chars.iter().enumerate() {
        if *c == ' ' || *c == ':' {
            let mut e = chars.clone();
            e.remove(i);
            out.push(e.into_iter().collect());
        }
    }
    let letters: Vec<char> = "abcdefghijklmnopqrstuvwxyz".chars().collect();
    let i = rng.gen_range(0..chars.len());
    let mut del = chars.clone();
    del.remove(i);
    out.push(del.into_iter().collect());
    let mut ins = chars.clone();
    ins.insert(rng.gen_range(0..=chars.len()), *letters.choose(rng).unwrap());
    out.push(ins.into_iter().collect());
    let mut sub = chars.clone();
    sub[i] = *letters.choose(rng).unwrap();
    out.push(sub.into_iter().collect());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;

    fn corpus() -> (Vec<Dialogue>, Ontology) {
        let o = Ontology::synthetic();
        (generate_synthetic_corpus(&o, 60, 2).unwrap().dialogues, o)
    }

    #[test]
    fn zero_rate_is_identity() {
        let (c, o) = corpus();
        for ty in [NoiseType::MissingLabel, NoiseType::SpuriousLabel, NoiseType::Misspelled] {
            let (out, rec) = inject_noise(&c, &o, ty, 0.0, 1, &BTreeSet::new()).unwrap();
            assert_eq!(out, c);
            assert!(rec.is_empty());
        }
    }

    #[test]
    fn bad_arguments() {
        let (c, o) = corpus();
        assert!(inject_noise(&c, &o, NoiseType::Misspelled, 1.5, 1, &BTreeSet::new()).is_err());
        assert!(inject_noise(&c, &o, NoiseType::Ambiguous, 0.1, 1, &BTreeSet::new()).is_err());
    }

    #[test]
    fn records_describe_real_changes() {
        let (c, o) = corpus();
        for ty in [NoiseType::MissingLabel, NoiseType::SpuriousLabel, NoiseType::Misspelled] {
            let (out, rec) = inject_noise(&c, &o, ty, 0.3, 9, &BTreeSet::new()).unwrap();
            assert!(rec.len() > 10);
            for r in &rec {
                assert_ne!(r.original, r.corrupted);
                let d = out.iter().find(|d| d.id == r.dialogue).unwrap();
                let orig = c.iter().find(|d| d.id == r.dialogue).unwrap();
                assert_ne!(d.turns[r.turn].belief, orig.turns[r.turn].belief);
            }
            let changed: usize = out
                .iter()
                .zip(&c)
                .map(|(a, b)| a.turns.iter().zip(&b.turns).filter(|(x, y)| x != y).count())
                .sum();
            assert_eq!(changed, rec.len());
        }
    }

    #[test]
    fn protected_turns_are_skipped() {
        let (c, o) = corpus();
        let all: BTreeSet<(String, usize)> = c
            .iter()
            .flat_map(|d| (0..d.turns.len()).map(move |t| (d.id.clone(), t)))
            .collect();
        let (_, rec) = inject_noise(&c, &o, NoiseType::Misspelled, 1.0, 1, &all).unwrap();
        assert!(rec.is_empty());
    }

    #[test]
    fn article_drop_edit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(edits_of("the gandhi", &mut rng).contains(&"gandhi".to_string()));
        assert!(edits_of("09:15", &mut rng).contains(&"0915".to_string()));
    }

    #[test]
    fn parse_types() {
        assert_eq!("t4".parse::<NoiseType>().unwrap(), NoiseType::Misspelled);
        assert_eq!("T2".parse::<NoiseType>().unwrap(), NoiseType::MissingLabel);
        assert!("t9".parse::<NoiseType>().is_err());
    }
}
