//! Dialogue metrics: joint goal accuracy, inform and success rates, BLEU and
//! the combined score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::audit::contains_phrase;
use crate::corpus::Goal;
use crate::database::EntityRow;
use crate::error::{Error, Result};
use crate::schema::{canonicalize_belief, normalize_text, BeliefState};

const MAX_ORDER: usize = 4;

/// Fraction of turns whose predicted belief equals the gold belief as a set
/// of canonical triplets.
pub fn joint_goal_accuracy(predicted: &[BeliefState], gold: &[BeliefState]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted beliefs for {} gold turns",
            predicted.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted
        .iter()
        .zip(gold)
        .filter(|(p, g)| canonicalize_belief(p) == canonicalize_belief(g))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// One system turn as the evaluator sees it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseOutcome {
    /// The lexicalized response.
    pub text: String,
    /// The entity this response offers, if it names one.
    pub offered: Option<EntityRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueOutcome {
    pub id: String,
    pub goal: Goal,
    pub responses: Vec<ResponseOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InformSuccess {
    /// Percentage of dialogue-domains whose final offered entity meets the goal.
    pub inform: f64,
    /// Percentage that are informed and answer every requested attribute.
    pub success: f64,
    pub dialogue_domains: usize,
    /// Ids of dialogues with an empty goal.
    pub skipped: Vec<String>,
}

/// Scores each goal domain of each dialogue. The last entity offered for the
/// domain decides inform; success additionally needs every requested
/// attribute of that entity to appear in some response of the dialogue.
pub fn inform_success(dialogues: &[DialogueOutcome]) -> InformSuccess {
    let mut total = 0usize;
    let mut informed = 0usize;
    let mut succeeded = 0usize;
    let mut skipped = Vec::new();
    for d in dialogues {
        if d.goal.domains.is_empty() {
            skipped.push(d.id.clone());
            continue;
        }
        let texts: Vec<String> = d.responses.iter().map(|r| normalize_text(&r.text)).collect();
        for (domain, goal) in &d.goal.domains {
            total += 1;
            let last = d
                .responses
                .iter()
                .rev()
                .find_map(|r| r.offered.as_ref().filter(|e| e.domain == *domain));
            let Some(entity) = last.filter(|e| goal.satisfied_by(e)) else {
                continue;
            };
            informed += 1;
            let answered = goal.reqt.iter().all(|slot| {
                entity
                    .get(slot)
                    .map(normalize_text)
                    .is_some_and(|v| texts.iter().any(|t| contains_phrase(t, &v)))
            });
            if answered {
                succeeded += 1;
            }
        }
    }
    let pct = |n: usize| if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
    InformSuccess {
        inform: pct(informed),
        success: pct(succeeded),
        dialogue_domains: total,
        skipped,
    }
}

/// Clipped n-gram matches and candidate n-gram totals for one sentence pair.
fn ngram_stats(candidate: &[&str], reference: &[&str]) -> [(usize, usize, usize); MAX_ORDER] {
    let mut out = [(0, 0, 0); MAX_ORDER];
    for (i, slot) in out.iter_mut().enumerate() {
        let n = i + 1;
        let mut refs: HashMap<&[&str], usize> = HashMap::new();
        for w in reference.windows(n) {
            *refs.entry(w).or_default() += 1;
        }
        let mut cands: HashMap<&[&str], usize> = HashMap::new();
        for w in candidate.windows(n) {
            *cands.entry(w).or_default() += 1;
        }
        let matched = cands.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
        *slot = (
            matched,
            candidate.len().saturating_sub(n - 1),
            reference.len().saturating_sub(n - 1),
        );
    }
    out
}

/// Corpus-level BLEU-4 on a 0 to 100 scale with one reference per candidate
/// and no smoothing. Texts are split on whitespace.
///
/// An order for which neither side has any n-gram is left out of the
/// geometric mean, so a corpus of short sentences still scores 100 against
/// itself. An order where the candidates have no n-grams but the references
/// do has precision zero.
pub fn bleu(candidates: &[String], references: &[String]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut cand_total = [0usize; MAX_ORDER];
    let mut ref_total = [0usize; MAX_ORDER];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let c: Vec<&str> = c.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        c_len += c.len();
        r_len += r.len();
        for (n, (m, ct, rt)) in ngram_stats(&c, &r).into_iter().enumerate() {
            matched[n] += m;
            cand_total[n] += ct;
            ref_total[n] += rt;
        }
    }
    if c_len == 0 {
        return Ok(if r_len == 0 { 100.0 } else { 0.0 });
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if cand_total[n] == 0 && ref_total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / cand_total[n] as f64).ln();
        orders += 1;
    }
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    Ok(100.0 * bp * (log_sum / orders as f64).exp())
}

pub fn combined_score(inform: f64, success: f64, bleu: f64) -> f64 {
    bleu + 0.5 * (inform + success)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub joint_accuracy: f64,
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    pub turns: usize,
    pub dialogues: usize,
    pub dialogue_domains: usize,
    pub parse_failures: usize,
    pub unresolved_placeholders: usize,
    pub truncated: usize,
    pub skipped_dialogues: Vec<String>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "joint_accuracy,inform,success,bleu,combined,turns,dialogues,parse_failures";

    pub fn csv_line(&self) -> String {
        format!(
            "{:.6},{:.4},{:.4},{:.4},{:.4},{},{},{}",
            self.joint_accuracy, self.inform, self.success, self.bleu, self.combined, self.turns, self.dialogues, self.parse_failures
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "joint {:.4}  inform {:.2}  success {:.2}  bleu {:.2}  combined {:.2}  ({} turns, {} dialogues, {} parse failures)",
            self.joint_accuracy, self.inform, self.success, self.bleu, self.combined, self.turns, self.dialogues, self.parse_failures
        )
    }
}
