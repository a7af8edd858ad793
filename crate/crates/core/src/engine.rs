//! Staged inference and corpus evaluation.
//!
//! A turn is decoded in three stages over one growing sequence. The model
//! writes the belief state after the context; the pipeline then appends the
//! database summary and the model writes actions, then the delexicalized
//! response. Between stages the sequence is rebuilt from the parsed (or
//! oracle) segments, so every prompt is a prefix of a well-formed sequence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Dialogue;
use crate::database::{query_turn, Database, DbSummary, EntityRow};
use crate::error::{Error, Result};
use crate::evaluator::{bleu, combined_score, inform_success, joint_goal_accuracy, DialogueOutcome, MetricsReport, ResponseOutcome};
use crate::lexicon::{lexicalize, offered_entity};
use crate::model::{greedy_decode, make_examples, train_with, Checkpoint, ModelConfig, ModelParams, TrainConfig, TrainReport};
use crate::ontology::Ontology;
use crate::schema::{
    normalize_text, parse_action_response, parse_belief, ActionTriplet, BeliefState, ParseFlag, SerializationOptions, Turn, ACTION,
    BELIEF, END_ACTION, END_BELIEF, END_CONTEXT, END_RESPONSE, RESPONSE, SEGMENT_TOKENS,
};
use crate::tokenizer::Vocab;

pub const BELIEF_CAP: usize = 96;
pub const ACTION_CAP: usize = 48;
pub const RESPONSE_CAP: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Generation stopped at a length limit instead of the stop token, or
    /// the prompt had to be cut to fit.
    pub truncated: bool,
}

/// Anything that continues a serialized dialogue sequence.
pub trait SequenceModel: Sync {
    fn options(&self) -> SerializationOptions;

    /// Greedy continuation of `prompt`, ending with `stop` when it is
    /// produced, and at most `max_new` tokens long.
    fn complete(&self, prompt: &str, stop: Option<&str>, max_new: usize) -> Result<Completion>;
}

impl SequenceModel for Checkpoint {
    fn options(&self) -> SerializationOptions {
        self.options
    }

    fn complete(&self, prompt: &str, stop: Option<&str>, max_new: usize) -> Result<Completion> {
        let max_len = self.params.config.max_len;
        let mut tokens = self.vocab.encode_with_limit(prompt, usize::MAX);
        let mut truncated = false;
        if tokens.len() >= max_len {
            // Keep the most recent part of the dialogue.
            tokens.drain(..tokens.len() + 1 - max_len);
            truncated = true;
        }
        let stop_ids: Vec<_> = stop.and_then(|s| self.vocab.id(s)).into_iter().collect();
        let out = greedy_decode(&self.params, &tokens, &stop_ids, max_new)?;
        if !stop_ids.is_empty() && out.last() != stop_ids.first() {
            truncated = true;
        }
        Ok(Completion {
            text: self.vocab.decode(&out)?,
            truncated,
        })
    }
}

/// Plays back gold sequences: the continuation of a prompt is taken from the
/// first gold sequence that extends it. Used for oracle runs and tests.
pub struct ReplayModel {
    options: SerializationOptions,
    sequences: Vec<Vec<String>>,
}

impl ReplayModel {
    pub fn new(dialogues: &[Dialogue], options: SerializationOptions) -> Result<Self> {
        let mut sequences = Vec::new();
        for d in dialogues {
            for t in 0..d.turns.len() {
                let s = options.training_sequence(&d.turns, t)?;
                sequences.push(s.split_whitespace().map(String::from).collect());
            }
        }
        Ok(Self { options, sequences })
    }
}

impl SequenceModel for ReplayModel {
    fn options(&self) -> SerializationOptions {
        self.options
    }

    fn complete(&self, prompt: &str, stop: Option<&str>, max_new: usize) -> Result<Completion> {
        let p: Vec<&str> = prompt.split_whitespace().collect();
        let Some(seq) = self
            .sequences
            .iter()
            .find(|s| s.len() > p.len() && s.iter().zip(&p).all(|(a, b)| a == b))
        else {
            return Ok(Completion {
                text: String::new(),
                truncated: true,
            });
        };
        let mut out = Vec::new();
        let mut stopped = false;
        for w in &seq[p.len()..] {
            if out.len() == max_new {
                break;
            }
            out.push(w.as_str());
            if Some(w.as_str()) == stop {
                stopped = true;
                break;
            }
        }
        Ok(Completion {
            text: out.join(" "),
            truncated: stop.is_some() && !stopped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefMode {
    Generated,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbMode {
    Oracle,
    Dynamic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Generated,
    Oracle,
}

macro_rules! mode_strings {
    ($ty:ident { $($variant:ident => $name:literal),* }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    _ => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of: ", $($name, " ",)*),
                        s
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)* })
            }
        }
    };
}

mode_strings!(BeliefMode { Generated => "generated", Oracle => "oracle" });
mode_strings!(DbMode { Oracle => "oracle", Dynamic => "dynamic", None => "none" });
mode_strings!(ActionMode { Generated => "generated", Oracle => "oracle" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub belief_mode: BeliefMode,
    pub db_mode: DbMode,
    pub action_mode: ActionMode,
}

impl EvalSettings {
    pub fn end_to_end() -> Self {
        Self {
            belief_mode: BeliefMode::Generated,
            db_mode: DbMode::Dynamic,
            action_mode: ActionMode::Generated,
        }
    }

    pub fn all_oracle() -> Self {
        Self {
            belief_mode: BeliefMode::Oracle,
            db_mode: DbMode::Oracle,
            action_mode: ActionMode::Oracle,
        }
    }

    /// All twelve settings.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::new();
        for belief_mode in [BeliefMode::Generated, BeliefMode::Oracle] {
            for db_mode in [DbMode::Oracle, DbMode::Dynamic, DbMode::None] {
                for action_mode in [ActionMode::Generated, ActionMode::Oracle] {
                    out.push(Self {
                        belief_mode,
                        db_mode,
                        action_mode,
                    });
                }
            }
        }
        out
    }
}

impl fmt::Display for EvalSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "belief={} db={} action={}", self.belief_mode, self.db_mode, self.action_mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnResult {
    pub belief: BeliefState,
    pub db: Option<DbSummary>,
    pub actions: Vec<ActionTriplet>,
    pub delex: String,
    pub lex: String,
    /// The entity the response offers, if any.
    pub offered: Option<EntityRow>,
    pub parse_flags: Vec<ParseFlag>,
    pub unresolved: Vec<String>,
    pub truncated: bool,
    /// The full sequence, as rebuilt after the last stage.
    pub sequence: String,
}

/// Stores the pipeline needs besides the model.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub ontology: &'a Ontology,
    pub db: &'a Database,
}

/// Runs turn `t` of a gold dialogue, with the gold history as context.
pub fn run_turn(model: &dyn SequenceModel, res: Resources, dialogue: &Dialogue, t: usize, settings: EvalSettings) -> Result<TurnResult> {
    if t >= dialogue.turns.len() {
        return Err(Error::InvalidArgument(format!(
            "turn {t} out of range for dialogue {} with {} turns",
            dialogue.id,
            dialogue.turns.len()
        )));
    }
    let users: Vec<&str> = dialogue.turns[..=t].iter().map(|x| x.user.as_str()).collect();
    let systems: Vec<&str> = dialogue.turns[..t].iter().map(|x| x.system.as_str()).collect();
    run_turn_with_history(model, res, &users, &systems, Some(&dialogue.turns[t]), settings)
}

/// Runs one turn over an explicit history. `gold` supplies the oracle
/// stages and is required whenever a setting asks for one.
pub fn run_turn_with_history(
    model: &dyn SequenceModel,
    res: Resources,
    users: &[&str],
    systems: &[&str],
    gold: Option<&Turn>,
    settings: EvalSettings,
) -> Result<TurnResult> {
    let opts = model.options();
    let need_gold = |what: &str| Error::MissingAnnotation(format!("oracle {what} requested without a gold turn"));
    let mut flags = Vec::new();
    let mut truncated = false;
    let context = opts.context_from_utterances(users, systems);

    let belief = match settings.belief_mode {
        BeliefMode::Oracle => gold.ok_or_else(|| need_gold("belief"))?.belief.clone(),
        BeliefMode::Generated => {
            let c = model.complete(&format!("{context} {BELIEF}"), opts.stop_token(END_BELIEF), BELIEF_CAP)?;
            truncated |= c.truncated;
            let parsed = parse_belief(&format!("{BELIEF} {}", c.text), &res.ontology.slot_vocabulary());
            flags.extend(parsed.flags);
            parsed.belief
        }
    };

    let query = query_turn(res.db, res.ontology, users, &belief);
    let db = match settings.db_mode {
        DbMode::None => None,
        DbMode::Dynamic => Some(query.summary.clone()),
        DbMode::Oracle => Some(
            gold.ok_or_else(|| need_gold("database summary"))?
                .db
                .clone()
                .ok_or_else(|| Error::MissingAnnotation("gold turn has no database summary".into()))?,
        ),
    };
    let mut prefix = format!("{context} {}", opts.belief(&belief));
    if let Some(summary) = &db {
        prefix = format!("{prefix} {}", opts.db(summary));
    }

    let actions = match settings.action_mode {
        ActionMode::Oracle => gold.ok_or_else(|| need_gold("actions"))?.actions.clone(),
        ActionMode::Generated => {
            let c = model.complete(&format!("{prefix} {ACTION}"), opts.stop_token(END_ACTION), ACTION_CAP)?;
            truncated |= c.truncated;
            let parsed = parse_action_response(&format!("{ACTION} {}", c.text));
            flags.extend(parsed.flags.into_iter().filter(|f| *f != ParseFlag::MissingOpener(RESPONSE.into())));
            parsed.actions
        }
    };
    prefix = format!("{prefix} {}", opts.actions(&actions));

    let c = model.complete(&format!("{prefix} {RESPONSE}"), opts.stop_token(END_RESPONSE), RESPONSE_CAP)?;
    truncated |= c.truncated;
    let parsed = parse_action_response(&format!("{RESPONSE} {}", c.text));
    flags.extend(parsed.flags.into_iter().filter(|f| *f != ParseFlag::MissingOpener(ACTION.into())));
    let delex = normalize_text(&parsed.response);
    let sequence = format!("{prefix} {}", opts.response(&delex));

    let lex = lexicalize(&delex, &belief, &query.rows, res.ontology);
    let offered = offered_entity(&delex, &query.rows, res.ontology).cloned();
    Ok(TurnResult {
        belief,
        db,
        actions,
        delex,
        lex: lex.text,
        offered,
        parse_flags: flags,
        unresolved: lex.unresolved,
        truncated,
        sequence,
    })
}

/// Runs every turn of every dialogue. Dialogues are processed in parallel;
/// the output order follows the input.
pub fn run_corpus(model: &dyn SequenceModel, res: Resources, dialogues: &[Dialogue], settings: EvalSettings) -> Result<Vec<Vec<TurnResult>>> {
    dialogues
        .par_iter()
        .map(|d| (0..d.turns.len()).map(|t| run_turn(model, res, d, t, settings)).collect())
        .collect()
}

/// Scores turn results against the gold dialogues they came from.
pub fn score_runs(dialogues: &[Dialogue], runs: &[Vec<TurnResult>]) -> Result<MetricsReport> {
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if dialogues.len() != runs.len() {
        return Err(Error::InvalidArgument(format!("{} runs for {} dialogues", runs.len(), dialogues.len())));
    }
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    let mut outcomes = Vec::new();
    let mut report = MetricsReport::default();
    for (d, run) in dialogues.iter().zip(runs) {
        if d.turns.len() != run.len() {
            return Err(Error::InvalidArgument(format!("dialogue {}: turn count mismatch", d.id)));
        }
        for (turn, r) in d.turns.iter().zip(run) {
            predicted.push(r.belief.clone());
            gold.push(turn.belief.clone());
            candidates.push(r.delex.clone());
            references.push(normalize_text(&turn.system_delex));
            report.parse_failures += usize::from(!r.parse_flags.is_empty());
            report.unresolved_placeholders += r.unresolved.len();
            report.truncated += usize::from(r.truncated);
        }
        outcomes.push(DialogueOutcome {
            id: d.id.clone(),
            goal: d.goal.clone(),
            responses: run
                .iter()
                .map(|r| ResponseOutcome {
                    text: r.lex.clone(),
                    offered: r.offered.clone(),
                })
                .collect(),
        });
    }
    let is = inform_success(&outcomes);
    report.joint_accuracy = joint_goal_accuracy(&predicted, &gold)?;
    report.inform = is.inform;
    report.success = is.success;
    report.bleu = bleu(&candidates, &references)?;
    report.combined = combined_score(report.inform, report.success, report.bleu);
    report.turns = gold.len();
    report.dialogues = dialogues.len();
    report.dialogue_domains = is.dialogue_domains;
    report.skipped_dialogues = is.skipped;
    Ok(report)
}

pub fn evaluate_corpus(model: &dyn SequenceModel, res: Resources, dialogues: &[Dialogue], settings: EvalSettings) -> Result<MetricsReport> {
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let runs = run_corpus(model, res, dialogues, settings)?;
    score_runs(dialogues, &runs)
}

/// What produced a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub settings: EvalSettings,
    pub seed: Option<u64>,
    pub checkpoint_sha256: Option<String>,
    pub corpus_sha256: String,
    pub dialogues: usize,
    pub options: SerializationOptions,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

pub fn corpus_hash(dialogues: &[Dialogue]) -> Result<String> {
    let mut h = Sha256::new();
    for d in dialogues {
        h.update(serde_json::to_string(d)?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

pub fn checkpoint_hash(ck: &Checkpoint) -> String {
    hex::encode(Sha256::digest(ck.to_bytes()))
}

/// Vocabulary of the training sequences plus every ontology and database
/// value, so held-out dialogues about known entities have no unknown words.
pub fn build_vocab(dialogues: &[Dialogue], ontology: &Ontology, db: &Database, options: SerializationOptions) -> Result<Vocab> {
    let texts = training_texts(dialogues, options)?;
    let mut vocab = Vocab::build(&texts, &SEGMENT_TOKENS)?;
    for d in &ontology.domains {
        for s in &d.slots {
            vocab.extend_words(s.values.iter().map(String::as_str));
        }
    }
    for row in db.all_rows() {
        vocab.extend_words(row.attributes.values().map(String::as_str));
    }
    Ok(vocab)
}

/// One serialized sequence per turn.
pub fn training_texts(dialogues: &[Dialogue], options: SerializationOptions) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for d in dialogues {
        for t in 0..d.turns.len() {
            out.push(options.training_sequence(&d.turns, t)?);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

/// Builds the vocabulary, initializes a model of shape `config` (its
/// vocabulary size is replaced) and trains it on every turn of `dialogues`.
pub fn train_checkpoint(
    dialogues: &[Dialogue],
    ontology: &Ontology,
    db: &Database,
    config: ModelConfig,
    train: &TrainConfig,
    options: SerializationOptions,
    on_step: impl FnMut(usize, f64),
) -> Result<(Checkpoint, TrainReport)> {
    let vocab = build_vocab(dialogues, ontology, db, options)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..config
    };
    config.validate()?;
    let texts = training_texts(dialogues, options)?;
    let sequences: Vec<_> = texts.iter().map(|t| vocab.encode_with_limit(t, usize::MAX)).collect();
    let longest = sequences.iter().map(Vec::len).max().unwrap_or(0);
    if longest > config.max_len {
        log::warn!("longest training sequence has {longest} tokens; truncating to {}", config.max_len);
    }
    let context_end = vocab.id(END_CONTEXT);
    let examples = make_examples(&sequences, config.max_len, context_end, train.mask_context);
    let mut params = ModelParams::new(config, train.seed);
    let report = train_with(&mut params, &examples, train, on_step)?;
    Ok((Checkpoint { params, vocab, options }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::database::MatchBucket;
    use crate::schema::DB;

    fn setup() -> (Ontology, crate::corpus::SyntheticCorpus) {
        let o = Ontology::synthetic();
        let c = generate_synthetic_corpus(&o, 25, 3).unwrap();
        (o, c)
    }

    #[test]
    fn oracle_replay_matches_gold() {
        let (o, c) = setup();
        let model = ReplayModel::new(&c.dialogues, SerializationOptions::default()).unwrap();
        let res = Resources {
            ontology: &o,
            db: &c.database,
        };
        for d in c.dialogues.iter().take(5) {
            for (t, turn) in d.turns.iter().enumerate() {
                let r = run_turn(&model, res, d, t, EvalSettings::all_oracle()).unwrap();
                assert_eq!(r.belief, turn.belief);
                assert_eq!(r.db, turn.db);
                assert_eq!(r.actions, turn.actions);
                assert_eq!(r.delex, turn.system_delex);
                assert_eq!(r.lex, turn.system);
                assert!(r.parse_flags.is_empty() && !r.truncated);
                assert_eq!(r.sequence, SerializationOptions::default().training_sequence(&d.turns, t).unwrap());
            }
        }
        let report = evaluate_corpus(&model, res, &c.dialogues, EvalSettings::all_oracle()).unwrap();
        assert_eq!(report.joint_accuracy, 1.0);
        assert_eq!((report.inform, report.success, report.bleu, report.combined), (100.0, 100.0, 100.0, 200.0));
    }

    #[test]
    fn generated_stages_replay_gold_too() {
        let (o, c) = setup();
        let model = ReplayModel::new(&c.dialogues, SerializationOptions::default()).unwrap();
        let res = Resources {
            ontology: &o,
            db: &c.database,
        };
        let r = evaluate_corpus(&model, res, &c.dialogues, EvalSettings::end_to_end()).unwrap();
        assert_eq!(r.joint_accuracy, 1.0);
        assert_eq!(r.combined, 200.0);
        assert_eq!(r.parse_failures, 0);
    }

    #[test]
    fn no_db_mode_omits_segment() {
        let (o, c) = setup();
        let opts = SerializationOptions {
            include_db: false,
            end_tokens: true,
        };
        let model = ReplayModel::new(&c.dialogues, opts).unwrap();
        let res = Resources {
            ontology: &o,
            db: &c.database,
        };
        let settings = EvalSettings {
            db_mode: DbMode::None,
            ..EvalSettings::end_to_end()
        };
        let r = run_turn(&model, res, &c.dialogues[0], 0, settings).unwrap();
        assert!(r.db.is_none());
        assert!(!r.sequence.split_whitespace().any(|w| w == DB));
        assert_eq!(r.delex, c.dialogues[0].turns[0].system_delex);
    }

    /// Emits a fixed belief and otherwise nothing useful.
    struct FixedBelief(&'static str);

    impl SequenceModel for FixedBelief {
        fn options(&self) -> SerializationOptions {
            SerializationOptions::default()
        }

        fn complete(&self, prompt: &str, stop: Option<&str>, _max_new: usize) -> Result<Completion> {
            let text = if prompt.ends_with(BELIEF) {
                format!("{} {END_BELIEF}", self.0)
            } else {
                stop.unwrap_or_default().to_string()
            };
            Ok(Completion { text, truncated: false })
        }
    }

    #[test]
    fn dynamic_db_sees_nonexistent_entity() {
        let (o, c) = setup();
        let res = Resources {
            ontology: &o,
            db: &c.database,
        };
        let model = FixedBelief("hotel name pizza palace");
        let mut d = c.dialogues[0].clone();
        d.turns[0].user = "i want a hotel called pizza palace .".into();
        let r = run_turn(&model, res, &d, 0, EvalSettings::end_to_end()).unwrap();
        let summary = r.db.unwrap();
        assert_eq!(summary.match_count, 0);
        assert_eq!(summary.bucket, MatchBucket::from_count(0));
        assert!(r.sequence.contains(&SerializationOptions::default().db(&summary)));
    }

    #[test]
    fn oracle_without_gold_is_an_error() {
        let (o, c) = setup();
        let res = Resources {
            ontology: &o,
            db: &c.database,
        };
        let model = FixedBelief("hotel area north");
        let err = run_turn_with_history(&model, res, &["hi"], &[], None, EvalSettings::all_oracle());
        assert!(matches!(err, Err(Error::MissingAnnotation(_))));
        assert!(run_turn_with_history(&model, res, &["hi"], &[], None, EvalSettings::end_to_end()).is_ok());
    }

    #[test]
    fn settings_parse_and_print() {
        for s in EvalSettings::all() {
            assert_eq!(s.belief_mode.to_string().parse::<BeliefMode>().unwrap(), s.belief_mode);
            assert_eq!(s.db_mode.to_string().parse::<DbMode>().unwrap(), s.db_mode);
            assert_eq!(s.action_mode.to_string().parse::<ActionMode>().unwrap(), s.action_mode);
        }
        assert_eq!(EvalSettings::all().len(), 12);
        assert!("maybe".parse::<DbMode>().is_err());
    }

    #[test]
    fn hashes_are_stable() {
        let (_, c) = setup();
        assert_eq!(corpus_hash(&c.dialogues).unwrap(), corpus_hash(&c.dialogues).unwrap());
        assert_ne!(corpus_hash(&c.dialogues).unwrap(), corpus_hash(&c.dialogues[1..]).unwrap());
    }
}
