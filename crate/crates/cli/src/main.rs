//! `seqtod`: corpus generation, training, evaluation, annotation auditing and
//! an interactive chat loop.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use seqtod::corpus::noise::write_noise_records;
use seqtod::corpus::{audit_annotations, generate_synthetic_corpus, inject_noise, load_corpus, save_corpus, Dialogue, NoiseType};
use seqtod::database::Database;
use seqtod::engine::{
    checkpoint_hash, corpus_hash, evaluate_corpus, run_turn_with_history, train_checkpoint, ActionMode, BeliefMode, DbMode, EvalSettings,
    Resources, RunManifest,
};
use seqtod::model::{Checkpoint, ModelConfig, TrainConfig};
use seqtod::ontology::Ontology;
use seqtod::schema::SerializationOptions;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 7;

#[derive(Parser)]
#[command(name = "seqtod", version, about = "Single-sequence task-oriented dialogue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with its database and ontology.
    GenCorpus(GenArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Flag suspicious belief annotations.
    Audit(AuditArgs),
    /// Talk to a trained model.
    Chat(ChatArgs),
}

#[derive(Args)]
struct OntologyArg {
    /// Ontology JSON; the built-in two-domain ontology when omitted.
    #[arg(long)]
    ontology: Option<PathBuf>,
}

impl OntologyArg {
    fn load(&self) -> Result<Ontology> {
        match &self.ontology {
            Some(p) => Ontology::load(p).with_context(|| format!("loading ontology {}", p.display())),
            None => Ok(Ontology::synthetic()),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    ontology: OntologyArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Training dialogues.
    #[arg(long, default_value_t = 500)]
    train: usize,
    /// Held-out dialogues.
    #[arg(long, default_value_t = 100)]
    test: usize,
    /// Corrupt the training split with this noise type (t2, t3 or t4).
    #[arg(long)]
    noise_type: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    ontology: OntologyArg,
    /// Training corpus (JSON Lines).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Feed-forward width; four times `--dim` when omitted.
    #[arg(long)]
    ff: Option<usize>,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    /// Optimizer steps; the library default when omitted.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Peak learning rate after warmup.
    #[arg(long)]
    lr: Option<f64>,
    /// Train without end-of-segment tokens.
    #[arg(long)]
    no_end_tokens: bool,
    /// Train without the database segment.
    #[arg(long)]
    no_db: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    ontology: OntologyArg,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Output directory for the report and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the manifest.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "generated")]
    belief_mode: String,
    #[arg(long, default_value = "dynamic")]
    db_mode: String,
    #[arg(long, default_value = "generated")]
    action_mode: String,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    ontology: OntologyArg,
    #[arg(long)]
    corpus: PathBuf,
    /// Database whose values count as known spellings.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Flag report (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChatArgs {
    #[command(flatten)]
    ontology: OntologyArg,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    db: PathBuf,
}

/// Exit status for a failure: bad arguments, bad input data, or anything
/// else that went wrong while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    use seqtod::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::InvalidArgument(_) | E::Config(_)) => 1,
        Some(
            E::Schema { .. }
            | E::Ontology(_)
            | E::Io { .. }
            | E::Json(_)
            | E::Csv(_)
            | E::MissingAnnotation(_)
            | E::EmptyCorpus
            | E::Checkpoint(_)
            | E::TokenOutOfRange { .. },
        ) => 2,
        Some(_) => 3,
        None if err.downcast_ref::<io::Error>().is_some() => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Audit(a) => audit(a),
        Command::Chat(a) => chat(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| seqtod::Error::io(dir, e))?;
    Ok(())
}

fn load_dialogues(path: &Path, ontology: &Ontology) -> Result<Vec<Dialogue>> {
    let loaded = load_corpus(path, ontology)?;
    for f in &loaded.flags {
        log::warn!("{} turn {}: {}", f.dialogue, f.turn, f.message);
    }
    Ok(loaded.dialogues)
}

fn load_db(path: &Path, ontology: &Ontology) -> Result<Database> {
    Ok(Database::load(path, ontology)?)
}

fn gen_corpus(a: GenArgs) -> Result<()> {
    let ontology = a.ontology.load()?;
    let corpus = generate_synthetic_corpus(&ontology, a.train + a.test, a.seed)?;
    let (mut train, test, db) = corpus.split_last(a.test);
    create_dir(&a.out)?;
    if let Some(kind) = &a.noise_type {
        let kind: NoiseType = kind.parse()?;
        let (noisy, records) = inject_noise(&train, &ontology, kind, a.noise_rate, a.seed, &BTreeSet::new())?;
        train = noisy;
        write_noise_records(&a.out.join("noise.csv"), &records)?;
        info!("injected {} {kind} records", records.len());
    }
    save_corpus(&a.out.join("train.jsonl"), &train)?;
    save_corpus(&a.out.join("test.jsonl"), &test)?;
    db.save(&a.out.join("db.json"))?;
    ontology.save(&a.out.join("ontology.json"))?;
    info!(
        "wrote {} training and {} held-out dialogues, {} entities, to {}",
        train.len(),
        test.len(),
        db.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ontology = a.ontology.load()?;
    let dialogues = load_dialogues(&a.corpus, &ontology)?;
    let db = load_db(&a.db, &ontology)?;
    let config = ModelConfig {
        num_layers: a.layers,
        num_heads: a.heads,
        model_dim: a.dim,
        ff_dim: a.ff.unwrap_or(4 * a.dim),
        vocab_size: 0,
        max_len: a.max_len,
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: a.seed,
        ..defaults
    };
    let options = SerializationOptions {
        include_db: !a.no_db,
        end_tokens: !a.no_end_tokens,
    };
    create_dir(&a.out)?;
    let (ck, report) = train_checkpoint(&dialogues, &ontology, &db, config, &tc, options, |step, loss| {
        if step % 50 == 0 || step + 1 == tc.steps {
            info!("step {step} loss {loss:.4}");
        }
    })?;
    let ck_path = a.out.join("model.ckpt");
    ck.save(&ck_path)?;
    report.write_csv(&a.out.join("loss.csv"))?;
    let manifest = serde_json::json!({
        "seed": a.seed,
        "corpus_sha256": corpus_hash(&dialogues)?,
        "checkpoint_sha256": checkpoint_hash(&ck),
        "model": {
            "layers": ck.params.config.num_layers,
            "heads": ck.params.config.num_heads,
            "dim": ck.params.config.model_dim,
            "ff": ck.params.config.ff_dim,
            "vocab": ck.params.config.vocab_size,
            "max_len": ck.params.config.max_len,
        },
        "train": tc,
        "options": options,
        "wall_seconds": report.wall_seconds,
        "final_loss": report.final_loss(),
    });
    let path = a.out.join("train_manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| seqtod::Error::io(&path, e))?;
    info!(
        "trained {} parameters in {:.1}s, final loss {:.4}; wrote {}",
        ck.params.num_parameters(),
        report.wall_seconds,
        report.final_loss().unwrap_or(f64::NAN),
        ck_path.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let settings = EvalSettings {
        belief_mode: a.belief_mode.parse::<BeliefMode>()?,
        db_mode: a.db_mode.parse::<DbMode>()?,
        action_mode: a.action_mode.parse::<ActionMode>()?,
    };
    let ontology = a.ontology.load()?;
    let dialogues = load_dialogues(&a.corpus, &ontology)?;
    let db = load_db(&a.db, &ontology)?;
    let res = Resources {
        ontology: &ontology,
        db: &db,
    };
    let checkpoint = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let (report, options, ck_id) = match &checkpoint {
        Some(ck) => (evaluate_corpus(ck, res, &dialogues, settings)?, ck.options, Some(checkpoint_hash(ck))),
        None => {
            let all_oracle = settings.belief_mode == BeliefMode::Oracle && settings.action_mode == ActionMode::Oracle;
            if !all_oracle {
                return Err(seqtod::Error::InvalidArgument("--checkpoint is required unless belief and action modes are oracle".into()).into());
            }
            // Without a model the responses are replayed from the corpus.
            let options = SerializationOptions {
                include_db: settings.db_mode != DbMode::None,
                end_tokens: true,
            };
            let replay = seqtod::engine::ReplayModel::new(&dialogues, options)?;
            (evaluate_corpus(&replay, res, &dialogues, settings)?, options, None)
        }
    };
    create_dir(&a.out)?;
    let path = a.out.join("metrics.json");
    fs::write(&path, report.to_json()?).map_err(|e| seqtod::Error::io(&path, e))?;
    let path = a.out.join("metrics.csv");
    fs::write(&path, format!("{}\n{}\n", seqtod::evaluator::MetricsReport::CSV_HEADER, report.csv_line()))
        .map_err(|e| seqtod::Error::io(&path, e))?;
    RunManifest {
        settings,
        seed: Some(a.seed),
        checkpoint_sha256: ck_id,
        corpus_sha256: corpus_hash(&dialogues)?,
        dialogues: dialogues.len(),
        options,
    }
    .write(&a.out.join("manifest.json"))?;
    println!("{settings}: {report}");
    Ok(())
}

fn audit(a: AuditArgs) -> Result<()> {
    let ontology = a.ontology.load()?;
    let dialogues = load_dialogues(&a.corpus, &ontology)?;
    let db = a.db.as_deref().map(|p| load_db(p, &ontology)).transpose()?;
    let flags = audit_annotations(&dialogues, &ontology, db.as_ref());
    let mut w = csv::Writer::from_path(&a.out).map_err(seqtod::Error::from)?;
    w.write_record(["dialogue", "turn", "type", "evidence"]).map_err(seqtod::Error::from)?;
    for f in &flags {
        w.write_record([f.dialogue.clone(), f.turn.to_string(), f.noise_type.to_string(), f.evidence.clone()])
            .map_err(seqtod::Error::from)?;
    }
    w.flush().map_err(|e| seqtod::Error::io(&a.out, e))?;
    println!("{} flags in {} dialogues", flags.len(), dialogues.len());
    Ok(())
}

fn chat(a: ChatArgs) -> Result<()> {
    let ontology = a.ontology.load()?;
    let db = load_db(&a.db, &ontology)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let res = Resources {
        ontology: &ontology,
        db: &db,
    };
    let settings = EvalSettings::end_to_end();
    let mut users: Vec<String> = Vec::new();
    let mut systems: Vec<String> = Vec::new();
    let stdin = io::stdin();
    let mut out = io::stdout();
    writeln!(out, "type a message; an empty line or end of input quits")?;
    loop {
        write!(out, "user> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        users.push(line.trim().to_string());
        let u: Vec<&str> = users.iter().map(String::as_str).collect();
        let s: Vec<&str> = systems.iter().map(String::as_str).collect();
        let r = match run_turn_with_history(&ck, res, &u, &s, None, settings) {
            Ok(r) => r,
            Err(e) => {
                // The dialogue no longer fits the model; start over.
                writeln!(out, "  ({e}; starting a new dialogue)")?;
                users.clear();
                systems.clear();
                continue;
            }
        };
        let belief: Vec<String> = r.belief.iter().map(|(d, s, v)| format!("{d} {s} {v}")).collect();
        writeln!(out, "  belief:   {}", belief.join(", "))?;
        if let Some(db) = &r.db {
            writeln!(out, "  db:       {} match(es), booking {}", db.match_count, db.booking.token())?;
        }
        let actions: Vec<String> = r.actions.iter().map(ToString::to_string).collect();
        writeln!(out, "  actions:  {}", actions.join(", "))?;
        writeln!(out, "  delex:    {}", r.delex)?;
        writeln!(out, "system> {}", r.lex)?;
        systems.push(r.lex);
    }
    Ok(())
}
