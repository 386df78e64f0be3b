//! Command-line interface. `main` parses [`Cli`] and calls [`run`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bidaf::{build_examples, train, BidafConfig, BidafModel, Mode};
use crate::corpus::{load_collection, load_questions, preprocess_query, write_questions, Collection};
use crate::error::Error;
use crate::eval::{answer_collection, evaluate, AttentionQa, EvalOptions, QaModel, DEFAULT_THRESHOLD};
use crate::nn::AdadeltaConfig;
use crate::retriever::rank_collection;
use crate::synth::{generate, GeneratorSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phocqa", version, about = "Recognition-free question answering over PHOC-encoded document collections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Attention,
    BidafLine,
    BidafWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Line,
    Word,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Line => Mode::Line,
            ModeArg::Word => Mode::Word,
        }
    }
}

#[derive(Debug, Args)]
pub struct Source {
    #[arg(long)]
    pub collection: PathBuf,
    /// Fraction of PHOC entries flipped when the collection is loaded.
    #[arg(long, default_value_t = 0.0)]
    pub flip_rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelChoice {
    #[arg(long, value_enum, default_value_t = Backend::Attention)]
    pub backend: Backend,
    /// Required for the bidaf backends.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a collection file, and optionally a questions file against it.
    Validate {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Write a synthetic collection and question set.
    Generate {
        /// Directory receiving collection.json and questions.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        num_documents: usize,
        #[arg(long, default_value_t = 50)]
        num_questions: usize,
        #[arg(long, default_value_t = 5)]
        min_lines: usize,
        #[arg(long, default_value_t = 10)]
        max_lines: usize,
        #[arg(long, default_value_t = 5)]
        min_words: usize,
        #[arg(long, default_value_t = 10)]
        max_words: usize,
        #[arg(long, default_value_t = 2000)]
        vocabulary: usize,
        #[arg(long, default_value_t = 1)]
        min_markers: usize,
        #[arg(long, default_value_t = 3)]
        max_markers: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Rank the collection for a query; prints `rank doc_id score`.
    Retrieve {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Train a BiDAF model on gold documents and write a checkpoint.
    Train {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Line)]
        mode: ModeArg,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        /// Output checkpoint path.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional JSON file receiving the per-epoch mean loss.
        #[arg(long)]
        loss_trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 100)]
        hidden: usize,
        #[arg(long, default_value_t = 0.2)]
        dropout: f64,
    },
    /// Answer one question over the collection; prints the prediction as JSON.
    Answer {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        model: ModelChoice,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// End-to-end evaluation; writes the report and prints a summary line.
    Eval {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        model: ModelChoice,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        report: PathBuf,
    },
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_parent(path: &Path, what: &str) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Usage(format!(
            "directory for {what} {} does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

fn positive_k(k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    Ok(())
}

fn load_source(source: &Source) -> Result<Collection, CliError> {
    require_file(&source.collection, "collection")?;
    if !(0.0..=1.0).contains(&source.flip_rate) {
        return Err(CliError::Usage(format!("--flip-rate {} must lie in [0, 1]", source.flip_rate)));
    }
    let collection = load_collection(&source.collection)?;
    Ok(collection.with_corruption(source.flip_rate, source.seed)?)
}

fn load_model(choice: &ModelChoice) -> Result<Box<dyn QaModel>, CliError> {
    let mode = match choice.backend {
        Backend::Attention => return Ok(Box::new(AttentionQa)),
        Backend::BidafLine => Mode::Line,
        Backend::BidafWord => Mode::Word,
    };
    let path = choice
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Usage("the bidaf backends require --checkpoint".into()))?;
    require_file(path, "checkpoint")?;
    let model = BidafModel::load(path)?;
    if model.mode() != mode {
        return Err(CliError::Usage(format!(
            "checkpoint {} holds a {}-mode model, backend expects {}",
            path.display(),
            model.mode(),
            mode
        )));
    }
    Ok(Box::new(model))
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { collection, questions } => {
            require_file(&collection, "collection")?;
            if let Some(q) = &questions {
                require_file(q, "questions")?;
            }
            let c = load_collection(&collection)?;
            let words: usize = c.documents().iter().map(|d| d.num_words()).sum();
            writeln!(out, "ok: {} documents, {} words", c.len(), words)?;
            if let Some(q) = questions {
                let qs = load_questions(&q, &c)?;
                writeln!(out, "ok: {} questions", qs.len())?;
            }
        }
        Command::Generate {
            out_dir,
            num_documents,
            num_questions,
            min_lines,
            max_lines,
            min_words,
            max_words,
            vocabulary,
            min_markers,
            max_markers,
            seed,
        } => {
            if !out_dir.is_dir() {
                return Err(CliError::Usage(format!("output directory {} does not exist", out_dir.display())));
            }
            let spec = GeneratorSpec {
                num_documents,
                num_questions,
                lines_per_document: (min_lines, max_lines),
                words_per_line: (min_words, max_words),
                vocabulary_size: vocabulary,
                markers_per_question: (min_markers, max_markers),
                seed,
            };
            spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let data = generate(&spec)?;
            data.collection.write(out_dir.join("collection.json"))?;
            write_questions(out_dir.join("questions.json"), &data.questions)?;
            let unique = data.unique.iter().filter(|&&u| u).count();
            writeln!(
                out,
                "wrote {} documents and {} questions ({} with unique markers) to {}",
                data.collection.len(),
                data.questions.len(),
                unique,
                out_dir.display()
            )?;
        }
        Command::Retrieve { source, query, k } => {
            positive_k(k)?;
            let collection = load_source(&source)?;
            let query = preprocess_query(&query)?;
            for r in rank_collection(&collection, &query.phocs, k)? {
                writeln!(out, "{} {} {:.6}", r.rank, r.doc_id, r.score)?;
            }
        }
        Command::Train {
            source,
            questions,
            mode,
            epochs,
            checkpoint,
            loss_trace,
            learning_rate,
            hidden,
            dropout,
        } => {
            require_file(&questions, "questions")?;
            require_parent(&checkpoint, "checkpoint")?;
            if let Some(p) = &loss_trace {
                require_parent(p, "loss trace")?;
            }
            let config = BidafConfig {
                hidden,
                dropout_rate: dropout,
                optimizer: AdadeltaConfig {
                    learning_rate,
                    ..AdadeltaConfig::default()
                },
                ..BidafConfig::new(mode.into())
            };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let collection = load_source(&source)?;
            let qs = load_questions(&questions, &collection)?;
            let examples = build_examples(&collection, &qs, config.mode)?;
            let mut model = BidafModel::new(config, source.seed)?;
            let trace = train(&mut model, &examples, epochs, source.seed)?;
            for (epoch, loss) in trace.iter().enumerate() {
                writeln!(out, "epoch {} loss {:.6}", epoch + 1, loss)?;
            }
            model.save(&checkpoint)?;
            if let Some(p) = loss_trace {
                let json = serde_json::to_string_pretty(&trace).expect("loss trace serializes");
                std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
            }
        }
        Command::Answer { source, model, query, k } => {
            positive_k(k)?;
            let qa = load_model(&model)?;
            let collection = load_source(&source)?;
            let query = preprocess_query(&query)?;
            let prediction = answer_collection(&collection, &query, qa.as_ref(), k)?;
            let json = serde_json::to_string(&prediction).expect("prediction serializes");
            writeln!(out, "{json}")?;
        }
        Command::Eval {
            source,
            model,
            questions,
            k,
            report,
        } => {
            positive_k(k)?;
            require_file(&questions, "questions")?;
            require_parent(&report, "report")?;
            let qa = load_model(&model)?;
            let collection = load_source(&source)?;
            let qs = load_questions(&questions, &collection)?;
            let options = EvalOptions {
                k,
                threshold: DEFAULT_THRESHOLD,
                seed: source.seed,
                flip_rate: source.flip_rate,
            };
            let result = evaluate(&collection, &qs, qa.as_ref(), options)?;
            result.write(&report)?;
            let s = &result.summary;
            writeln!(
                out,
                "questions {} accuracy {:.4} mean_dis {:.4} top5 {:.4}",
                result.per_question.len(),
                s.accuracy,
                s.mean_dis,
                s.top5
            )?;
        }
    }
    Ok(())
}
