//! Command-line front end. Every stage of the experiment is a subcommand;
//! `pipeline` chains them all into one output directory.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 when a stage
//! fails (the message names the stage).

use clap::{Parser, Subcommand};
use relist::annotator::{annotate_corpus, load_annotated, save_annotated};
use relist::config::ExperimentConfig;
use relist::corpus::{load_corpus, save_corpus, synthesize_corpus};
use relist::em::{load_model, save_model, train, train_flat, train_single_lm, AnyModel};
use relist::eval::analysis::Stopwords;
use relist::eval::evaluate;
use relist::eval::pcls::{train_polarity_classifier, ClassifierConfig};
use relist::generator::{
    generate_batch, load_generated, save_generated, GenMode, GenerationRequest,
};
use relist::lexicon::SentimentLexicon;
use relist::pipeline::run_pipeline;
use relist::report::{
    compare_reports, load_report, render_comparison, render_report, save_report, transitions_csv,
    EvalReport,
};
use relist::seeds::{derive_indexed_seed, derive_seed};
use std::path::PathBuf;
use std::process::ExitCode;

// Stdout writers that ignore a closed pipe, so piping through `head` does
// not crash the run.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}
macro_rules! out_raw {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "relist", version, about = "Relationship-conditioned story generation")]
struct Cli {
    /// Experiment configuration file; the bundled default applies when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override (the RELIST_SEED variable overrides the file,
    /// this flag overrides both).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a gold corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured corpus size.
        #[arg(long)]
        num_stories: Option<usize>,
    },
    /// Annotate a gold corpus with silver relationships and split it.
    Annotate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        /// Also write aggregate annotation statistics as JSON.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Train the latent model; optionally the baselines alongside.
    Train {
        /// Annotated training split.
        #[arg(long)]
        train: PathBuf,
        /// Final latent model destination.
        #[arg(long)]
        model_out: PathBuf,
        /// Initialization checkpoint destination.
        #[arg(long)]
        initial_out: Option<PathBuf>,
        /// Shared single language model baseline destination.
        #[arg(long)]
        single_lm_out: Option<PathBuf>,
        /// Flat conditional baseline destination.
        #[arg(long)]
        flat_out: Option<PathBuf>,
        /// Cycle-by-cycle training report destination.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Generate one story per reference, conditioned on its relationships.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Annotated references providing prompts, casts, and relationships.
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        mode: GenMode,
        /// Seed-stream label; defaults to the mode name.
        #[arg(long)]
        lane: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated stories against their references.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Annotated training split; fits the polarity probe.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a stored report; optionally write its transition matrix as CSV.
    Analyze {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Compare two reports produced over the same references.
    Compare {
        #[arg(long)]
        report_a: PathBuf,
        #[arg(long)]
        report_b: PathBuf,
    },
    /// Run every stage into one output directory.
    Pipeline {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum CliError {
    Config(String),
    Stage { stage: &'static str, message: String },
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn stage_err(stage: &'static str) -> impl FnOnce(&dyn std::fmt::Display) -> CliError {
    move |e| CliError::Stage { stage, message: e.to_string() }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(config_err)?,
        None => ExperimentConfig::bundled(),
    };
    cfg.apply_env_seed().map_err(config_err)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let lexicon = SentimentLexicon::bundled();
    match cli.command {
        Command::Synth { out, num_stories } => {
            let mut synth_cfg = cfg.synth_config();
            if let Some(n) = num_stories {
                synth_cfg.num_stories = n;
            }
            synth_cfg.validate().map_err(config_err)?;
            let stories =
                synthesize_corpus(&synth_cfg, &lexicon).map_err(|e| stage_err("synth")(&e))?;
            save_corpus(&out, &stories).map_err(|e| stage_err("synth")(&e))?;
            out!("synth: wrote {} stories to {}", stories.len(), out.display());
        }
        Command::Annotate { corpus, train_out, test_out, stats_out } => {
            let gold = load_corpus(&corpus).map_err(|e| stage_err("annotate")(&e))?;
            let (annotated, stats) =
                annotate_corpus(&gold, &lexicon).map_err(|e| stage_err("annotate")(&e))?;
            let (train_set, test_set) = relist::pipeline::split_annotated(annotated, &cfg)
                .map_err(|e| stage_err("annotate")(&e))?;
            save_annotated(&train_out, &train_set).map_err(|e| stage_err("annotate")(&e))?;
            save_annotated(&test_out, &test_set).map_err(|e| stage_err("annotate")(&e))?;
            if let Some(path) = stats_out {
                let json = serde_json::to_string_pretty(&stats)
                    .map_err(|e| stage_err("annotate")(&e))?
                    + "\n";
                std::fs::write(&path, json).map_err(|e| stage_err("annotate")(&e))?;
            }
            out_raw!("{stats}");
            out!(
                "annotate: {} train / {} test",
                train_set.len(),
                test_set.len()
            );
        }
        Command::Train { train: train_path, model_out, initial_out, single_lm_out, flat_out, report_out } => {
            let train_set =
                load_annotated(&train_path).map_err(|e| stage_err("train")(&e))?;
            let em_cfg = cfg.em_config();
            let outcome = train(&train_set, &em_cfg).map_err(|e| stage_err("train")(&e))?;
            save_model(&model_out, &AnyModel::ReList(outcome.final_model.clone()))
                .map_err(|e| stage_err("train")(&e))?;
            if let Some(path) = initial_out {
                save_model(&path, &AnyModel::ReList(outcome.initial.clone()))
                    .map_err(|e| stage_err("train")(&e))?;
            }
            if let Some(path) = single_lm_out {
                let model =
                    train_single_lm(&train_set, &em_cfg).map_err(|e| stage_err("train")(&e))?;
                save_model(&path, &AnyModel::SingleLm(model))
                    .map_err(|e| stage_err("train")(&e))?;
            }
            if let Some(path) = flat_out {
                let model =
                    train_flat(&train_set, &em_cfg).map_err(|e| stage_err("train")(&e))?;
                save_model(&path, &AnyModel::Flat(model)).map_err(|e| stage_err("train")(&e))?;
            }
            if let Some(path) = report_out {
                let json = serde_json::to_string_pretty(&outcome.report)
                    .map_err(|e| stage_err("train")(&e))?
                    + "\n";
                std::fs::write(&path, json).map_err(|e| stage_err("train")(&e))?;
            }
            for cycle in &outcome.report.cycles {
                out!(
                    "cycle {}: log likelihood {:.4}, {} reassignments",
                    cycle.cycle, cycle.log_likelihood, cycle.assignment_changes
                );
            }
            out!("train: wrote {}", model_out.display());
        }
        Command::Generate { model, references, mode, lane, out } => {
            let model = load_model(&model).map_err(|e| stage_err("generate")(&e))?;
            let refs = load_annotated(&references).map_err(|e| stage_err("generate")(&e))?;
            let lane = lane.unwrap_or_else(|| mode.as_str().to_string());
            let base = derive_seed(cfg.seed, &format!("generate-{lane}"));
            let requests: Vec<GenerationRequest> = refs
                .iter()
                .enumerate()
                .map(|(i, story)| {
                    let mut req = GenerationRequest::new(
                        story.story.prompt.clone(),
                        story.silver.relationships.clone(),
                        story.story.characters.clone(),
                        derive_indexed_seed(base, i as u64),
                        mode,
                    );
                    req.max_sentences = cfg.generation.max_sentences;
                    req.max_sentence_tokens = cfg.generation.max_sentence_tokens;
                    req
                })
                .collect();
            let generated =
                generate_batch(&model, &requests).map_err(|e| stage_err("generate")(&e))?;
            save_generated(&out, &generated).map_err(|e| stage_err("generate")(&e))?;
            out!("generate: wrote {} stories to {}", generated.len(), out.display());
        }
        Command::Eval { generated, references, train: train_path, out } => {
            let generated = load_generated(&generated).map_err(|e| stage_err("eval")(&e))?;
            let refs = load_annotated(&references).map_err(|e| stage_err("eval")(&e))?;
            let train_set = load_annotated(&train_path).map_err(|e| stage_err("eval")(&e))?;
            let classifier = train_polarity_classifier(&train_set, &ClassifierConfig::default())
                .map_err(|e| stage_err("eval")(&e))?;
            let stopwords = Stopwords::bundled();
            let summary = evaluate(&generated, &refs, &classifier, &lexicon, &stopwords)
                .map_err(|e| stage_err("eval")(&e))?;
            let report = EvalReport::from(&summary);
            save_report(&out, &report).map_err(|e| stage_err("eval")(&e))?;
            out_raw!("{}", render_report(&report));
            out!("eval: wrote {}", out.display());
        }
        Command::Analyze { report, csv_out } => {
            let report = load_report(&report).map_err(|e| stage_err("analyze")(&e))?;
            out_raw!("{}", render_report(&report));
            if let Some(path) = csv_out {
                std::fs::write(&path, transitions_csv(&report.transitions))
                    .map_err(|e| stage_err("analyze")(&e))?;
                out!("analyze: wrote {}", path.display());
            }
        }
        Command::Compare { report_a, report_b } => {
            let a = load_report(&report_a).map_err(|e| stage_err("compare")(&e))?;
            let b = load_report(&report_b).map_err(|e| stage_err("compare")(&e))?;
            let cmp = compare_reports(&a, &b).map_err(|e| stage_err("compare")(&e))?;
            out_raw!("{}", render_comparison(&cmp));
        }
        Command::Pipeline { out_dir } => {
            let outcome = run_pipeline(&cfg, &out_dir, |line| out!("{line}"))
                .map_err(|e| CliError::Stage { stage: e.stage, message: e.source.to_string() })?;
            out!("pipeline: artifacts in {}", outcome.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Stage { stage, message }) => {
            eprintln!("stage {stage} failed: {message}");
            ExitCode::from(3)
        }
    }
}
