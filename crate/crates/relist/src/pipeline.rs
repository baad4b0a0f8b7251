//! End-to-end experiment pipeline: synthesize a corpus, annotate it, split
//! it, train the latent model and both baselines, generate stories down five
//! lanes, evaluate each lane against the held-out references, and compare.
//! Every artifact lands in one output directory; rerunning with the same
//! configuration reproduces every file byte for byte.

use crate::annotator::{annotate_corpus, save_annotated, AnnotatedStory, CorpusStats};
use crate::config::ExperimentConfig;
use crate::corpus::{save_corpus, split_indices, synthesize_corpus};
use crate::em::{save_model, train, train_flat, train_single_lm, AnyModel, TrainReport};
use crate::eval::analysis::Stopwords;
use crate::eval::pcls::{train_polarity_classifier, ClassifierConfig};
use crate::eval::evaluate;
use crate::generator::{generate_batch, save_generated, GenMode, GenerationRequest};
use crate::lexicon::SentimentLexicon;
use crate::report::{compare_reports, render_comparison, save_report, EvalReport};
use crate::seeds::derive_indexed_seed;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRAIN_SPLIT_FILE: &str = "annotated_train.jsonl";
pub const TEST_SPLIT_FILE: &str = "annotated_test.jsonl";
pub const STATS_FILE: &str = "annotation_stats.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const COMPARISONS_FILE: &str = "comparisons.txt";

/// One generation configuration: which model checkpoint and which mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Lane {
    /// Final latent model, selector-driven.
    ReList,
    /// Initialization checkpoint of the latent model, selector-driven.
    ReList0,
    /// Final latent model, uniform random latent choice.
    RandSelect,
    /// Shared single language model baseline.
    SingleLm,
    /// Flat conditional baseline without latent structure.
    Flat,
}

impl Lane {
    pub const ALL: [Lane; 5] =
        [Lane::ReList, Lane::ReList0, Lane::RandSelect, Lane::SingleLm, Lane::Flat];

    pub fn as_str(self) -> &'static str {
        match self {
            Lane::ReList => "relist",
            Lane::ReList0 => "relist0",
            Lane::RandSelect => "rand_select",
            Lane::SingleLm => "single_lm",
            Lane::Flat => "flat",
        }
    }

    pub fn mode(self) -> GenMode {
        match self {
            Lane::ReList | Lane::ReList0 => GenMode::ReList,
            Lane::RandSelect => GenMode::RandSelect,
            Lane::SingleLm => GenMode::SingleLm,
            Lane::Flat => GenMode::Flat,
        }
    }
}

impl std::fmt::Display for Lane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn model_file(lane: Lane) -> String {
    format!("model_{}.json", lane.as_str())
}

pub fn generated_file(lane: Lane) -> String {
    format!("generated_{}.jsonl", lane.as_str())
}

pub fn report_file(lane: Lane) -> String {
    format!("report_{}.json", lane.as_str())
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

fn stage<E: Into<anyhow::Error>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, source: e.into() }
}

/// Everything the pipeline produced, for callers that want to print a
/// summary without re-reading the artifact files.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub stats: CorpusStats,
    pub train_report: TrainReport,
    pub test_stories: usize,
    pub reports: BTreeMap<String, EvalReport>,
}

/// Runs every stage, invoking `progress` with one line per completed step.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate().map_err(stage("config"))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError { stage: "setup", source: anyhow::Error::new(e) })?;
    let lexicon = SentimentLexicon::bundled();
    let stopwords = Stopwords::bundled();

    // Synthesis.
    let synth_cfg = cfg.synth_config();
    let gold = synthesize_corpus(&synth_cfg, &lexicon).map_err(stage("synth"))?;
    save_corpus(&out_dir.join(CORPUS_FILE), &gold).map_err(stage("synth"))?;
    progress(&format!("synth: {} stories -> {CORPUS_FILE}", gold.len()));

    // Annotation and split.
    let (annotated, stats) = annotate_corpus(&gold, &lexicon).map_err(stage("annotate"))?;
    let stats_json =
        serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    std::fs::write(out_dir.join(STATS_FILE), stats_json)
        .map_err(|e| PipelineError { stage: "annotate", source: anyhow::Error::new(e) })?;
    let split = split_annotated(annotated, cfg).map_err(stage("annotate"))?;
    save_annotated(&out_dir.join(TRAIN_SPLIT_FILE), &split.0).map_err(stage("annotate"))?;
    save_annotated(&out_dir.join(TEST_SPLIT_FILE), &split.1).map_err(stage("annotate"))?;
    let (train_set, test_set) = split;
    progress(&format!(
        "annotate: kept {} of {} stories, split {} train / {} test",
        stats.stories_kept,
        stats.stories_in,
        train_set.len(),
        test_set.len()
    ));

    // Training: latent model with EM, both baselines, and the polarity probe.
    let em_cfg = cfg.em_config();
    let outcome = train(&train_set, &em_cfg).map_err(stage("train"))?;
    let single = train_single_lm(&train_set, &em_cfg).map_err(stage("train"))?;
    let flat = train_flat(&train_set, &em_cfg).map_err(stage("train"))?;
    let classifier = train_polarity_classifier(&train_set, &ClassifierConfig::default())
        .map_err(stage("train"))?;
    let models: BTreeMap<Lane, AnyModel> = [
        (Lane::ReList, AnyModel::ReList(outcome.final_model.clone())),
        (Lane::ReList0, AnyModel::ReList(outcome.initial.clone())),
        (Lane::SingleLm, AnyModel::SingleLm(single)),
        (Lane::Flat, AnyModel::Flat(flat)),
    ]
    .into_iter()
    .collect();
    for (lane, model) in &models {
        save_model(&out_dir.join(model_file(*lane)), model).map_err(stage("train"))?;
    }
    let report_json =
        serde_json::to_string_pretty(&outcome.report).expect("train report serialize") + "\n";
    std::fs::write(out_dir.join(TRAIN_REPORT_FILE), report_json)
        .map_err(|e| PipelineError { stage: "train", source: anyhow::Error::new(e) })?;
    let last_ll = outcome
        .report
        .cycles
        .last()
        .map(|c| c.log_likelihood)
        .unwrap_or(outcome.report.initial_log_likelihood);
    progress(&format!(
        "train: {} cycles, log likelihood {:.2} -> {:.2}",
        outcome.report.cycles.len(),
        outcome.report.initial_log_likelihood,
        last_ll
    ));

    // Generation and evaluation, one lane at a time.
    let mut reports: BTreeMap<String, EvalReport> = BTreeMap::new();
    for lane in Lane::ALL {
        let model = match lane {
            Lane::RandSelect => &models[&Lane::ReList],
            other => &models[&other],
        };
        let base = cfg.lane_seed(lane.as_str());
        let requests: Vec<GenerationRequest> = test_set
            .iter()
            .enumerate()
            .map(|(i, story)| {
                let mut req = GenerationRequest::new(
                    story.story.prompt.clone(),
                    story.silver.relationships.clone(),
                    story.story.characters.clone(),
                    derive_indexed_seed(base, i as u64),
                    lane.mode(),
                );
                req.max_sentences = cfg.generation.max_sentences;
                req.max_sentence_tokens = cfg.generation.max_sentence_tokens;
                req
            })
            .collect();
        let generated = generate_batch(model, &requests).map_err(stage("generate"))?;
        save_generated(&out_dir.join(generated_file(lane)), &generated)
            .map_err(stage("generate"))?;
        let summary = evaluate(&generated, &test_set, &classifier, &lexicon, &stopwords)
            .map_err(stage("eval"))?;
        let report = EvalReport::from(&summary);
        save_report(&out_dir.join(report_file(lane)), &report).map_err(stage("eval"))?;
        progress(&format!(
            "lane {lane}: exact {:.1}% / incorrect {:.1}%, bleu {:.3}",
            report.pct_exact, report.pct_incorrect, report.bleu
        ));
        reports.insert(lane.as_str().to_string(), report);
    }

    // Pairwise comparisons against the latent lane. Lanes are labeled by
    // name, not mode: two lanes can share a mode.
    let mut comparisons = String::new();
    let main = &reports[Lane::ReList.as_str()];
    for lane in [Lane::ReList0, Lane::RandSelect, Lane::SingleLm, Lane::Flat] {
        let cmp = compare_reports(main, &reports[lane.as_str()]).map_err(stage("compare"))?;
        comparisons.push_str(&format!("== {} vs {} ==\n", Lane::ReList, lane));
        comparisons.push_str(&render_comparison(&cmp));
        comparisons.push('\n');
    }
    std::fs::write(out_dir.join(COMPARISONS_FILE), &comparisons)
        .map_err(|e| PipelineError { stage: "compare", source: anyhow::Error::new(e) })?;
    progress(&format!("compare: 4 pairings -> {COMPARISONS_FILE}"));

    Ok(PipelineOutcome {
        out_dir: out_dir.to_path_buf(),
        stats,
        train_report: outcome.report,
        test_stories: test_set.len(),
        reports,
    })
}

/// Seeded train/test split of annotated stories, driven by the configured
/// fraction and split seed.
pub fn split_annotated(
    annotated: Vec<AnnotatedStory>,
    cfg: &ExperimentConfig,
) -> Result<(Vec<AnnotatedStory>, Vec<AnnotatedStory>), crate::corpus::CorpusError> {
    let mask = split_indices(annotated.len(), cfg.synthesis.test_fraction, cfg.split_seed())?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, story) in annotated.into_iter().enumerate() {
        if mask[i] {
            test.push(story);
        } else {
            train.push(story);
        }
    }
    Ok((train, test))
}
