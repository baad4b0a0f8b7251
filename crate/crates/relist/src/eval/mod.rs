//! Automatic evaluation of generated stories against held-out references:
//! relationship identification, the polarity probe, surface overlap and
//! diversity, and trace structure analyses, all gathered into one summary.
//!
//! Generated stories and references must align index by index: same prompt,
//! same requested relationship set. The summary holds both corpus-level
//! aggregates and the per-story values that paired significance tests need.

pub mod analysis;
pub mod content;
pub mod pcls;
pub mod ri;

use crate::annotator::AnnotatedStory;
use crate::generator::{GenMode, GeneratedStory};
use crate::lexicon::SentimentLexicon;
use analysis::{
    position_distribution, top_ngrams, transition_matrix, PositionReport, Stopwords, TopNgrams,
    TransitionReport,
};
use content::{bleu, distinct_summary, rouge1_f, rouge_l_f, DistinctSummary};
use pcls::{evaluate_pcls, PclsReport, PolarityClassifier};
use ri::{classify_identification, identify_relationships, ri_metrics, RiOutcome, RiReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entries kept per polarity and n-gram order in the summary.
pub const TOP_NGRAMS_PER_CLASS: usize = 5;

/// Highest distinct-n order the summary reports.
pub const DISTINCT_MAX_ORDER: usize = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no stories to evaluate")]
    Empty,
    #[error("generated batch has {generated} stories but {references} references")]
    LengthMismatch { generated: usize, references: usize },
    #[error("story {index}: generated prompt does not match its reference")]
    PromptMismatch { index: usize },
    #[error("story {index}: generated relationships do not match the reference silver set")]
    RelationshipMismatch { index: usize },
    #[error("story {index}: mode {found} differs from the batch mode {expected}")]
    MixedModes { index: usize, found: GenMode, expected: GenMode },
}

/// Per-story values underlying the aggregates; one entry per evaluated story
/// in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStoryEval {
    pub bleu: f64,
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
    pub ri: RiOutcome,
    pub identified: usize,
}

/// Everything the evaluation measures for one generated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: GenMode,
    pub stories: usize,
    pub ri: RiReport,
    pub pcls: PclsReport,
    pub bleu: f64,
    pub rouge1_f: f64,
    pub rouge_l_f: f64,
    /// Index d holds distinct-(d+1).
    pub distinct: [DistinctSummary; DISTINCT_MAX_ORDER],
    pub transitions: TransitionReport,
    pub positions: PositionReport,
    pub top_ngrams: TopNgrams,
    pub per_story: Vec<PerStoryEval>,
}

/// Evaluates a generated batch against its aligned references.
pub fn evaluate(
    generated: &[GeneratedStory],
    references: &[AnnotatedStory],
    classifier: &PolarityClassifier,
    lexicon: &SentimentLexicon,
    stopwords: &Stopwords,
) -> Result<EvalSummary, EvalError> {
    if generated.is_empty() {
        return Err(EvalError::Empty);
    }
    if generated.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            generated: generated.len(),
            references: references.len(),
        });
    }
    let mode = generated[0].mode;
    let mut per_story = Vec::with_capacity(generated.len());
    let mut outcomes = Vec::with_capacity(generated.len());
    let mut bodies = Vec::with_capacity(generated.len());
    for (index, (story, reference)) in generated.iter().zip(references).enumerate() {
        if story.mode != mode {
            return Err(EvalError::MixedModes { index, found: story.mode, expected: mode });
        }
        if story.story.prompt != reference.story.prompt {
            return Err(EvalError::PromptMismatch { index });
        }
        if story.relationships != reference.silver.relationships {
            return Err(EvalError::RelationshipMismatch { index });
        }
        let candidate = story.story.body_tokens();
        let reference_body = reference.story.body_tokens();
        let identified = identify_relationships(&story.story, lexicon);
        let ri = classify_identification(&story.relationships, &identified);
        outcomes.push((ri, identified.len()));
        per_story.push(PerStoryEval {
            bleu: bleu(&candidate, &reference_body),
            rouge1_f: rouge1_f(&candidate, &reference_body),
            rouge_l_f: rouge_l_f(&candidate, &reference_body),
            ri,
            identified: identified.len(),
        });
        bodies.push(candidate);
    }
    let n = per_story.len() as f64;
    let mean = |f: fn(&PerStoryEval) -> f64| per_story.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        mode,
        stories: per_story.len(),
        ri: ri_metrics(&outcomes),
        pcls: evaluate_pcls(classifier, generated),
        bleu: mean(|s| s.bleu),
        rouge1_f: mean(|s| s.rouge1_f),
        rouge_l_f: mean(|s| s.rouge_l_f),
        distinct: [1, 2, 3].map(|d| distinct_summary(&bodies, d)),
        transitions: transition_matrix(generated),
        positions: position_distribution(generated),
        top_ngrams: top_ngrams(generated, stopwords, TOP_NGRAMS_PER_CLASS),
        per_story,
    })
}
