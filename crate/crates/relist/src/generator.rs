//! Sentence-by-sentence story generation from trained models.
//!
//! Every sentence is produced in two moves: pick a latent value for the
//! sentence, then sample tokens from the language model that latent selects.
//! A relationship latent conditions the draw through its polarity prefix
//! token and puts the pair names back behind the placeholders; a null draw
//! fills each distinct placeholder with a uniformly drawn cast name. The
//! latent choices are returned alongside the story as its trace. A story
//! ends when a sentence opens with the end-of-story token (only reachable
//! from the null latent, or anywhere under the flat baseline) or when the
//! sentence cap is reached.
//!
//! Sentences produced under a relationship latent must mention both pair
//! members; draws that miss one are rejected and resampled a bounded number
//! of times, after which the missing placeholders are appended.
//!
//! Generation is deterministic: each request carries its own seed and runs
//! its own random stream, so batch output is independent of thread schedule.

use crate::em::{draw_categorical, AnyModel, FlatModel};
use crate::models::delex::relexicalize;
use crate::models::ngram::{NGramLM, SamplePolicy};
use crate::models::selector::{all_candidate_features, SelectorModel};
use crate::models::vocab::{char_placeholder_rank, Vocabulary, CHAR1_ID, CHAR2_ID, EOS_STORY_ID};
use crate::models::{Conditioning, ModelError, PrefixSpec};
use crate::types::{Context, LatentTrace, LatentValue, RelationshipSet, Sentence, Story};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const GENERATED_FORMAT: &str = "relist-generated-v1";

pub const DEFAULT_MAX_SENTENCES: usize = 20;
pub const DEFAULT_MAX_SENTENCE_TOKENS: usize = 30;

/// Rejection budget for relationship sentences that fail to mention both
/// pair members before placeholders are appended.
const PAIR_MENTION_RETRIES: usize = 64;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("mode {mode} needs a {needs} model, got a {got} one")]
    ModeMismatch { mode: GenMode, needs: &'static str, got: &'static str },
    #[error("invalid generation request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path} line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How sentences and latents are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenMode {
    /// Latents drawn from the trained selector, sentences from the matching
    /// per-latent language model.
    #[serde(rename = "relist")]
    ReList,
    /// Latents drawn uniformly over the candidates, language models as in
    /// [`GenMode::ReList`]. Isolates what the selector contributes.
    #[serde(rename = "rand_select")]
    RandSelect,
    /// Latents from the selector, one shared language model for every
    /// latent. Isolates what the per-latent model split contributes.
    #[serde(rename = "single_lm")]
    SingleLm,
    /// No latents: one model conditioned on the serialized relationship
    /// block, trace all null.
    #[serde(rename = "flat")]
    Flat,
}

impl GenMode {
    pub const ALL: [GenMode; 4] = [GenMode::ReList, GenMode::RandSelect, GenMode::SingleLm, GenMode::Flat];

    pub fn as_str(self) -> &'static str {
        match self {
            GenMode::ReList => "relist",
            GenMode::RandSelect => "rand_select",
            GenMode::SingleLm => "single_lm",
            GenMode::Flat => "flat",
        }
    }
}

impl fmt::Display for GenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "relist" => Ok(GenMode::ReList),
            "rand_select" => Ok(GenMode::RandSelect),
            "single_lm" => Ok(GenMode::SingleLm),
            "flat" => Ok(GenMode::Flat),
            other => Err(format!(
                "unknown generation mode {other:?}, want relist, rand_select, single_lm, or flat"
            )),
        }
    }
}

/// Why generation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The model produced the end-of-story token.
    EosStory,
    /// The sentence cap was reached first.
    MaxSentences,
}

/// One story to generate: the conditioning inputs, the mode, and the seed of
/// the request's private random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: Sentence,
    pub relationships: RelationshipSet,
    /// Character inventory; may include prompt characters outside the
    /// relationship set.
    pub characters: Vec<String>,
    pub seed: u64,
    #[serde(default = "default_max_sentences")]
    pub max_sentences: usize,
    #[serde(default = "default_max_sentence_tokens")]
    pub max_sentence_tokens: usize,
    pub mode: GenMode,
}

fn default_max_sentences() -> usize {
    DEFAULT_MAX_SENTENCES
}

fn default_max_sentence_tokens() -> usize {
    DEFAULT_MAX_SENTENCE_TOKENS
}

impl GenerationRequest {
    pub fn new(
        prompt: Sentence,
        relationships: RelationshipSet,
        characters: Vec<String>,
        seed: u64,
        mode: GenMode,
    ) -> Self {
        GenerationRequest {
            prompt,
            relationships,
            characters,
            seed,
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_sentence_tokens: DEFAULT_MAX_SENTENCE_TOKENS,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.characters.is_empty() {
            return Err(GeneratorError::BadRequest("character inventory is empty".into()));
        }
        if self.max_sentences == 0 {
            return Err(GeneratorError::BadRequest("max_sentences must be at least 1".into()));
        }
        if self.max_sentence_tokens == 0 {
            return Err(GeneratorError::BadRequest("max_sentence_tokens must be at least 1".into()));
        }
        for name in self.relationships.characters() {
            if !self.characters.contains(&name) {
                return Err(GeneratorError::BadRequest(format!(
                    "relationship character {name:?} missing from the inventory"
                )));
            }
        }
        Ok(())
    }
}

/// A generated story with the latent decisions that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedStory {
    pub mode: GenMode,
    pub seed: u64,
    pub relationships: RelationshipSet,
    pub story: Story,
    pub trace: LatentTrace,
    pub termination: Termination,
}

impl GeneratedStory {
    pub fn validate(&self) -> Result<(), String> {
        self.trace
            .validate(self.story.sentences.len(), self.relationships.len())
            .map_err(|e| e.to_string())?;
        for name in self.relationships.characters() {
            if !self.story.characters.contains(&name) {
                return Err(format!("relationship character {name:?} missing from the story"));
            }
        }
        Ok(())
    }
}

fn model_kind(model: &AnyModel) -> &'static str {
    match model {
        AnyModel::ReList(_) => "relist",
        AnyModel::SingleLm(_) => "single_lm",
        AnyModel::Flat(_) => "flat",
    }
}

fn needed_kind(mode: GenMode) -> &'static str {
    match mode {
        GenMode::ReList | GenMode::RandSelect => "relist",
        GenMode::SingleLm => "single_lm",
        GenMode::Flat => "flat",
    }
}

/// Generates one story. The model kind must match the request mode: relist
/// and rand_select run on the two-model bundle, single_lm and flat on their
/// own baselines.
pub fn generate(model: &AnyModel, request: &GenerationRequest) -> Result<GeneratedStory, GeneratorError> {
    request.validate()?;
    match (model, request.mode) {
        (AnyModel::ReList(m), GenMode::ReList) => {
            two_model_generate(&m.vocab, &m.rel_lm, &m.null_lm, Selection::Selector(&m.selector), request)
        }
        (AnyModel::ReList(m), GenMode::RandSelect) => {
            two_model_generate(&m.vocab, &m.rel_lm, &m.null_lm, Selection::Uniform, request)
        }
        (AnyModel::SingleLm(m), GenMode::SingleLm) => {
            two_model_generate(&m.vocab, &m.lm, &m.lm, Selection::Selector(&m.selector), request)
        }
        (AnyModel::Flat(m), GenMode::Flat) => flat_generate(m, request),
        (model, mode) => Err(GeneratorError::ModeMismatch {
            mode,
            needs: needed_kind(mode),
            got: model_kind(model),
        }),
    }
}

/// Generates every request, in order. Each request's output depends only on
/// its own seed, so the parallel run matches a serial one.
pub fn generate_batch(
    model: &AnyModel,
    requests: &[GenerationRequest],
) -> Result<Vec<GeneratedStory>, GeneratorError> {
    requests.par_iter().map(|r| generate(model, r)).collect()
}

enum Selection<'a> {
    Selector(&'a SelectorModel),
    Uniform,
}

fn two_model_generate(
    vocab: &Vocabulary,
    rel_lm: &NGramLM,
    null_lm: &NGramLM,
    selection: Selection<'_>,
    request: &GenerationRequest,
) -> Result<GeneratedStory, GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut trace: Vec<LatentValue> = Vec::new();
    let mut termination = Termination::MaxSentences;
    let k = request.relationships.len();
    while sentences.len() < request.max_sentences {
        let context = Context::new(&request.prompt, &sentences, &request.characters);
        let candidate = match &selection {
            Selection::Selector(sel) => {
                let features = all_candidate_features(&request.relationships, &context);
                draw_categorical(&mut rng, &sel.distribution(&features))
            }
            Selection::Uniform => rng.gen_range(0..=k),
        };
        let latent = LatentValue::from_candidate_index(candidate);
        let spec = Conditioning::new(&request.relationships, context, latent).two_model_spec();
        let lm = if candidate == 0 { null_lm } else { rel_lm };
        let ids = draw_sentence(
            lm,
            vocab,
            &mut rng,
            &spec,
            candidate == 0,
            candidate != 0,
            request.max_sentence_tokens,
        )?;
        if ids == [EOS_STORY_ID] {
            termination = Termination::EosStory;
            break;
        }
        let raw = vocab.tokens_for(&ids);
        let tokens = match latent {
            LatentValue::Null => relex_sampled(&raw, &request.characters, &mut rng),
            LatentValue::Rel(_) => relexicalize(&raw, &spec.names),
        };
        push_sentence(&mut sentences, &mut trace, tokens, latent);
    }
    finish(request, sentences, trace, termination)
}

fn flat_generate(model: &FlatModel, request: &GenerationRequest) -> Result<GeneratedStory, GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut trace: Vec<LatentValue> = Vec::new();
    let mut termination = Termination::MaxSentences;
    while sentences.len() < request.max_sentences {
        let context = Context::new(&request.prompt, &sentences, &request.characters);
        let spec = Conditioning::new(&request.relationships, context, LatentValue::Null).flat_spec();
        let ids = draw_sentence(
            &model.lm,
            &model.vocab,
            &mut rng,
            &spec,
            true,
            false,
            request.max_sentence_tokens,
        )?;
        if ids == [EOS_STORY_ID] {
            termination = Termination::EosStory;
            break;
        }
        let tokens = relexicalize(&model.vocab.tokens_for(&ids), &spec.names);
        push_sentence(&mut sentences, &mut trace, tokens, LatentValue::Null);
    }
    finish(request, sentences, trace, termination)
}

/// Samples one sentence; when `require_pair` is set, rejects draws that miss
/// either pair placeholder and appends missing placeholders once the retry
/// budget is spent.
fn draw_sentence<R: Rng>(
    lm: &NGramLM,
    vocab: &Vocabulary,
    rng: &mut R,
    spec: &PrefixSpec,
    allow_eos_story: bool,
    require_pair: bool,
    max_tokens: usize,
) -> Result<Vec<u32>, ModelError> {
    let prefix = vocab.ids_or_unk(&spec.prefix);
    let policy = SamplePolicy { allow_eos_story, max_char_placeholder: spec.names.len() };
    let mut ids = lm.sample_sentence(vocab, rng, &prefix, policy, max_tokens)?;
    if !require_pair {
        return Ok(ids);
    }
    for _ in 1..PAIR_MENTION_RETRIES {
        if mentions_pair(&ids) {
            return Ok(ids);
        }
        ids = lm.sample_sentence(vocab, rng, &prefix, policy, max_tokens)?;
    }
    for id in [CHAR1_ID, CHAR2_ID] {
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    Ok(ids)
}

fn mentions_pair(ids: &[u32]) -> bool {
    ids.contains(&CHAR1_ID) && ids.contains(&CHAR2_ID)
}

/// Relexicalization for null-latent sentences: each distinct placeholder
/// rank gets a uniformly drawn inventory name at its first occurrence.
/// Repeated draws may collide; the inventory is never deduplicated.
fn relex_sampled<R: Rng>(tokens: &[String], inventory: &[String], rng: &mut R) -> Vec<String> {
    let mut table: BTreeMap<usize, String> = BTreeMap::new();
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        match char_placeholder_rank(t) {
            Some(k) => {
                let name = table
                    .entry(k)
                    .or_insert_with(|| inventory[rng.gen_range(0..inventory.len())].clone());
                out.push(name.clone());
            }
            None => out.push(t.clone()),
        }
    }
    out
}

fn push_sentence(
    sentences: &mut Vec<Sentence>,
    trace: &mut Vec<LatentValue>,
    tokens: Vec<String>,
    latent: LatentValue,
) {
    let sentence = Sentence::new(tokens).expect("sampled tokens form a valid sentence");
    sentences.push(sentence);
    trace.push(latent);
}

fn finish(
    request: &GenerationRequest,
    sentences: Vec<Sentence>,
    trace: Vec<LatentValue>,
    termination: Termination,
) -> Result<GeneratedStory, GeneratorError> {
    let story = Story::new(request.prompt.clone(), sentences, request.characters.clone())
        .map_err(|e| GeneratorError::BadRequest(e.to_string()))?;
    Ok(GeneratedStory {
        mode: request.mode,
        seed: request.seed,
        relationships: request.relationships.clone(),
        story,
        trace: LatentTrace(trace),
        termination,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> GeneratorError {
    GeneratorError::Io { path: path.display().to_string(), source }
}

/// Writes generated stories as a format line followed by one record per line.
pub fn save_generated(path: &Path, stories: &[GeneratedStory]) -> Result<(), GeneratorError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| {
        writeln!(w, "{GENERATED_FORMAT}")?;
        for story in stories {
            let line = serde_json::to_string(story).expect("generated records serialize");
            writeln!(w, "{line}")?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Reads a generated-story file. A zero-length file is an empty batch;
/// otherwise the first line must be the format tag.
pub fn load_generated(path: &Path) -> Result<Vec<GeneratedStory>, GeneratorError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut stories = Vec::new();
    let mut lines = reader.lines();
    let Some(header) = lines.next() else {
        return Ok(stories);
    };
    let header = header.map_err(|e| io_err(path, e))?;
    if header.trim() != GENERATED_FORMAT {
        return Err(GeneratorError::Parse {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header {GENERATED_FORMAT:?}, got {header:?}"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let story: GeneratedStory =
            serde_json::from_str(&line).map_err(|e| GeneratorError::Parse {
                path: path.display().to_string(),
                line: line_no,
                reason: e.to_string(),
            })?;
        story.validate().map_err(|reason| GeneratorError::Parse {
            path: path.display().to_string(),
            line: line_no,
            reason,
        })?;
        stories.push(story);
    }
    Ok(stories)
}
