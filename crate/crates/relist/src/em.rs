//! EM training of the two-model story generator.
//!
//! Initialization fits both language models and the selector directly to the
//! silver sentence labels. Each EM cycle then re-estimates per-sentence
//! latent assignments from the current posterior (sampled, hard, or soft)
//! and refits the parts: the selector every cycle, warm-started; the
//! language models from scratch once the warmup cycles have passed. Silver
//! relationship sets stay fixed throughout; only sentence assignments move.
//!
//! Soft mode carries a monotonicity contract: the corpus log likelihood
//! never decreases across cycles (with the default unpenalized selector).
//! The selector refit only ever accepts objective improvements, and each
//! language model refit is kept only when it does not lower its share of the
//! expected complete-data objective. Sampled and hard modes are stochastic
//! and make no such promise.
//!
//! Story endings are learned through one pseudo-example per story that
//! predicts the end-of-story token from an empty prefix. These examples are
//! part of null-model (and baseline) training but never of the reported
//! corpus log likelihood.

use crate::annotator::AnnotatedStory;
use crate::models::ngram::{LmConfig, NGramLM, TrainExample};
use crate::models::selector::{
    all_candidate_features, SelectorExample, SelectorModel, SelectorTrainConfig,
    FEATURE_TEMPLATE_VERSION,
};
use crate::models::vocab::{char_placeholder, Vocabulary, EOS_SENT_ID, EOS_STORY_ID, REL_CLOSE, REL_OPEN};
use crate::models::{Conditioning, ModelError, PrefixSpec};
use crate::seeds::{derive_indexed_seed, derive_seed};
use crate::types::{Context, LatentValue, Polarity, RelationshipSet, Sentence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const MODEL_FORMAT: &str = "relist-model-v1";

#[derive(Debug, Error)]
pub enum EmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot {action} {path}: {source}")]
    Io { action: &'static str, path: PathBuf, source: std::io::Error },
    #[error("bad model file {path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
}

/// How the E-step turns posteriors into assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EMode {
    /// Draw one latent per sentence from its posterior.
    Sample,
    /// Take the posterior mode; ties break to the lowest candidate index.
    Hard,
    /// Keep the full posterior as fractional weights.
    Soft,
}

impl EMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EMode::Sample => "sample",
            EMode::Hard => "hard",
            EMode::Soft => "soft",
        }
    }
}

impl fmt::Display for EMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sample" => Ok(EMode::Sample),
            "hard" => Ok(EMode::Hard),
            "soft" => Ok(EMode::Soft),
            other => Err(format!("unknown e-step mode {other:?}, want sample, hard, or soft")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMConfig {
    /// EM cycles after initialization.
    pub cycles: usize,
    /// Leading cycles that refit the selector but keep both language models
    /// frozen.
    pub warmup: usize,
    pub e_mode: EMode,
    pub seed: u64,
    pub selector: SelectorTrainConfig,
    pub lm: LmConfig,
    /// Keep the previous language model when an M-step component receives no
    /// weighted data instead of failing.
    pub allow_empty_m_step: bool,
    /// Refit the null model on every sentence rather than only null-assigned
    /// mass. Initialization always trains it on everything.
    pub null_refit_on_all: bool,
}

impl Default for EMConfig {
    fn default() -> Self {
        EMConfig {
            cycles: 3,
            warmup: 1,
            e_mode: EMode::Sample,
            seed: 0,
            selector: SelectorTrainConfig::default(),
            lm: LmConfig::default(),
            allow_empty_m_step: true,
            null_refit_on_all: false,
        }
    }
}

/// A trained two-model bundle: shared vocabulary, relationship and null
/// language models, and the latent selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReListModel {
    pub vocab: Vocabulary,
    pub rel_lm: NGramLM,
    pub null_lm: NGramLM,
    pub selector: SelectorModel,
}

/// Single shared language model with a selector: the latent structure stays,
/// the per-latent model split goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleLmModel {
    pub vocab: Vocabulary,
    pub lm: NGramLM,
    pub selector: SelectorModel,
}

/// One language model conditioned on the serialized relationship block; no
/// latent structure at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    pub vocab: Vocabulary,
    pub lm: NGramLM,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn draw_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

impl ReListModel {
    /// Unnormalized candidate scores for one sentence: selector log
    /// probability plus language model log probability, per candidate.
    pub fn candidate_log_scores(
        &self,
        relationships: &RelationshipSet,
        context: Context,
        sentence: &Sentence,
    ) -> Vec<f64> {
        let feats = all_candidate_features(relationships, &context);
        let log_sel = self.selector.log_distribution(&feats);
        (0..=relationships.len())
            .map(|c| {
                let latent = LatentValue::from_candidate_index(c);
                let spec = Conditioning::new(relationships, context, latent).two_model_spec();
                let lm = if c == 0 { &self.null_lm } else { &self.rel_lm };
                log_sel[c] + lm_log_prob(lm, &self.vocab, &spec, sentence)
            })
            .collect()
    }

    /// Posterior over latent candidates, normalized in log space.
    pub fn posterior(
        &self,
        relationships: &RelationshipSet,
        context: Context,
        sentence: &Sentence,
    ) -> Vec<f64> {
        let scores = self.candidate_log_scores(relationships, context, sentence);
        let lse = log_sum_exp(&scores);
        scores.iter().map(|s| (s - lse).exp()).collect()
    }

    /// Log probability of one sentence with the latent marginalized out.
    pub fn sentence_log_likelihood(
        &self,
        relationships: &RelationshipSet,
        context: Context,
        sentence: &Sentence,
    ) -> f64 {
        log_sum_exp(&self.candidate_log_scores(relationships, context, sentence))
    }

    /// Total marginal log likelihood of every story sentence. Story-ending
    /// pseudo-examples are not part of this quantity.
    pub fn corpus_log_likelihood(&self, corpus: &[AnnotatedStory]) -> f64 {
        let mut total = 0.0;
        for story in corpus {
            for i in 1..=story.story.sentences.len() {
                total += self.sentence_log_likelihood(
                    &story.silver.relationships,
                    story.story.context_before(i),
                    &story.story.sentences[i - 1],
                );
            }
        }
        total
    }
}

fn lm_log_prob(lm: &NGramLM, vocab: &Vocabulary, spec: &PrefixSpec, sentence: &Sentence) -> f64 {
    let prefix = vocab.ids_or_unk(&spec.prefix);
    let mut tokens = vocab.ids_or_unk(&spec.delex(sentence.tokens()));
    tokens.push(EOS_SENT_ID);
    lm.log_prob_sequence(&prefix, &tokens)
}

/// Vocabulary covering everything training can produce: raw tokens, names,
/// placeholders up to each story's inventory size, and the serialization
/// tokens used by the flat baseline.
pub fn build_vocab(corpus: &[AnnotatedStory]) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    vocab.intern(REL_OPEN);
    vocab.intern(REL_CLOSE);
    for p in Polarity::ALL {
        vocab.intern(p.angle_token());
    }
    for story in corpus {
        for name in &story.story.characters {
            vocab.intern(name);
        }
        for k in 1..=story.story.characters.len() {
            vocab.intern(&char_placeholder(k));
        }
        for t in story.story.prompt.tokens() {
            vocab.intern(t);
        }
        for s in &story.story.sentences {
            for t in s.tokens() {
                vocab.intern(t);
            }
        }
    }
    vocab
}

fn lm_example(
    vocab: &Vocabulary,
    spec: &PrefixSpec,
    sentence: &Sentence,
    weight: f64,
) -> TrainExample {
    let mut tokens = vocab.ids_or_unk(&spec.delex(sentence.tokens()));
    tokens.push(EOS_SENT_ID);
    TrainExample { prefix: vocab.ids_or_unk(&spec.prefix), tokens, weight }
}

fn eos_example() -> TrainExample {
    TrainExample { prefix: vec![], tokens: vec![EOS_STORY_ID], weight: 1.0 }
}

/// Candidate-weight matrix: weights[story][sentence][candidate].
type Weights = Vec<Vec<Vec<f64>>>;

fn silver_weights(corpus: &[AnnotatedStory]) -> Weights {
    corpus
        .iter()
        .map(|story| {
            let k = story.silver.relationships.len();
            story
                .silver
                .sentence_labels
                .0
                .iter()
                .map(|z| {
                    let mut w = vec![0.0; k + 1];
                    w[z.candidate_index()] = 1.0;
                    w
                })
                .collect()
        })
        .collect()
}

fn selected_from_weights(weights: &Weights) -> Vec<Vec<usize>> {
    weights.iter().map(|story| story.iter().map(|w| argmax(w)).collect()).collect()
}

/// Builds the two language models' training sets from candidate weights.
/// With `null_on_all` the null model sees every sentence at weight one
/// regardless of assignment. Story-ending pseudo-examples always join the
/// null set.
fn lm_examples_from_weights(
    vocab: &Vocabulary,
    corpus: &[AnnotatedStory],
    weights: &Weights,
    null_on_all: bool,
) -> (Vec<TrainExample>, Vec<TrainExample>) {
    let mut rel = Vec::new();
    let mut null = Vec::new();
    for (si, story) in corpus.iter().enumerate() {
        let rels = &story.silver.relationships;
        for i in 1..=story.story.sentences.len() {
            let context = story.story.context_before(i);
            let sentence = &story.story.sentences[i - 1];
            let w = &weights[si][i - 1];
            for (c, &wc) in w.iter().enumerate().skip(1) {
                if wc > 0.0 {
                    let spec =
                        Conditioning::new(rels, context, LatentValue::Rel(c)).two_model_spec();
                    rel.push(lm_example(vocab, &spec, sentence, wc));
                }
            }
            let null_weight = if null_on_all { 1.0 } else { w[0] };
            if null_weight > 0.0 {
                let spec =
                    Conditioning::new(rels, context, LatentValue::Null).two_model_spec();
                null.push(lm_example(vocab, &spec, sentence, null_weight));
            }
        }
        null.push(eos_example());
    }
    (rel, null)
}

fn selector_examples(corpus: &[AnnotatedStory], weights: &Weights) -> Vec<SelectorExample> {
    let mut out = Vec::new();
    for (si, story) in corpus.iter().enumerate() {
        for i in 1..=story.story.sentences.len() {
            let context = story.story.context_before(i);
            out.push(SelectorExample {
                candidates: all_candidate_features(&story.silver.relationships, &context),
                target: weights[si][i - 1].clone(),
            });
        }
    }
    out
}

/// Fits the initial model directly to the silver labels: the relationship
/// model on silver relationship sentences, the null model on every sentence,
/// the selector on silver one-hots. This checkpoint is the un-refined
/// variant used as its own evaluation lane.
pub fn initialize(corpus: &[AnnotatedStory], cfg: &EMConfig) -> Result<ReListModel, EmError> {
    if corpus.is_empty() {
        return Err(EmError::EmptyCorpus);
    }
    cfg.lm.validate()?;
    let vocab = build_vocab(corpus);
    let weights = silver_weights(corpus);
    let (rel_ex, null_ex) = lm_examples_from_weights(&vocab, corpus, &weights, true);
    let rel_lm = NGramLM::train(cfg.lm.clone(), vocab.len(), &rel_ex)?;
    let null_lm = NGramLM::train(cfg.lm.clone(), vocab.len(), &null_ex)?;
    let selector = SelectorModel::fit(&cfg.selector, &selector_examples(corpus, &weights), None)?;
    Ok(ReListModel { vocab, rel_lm, null_lm, selector })
}

struct Assignment {
    weights: Weights,
    selected: Vec<Vec<usize>>,
}

fn e_step(model: &ReListModel, corpus: &[AnnotatedStory], cfg: &EMConfig, cycle: usize) -> Assignment {
    let cycle_seed = derive_seed(cfg.seed, &format!("e-step-{cycle}"));
    let mut weights = Vec::with_capacity(corpus.len());
    let mut selected = Vec::with_capacity(corpus.len());
    for (si, story) in corpus.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed_seed(cycle_seed, si as u64));
        let mut story_w = Vec::with_capacity(story.story.sentences.len());
        let mut story_s = Vec::with_capacity(story.story.sentences.len());
        for i in 1..=story.story.sentences.len() {
            let post = model.posterior(
                &story.silver.relationships,
                story.story.context_before(i),
                &story.story.sentences[i - 1],
            );
            let (w, s) = match cfg.e_mode {
                EMode::Sample => {
                    let c = draw_categorical(&mut rng, &post);
                    let mut w = vec![0.0; post.len()];
                    w[c] = 1.0;
                    (w, c)
                }
                EMode::Hard => {
                    let c = argmax(&post);
                    let mut w = vec![0.0; post.len()];
                    w[c] = 1.0;
                    (w, c)
                }
                EMode::Soft => {
                    let c = argmax(&post);
                    (post, c)
                }
            };
            story_w.push(w);
            story_s.push(s);
        }
        weights.push(story_w);
        selected.push(story_s);
    }
    Assignment { weights, selected }
}

/// Weighted log probability mass one language model contributes to the
/// expected complete-data objective: relationship candidates for the
/// relationship model, the null candidate for the null model. Story-ending
/// pseudo-examples are training data only and stay out of this quantity.
fn expected_component_ll(
    lm: &NGramLM,
    vocab: &Vocabulary,
    corpus: &[AnnotatedStory],
    weights: &Weights,
    null_component: bool,
) -> f64 {
    let mut total = 0.0;
    for (si, story) in corpus.iter().enumerate() {
        let rels = &story.silver.relationships;
        for i in 1..=story.story.sentences.len() {
            let context = story.story.context_before(i);
            let sentence = &story.story.sentences[i - 1];
            let w = &weights[si][i - 1];
            if null_component {
                if w[0] > 0.0 {
                    let spec =
                        Conditioning::new(rels, context, LatentValue::Null).two_model_spec();
                    total += w[0] * lm_log_prob(lm, vocab, &spec, sentence);
                }
            } else {
                for (c, &wc) in w.iter().enumerate().skip(1) {
                    if wc > 0.0 {
                        let spec = Conditioning::new(rels, context, LatentValue::Rel(c))
                            .two_model_spec();
                        total += wc * lm_log_prob(lm, vocab, &spec, sentence);
                    }
                }
            }
        }
    }
    total
}

fn m_step(
    model: &mut ReListModel,
    corpus: &[AnnotatedStory],
    assignment: &Assignment,
    cfg: &EMConfig,
    refit_lms: bool,
) -> Result<(), EmError> {
    let sel_examples = selector_examples(corpus, &assignment.weights);
    model.selector = SelectorModel::fit(&cfg.selector, &sel_examples, Some(&model.selector))?;
    if !refit_lms {
        return Ok(());
    }
    let (rel_ex, null_ex) =
        lm_examples_from_weights(&model.vocab, corpus, &assignment.weights, cfg.null_refit_on_all);
    // Counting refits approximate the maximization (smoothing and the fixed
    // interpolation are not refit), so under soft assignments each refit is
    // kept only when it does not lower its expected-objective share; this
    // restores the monotone-likelihood guarantee the soft mode advertises.
    // Sampled and hard assignments are stochastic updates with no such
    // guarantee, and their refits are always taken.
    let guard = cfg.e_mode == EMode::Soft;
    match NGramLM::train(cfg.lm.clone(), model.vocab.len(), &rel_ex) {
        Ok(lm) => {
            if !guard
                || expected_component_ll(&lm, &model.vocab, corpus, &assignment.weights, false)
                    >= expected_component_ll(
                        &model.rel_lm,
                        &model.vocab,
                        corpus,
                        &assignment.weights,
                        false,
                    )
            {
                model.rel_lm = lm;
            }
        }
        Err(ModelError::EmptyTrainingSet) if cfg.allow_empty_m_step => {}
        Err(e) => return Err(e.into()),
    }
    match NGramLM::train(cfg.lm.clone(), model.vocab.len(), &null_ex) {
        Ok(lm) => {
            if !guard
                || expected_component_ll(&lm, &model.vocab, corpus, &assignment.weights, true)
                    >= expected_component_ll(
                        &model.null_lm,
                        &model.vocab,
                        corpus,
                        &assignment.weights,
                        true,
                    )
            {
                model.null_lm = lm;
            }
        }
        Err(ModelError::EmptyTrainingSet) if cfg.allow_empty_m_step => {}
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn count_changes(prev: &[Vec<usize>], cur: &[Vec<usize>]) -> usize {
    prev.iter()
        .zip(cur)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub log_likelihood: f64,
    pub assignment_changes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub e_mode: EMode,
    pub initial_log_likelihood: f64,
    pub cycles: Vec<CycleReport>,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// The initialization checkpoint, before any EM cycle.
    pub initial: ReListModel,
    pub final_model: ReListModel,
}

/// Runs initialization plus EM cycles, invoking `observer` with the model
/// after every completed cycle.
pub fn train_observed<F>(
    corpus: &[AnnotatedStory],
    cfg: &EMConfig,
    mut observer: F,
) -> Result<TrainOutcome, EmError>
where
    F: FnMut(usize, &ReListModel),
{
    let initial = initialize(corpus, cfg)?;
    let initial_log_likelihood = initial.corpus_log_likelihood(corpus);
    let mut model = initial.clone();
    let mut prev = selected_from_weights(&silver_weights(corpus));
    let mut cycles = Vec::with_capacity(cfg.cycles);
    for cycle in 0..cfg.cycles {
        let assignment = e_step(&model, corpus, cfg, cycle);
        let assignment_changes = count_changes(&prev, &assignment.selected);
        m_step(&mut model, corpus, &assignment, cfg, cycle >= cfg.warmup)?;
        let log_likelihood = model.corpus_log_likelihood(corpus);
        cycles.push(CycleReport { cycle, log_likelihood, assignment_changes });
        prev = assignment.selected;
        observer(cycle, &model);
    }
    Ok(TrainOutcome {
        report: TrainReport { e_mode: cfg.e_mode, initial_log_likelihood, cycles },
        initial,
        final_model: model,
    })
}

pub fn train(corpus: &[AnnotatedStory], cfg: &EMConfig) -> Result<TrainOutcome, EmError> {
    train_observed(corpus, cfg, |_, _| {})
}

/// Trains the shared-model baseline: one language model fed both the
/// relationship-conditioned and the null views of the silver data, plus the
/// usual selector. No EM refinement.
pub fn train_single_lm(corpus: &[AnnotatedStory], cfg: &EMConfig) -> Result<SingleLmModel, EmError> {
    if corpus.is_empty() {
        return Err(EmError::EmptyCorpus);
    }
    cfg.lm.validate()?;
    let vocab = build_vocab(corpus);
    let weights = silver_weights(corpus);
    let (mut examples, null_ex) = lm_examples_from_weights(&vocab, corpus, &weights, true);
    examples.extend(null_ex);
    let lm = NGramLM::train(cfg.lm.clone(), vocab.len(), &examples)?;
    let selector = SelectorModel::fit(&cfg.selector, &selector_examples(corpus, &weights), None)?;
    Ok(SingleLmModel { vocab, lm, selector })
}

/// Trains the flat baseline: one language model conditioned on the
/// serialized relationship block, no latent structure. No EM refinement.
pub fn train_flat(corpus: &[AnnotatedStory], cfg: &EMConfig) -> Result<FlatModel, EmError> {
    if corpus.is_empty() {
        return Err(EmError::EmptyCorpus);
    }
    cfg.lm.validate()?;
    let vocab = build_vocab(corpus);
    let mut examples = Vec::new();
    for story in corpus {
        let rels = &story.silver.relationships;
        for i in 1..=story.story.sentences.len() {
            let context = story.story.context_before(i);
            let spec = Conditioning::new(rels, context, LatentValue::Null).flat_spec();
            examples.push(lm_example(&vocab, &spec, &story.story.sentences[i - 1], 1.0));
        }
        examples.push(eos_example());
    }
    let lm = NGramLM::train(cfg.lm.clone(), vocab.len(), &examples)?;
    Ok(FlatModel { vocab, lm })
}

/// Any trained bundle, tagged for storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AnyModel {
    #[serde(rename = "relist")]
    ReList(ReListModel),
    #[serde(rename = "single_lm")]
    SingleLm(SingleLmModel),
    #[serde(rename = "flat")]
    Flat(FlatModel),
}

impl AnyModel {
    fn selector_template(&self) -> Option<u32> {
        match self {
            AnyModel::ReList(m) => Some(m.selector.template_version),
            AnyModel::SingleLm(m) => Some(m.selector.template_version),
            AnyModel::Flat(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: AnyModel,
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<(), EmError> {
    let file = ModelFile { format: MODEL_FORMAT.to_string(), model: model.clone() };
    let mut json = serde_json::to_string(&file)
        .map_err(|e| EmError::BadFile { path: path.to_path_buf(), reason: e.to_string() })?;
    json.push('\n');
    std::fs::write(path, json)
        .map_err(|e| EmError::Io { action: "write", path: path.to_path_buf(), source: e })
}

pub fn load_model(path: &Path) -> Result<AnyModel, EmError> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| EmError::Io { action: "read", path: path.to_path_buf(), source: e })?;
    let file: ModelFile = serde_json::from_str(&data)
        .map_err(|e| EmError::BadFile { path: path.to_path_buf(), reason: e.to_string() })?;
    if file.format != MODEL_FORMAT {
        return Err(EmError::BadFile {
            path: path.to_path_buf(),
            reason: format!("format {:?}, want {MODEL_FORMAT:?}", file.format),
        });
    }
    if let Some(v) = file.model.selector_template() {
        if v != FEATURE_TEMPLATE_VERSION {
            return Err(EmError::BadFile {
                path: path.to_path_buf(),
                reason: format!(
                    "selector feature template {v}, current is {FEATURE_TEMPLATE_VERSION}"
                ),
            });
        }
    }
    Ok(file.model)
}
