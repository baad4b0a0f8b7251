//! Log-linear selector over a sentence's latent candidates: the null value
//! plus one candidate per relationship in the story's set. Features are
//! sparse maps with stable string keys; zero values are never stored.

use super::ModelError;
use crate::types::{Context, LatentValue, Polarity, RelationshipSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Bumped whenever feature semantics change; persisted models carry it so a
/// stale file cannot be scored against new templates.
pub const FEATURE_TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Feature {
    /// Fires as 1 on the null candidate.
    NullBias,
    /// Fires as 1 on a relationship candidate of this polarity.
    PolarityBias(Polarity),
    /// 1 when the pair's first/second name appears in a context sentence
    /// (the prompt's introductions are ignored).
    MentionFirst,
    MentionSecond,
    /// 1/(1+d) where d is the number of sentences since the name last
    /// appeared, counting at most 10 back; 0 when it never appeared.
    RecencyFirst,
    RecencySecond,
    /// Context sentence count / 10, split per candidate kind so the shared
    /// quantity can push null and relationship candidates differently.
    ContextLenNull,
    ContextLenRel,
    /// Context sentence count / 12 capped at 1.5, same split.
    StoryFractionNull,
    StoryFractionRel,
    /// 1 when both pair names already appeared in context sentences.
    PairMatches,
}

impl Feature {
    pub fn key(&self) -> String {
        match self {
            Feature::NullBias => "null_bias".into(),
            Feature::PolarityBias(p) => format!("polarity_bias:{p}"),
            Feature::MentionFirst => "mention_first".into(),
            Feature::MentionSecond => "mention_second".into(),
            Feature::RecencyFirst => "recency_first".into(),
            Feature::RecencySecond => "recency_second".into(),
            Feature::ContextLenNull => "context_len_null".into(),
            Feature::ContextLenRel => "context_len_rel".into(),
            Feature::StoryFractionNull => "story_fraction_null".into(),
            Feature::StoryFractionRel => "story_fraction_rel".into(),
            Feature::PairMatches => "pair_matches".into(),
        }
    }
}

impl TryFrom<String> for Feature {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let f = match s.as_str() {
            "null_bias" => Feature::NullBias,
            "mention_first" => Feature::MentionFirst,
            "mention_second" => Feature::MentionSecond,
            "recency_first" => Feature::RecencyFirst,
            "recency_second" => Feature::RecencySecond,
            "context_len_null" => Feature::ContextLenNull,
            "context_len_rel" => Feature::ContextLenRel,
            "story_fraction_null" => Feature::StoryFractionNull,
            "story_fraction_rel" => Feature::StoryFractionRel,
            "pair_matches" => Feature::PairMatches,
            other => match other.strip_prefix("polarity_bias:") {
                Some(p) => Feature::PolarityBias(
                    p.parse().map_err(|_| format!("unknown feature {other:?}"))?,
                ),
                None => return Err(format!("unknown feature {s:?}")),
            },
        };
        Ok(f)
    }
}

impl From<Feature> for String {
    fn from(f: Feature) -> String {
        f.key()
    }
}

pub type FeatureVector = BTreeMap<Feature, f64>;

fn insert_nonzero(fv: &mut FeatureVector, f: Feature, v: f64) {
    if v != 0.0 {
        fv.insert(f, v);
    }
}

fn recency(context: &Context, name: &str) -> f64 {
    let i = context.sentences.len();
    for (idx, s) in context.sentences.iter().enumerate().rev() {
        if s.contains_token(name) {
            let d = (i - 1 - idx).min(10) as f64;
            return 1.0 / (1.0 + d);
        }
    }
    0.0
}

/// Features of one latent candidate given the story so far.
pub fn candidate_features(
    latent: LatentValue,
    relationships: &RelationshipSet,
    context: &Context,
) -> FeatureVector {
    let i = context.sentences.len() as f64;
    let ctx_len = i / 10.0;
    let frac = (i / 12.0).min(1.5);
    let mut fv = FeatureVector::new();
    match relationships.latent_triple(latent) {
        None => {
            fv.insert(Feature::NullBias, 1.0);
            insert_nonzero(&mut fv, Feature::ContextLenNull, ctx_len);
            insert_nonzero(&mut fv, Feature::StoryFractionNull, frac);
        }
        Some(triple) => {
            fv.insert(Feature::PolarityBias(triple.polarity), 1.0);
            let first = triple.pair.first();
            let second = triple.pair.second();
            let mentioned =
                |name: &str| context.sentences.iter().any(|s| s.contains_token(name));
            let (m1, m2) = (mentioned(first), mentioned(second));
            if m1 {
                fv.insert(Feature::MentionFirst, 1.0);
            }
            if m2 {
                fv.insert(Feature::MentionSecond, 1.0);
            }
            insert_nonzero(&mut fv, Feature::RecencyFirst, recency(context, first));
            insert_nonzero(&mut fv, Feature::RecencySecond, recency(context, second));
            if m1 && m2 {
                fv.insert(Feature::PairMatches, 1.0);
            }
            insert_nonzero(&mut fv, Feature::ContextLenRel, ctx_len);
            insert_nonzero(&mut fv, Feature::StoryFractionRel, frac);
        }
    }
    fv
}

/// Feature vectors for the full candidate list: null first, then each
/// relationship in set order. Index c corresponds to latent candidate c.
pub fn all_candidate_features(
    relationships: &RelationshipSet,
    context: &Context,
) -> Vec<FeatureVector> {
    (0..=relationships.len())
        .map(|c| {
            candidate_features(
                LatentValue::from_candidate_index(c),
                relationships,
                context,
            )
        })
        .collect()
}

/// One training observation: candidate features plus a target distribution
/// over the candidates (one-hot or soft).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorExample {
    pub candidates: Vec<FeatureVector>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorTrainConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub tol: f64,
    pub l2: f64,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        SelectorTrainConfig { max_iters: 500, step_init: 1.0, tol: 1e-9, l2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorModel {
    pub weights: BTreeMap<Feature, f64>,
    pub template_version: u32,
}

impl Default for SelectorModel {
    fn default() -> Self {
        SelectorModel { weights: BTreeMap::new(), template_version: FEATURE_TEMPLATE_VERSION }
    }
}

impl SelectorModel {
    pub fn score(&self, fv: &FeatureVector) -> f64 {
        fv.iter().map(|(f, v)| self.weights.get(f).copied().unwrap_or(0.0) * v).sum()
    }

    /// Log softmax over the candidate scores.
    pub fn log_distribution(&self, candidates: &[FeatureVector]) -> Vec<f64> {
        let scores: Vec<f64> = candidates.iter().map(|c| self.score(c)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        scores.iter().map(|s| s - lse).collect()
    }

    pub fn distribution(&self, candidates: &[FeatureVector]) -> Vec<f64> {
        self.log_distribution(candidates).iter().map(|lp| lp.exp()).collect()
    }

    /// Mean per-example target log likelihood minus the l2 penalty.
    pub fn objective(&self, examples: &[SelectorExample], l2: f64) -> f64 {
        let mut total = 0.0;
        for ex in examples {
            let logp = self.log_distribution(&ex.candidates);
            total += ex.target.iter().zip(&logp).map(|(t, lp)| t * lp).sum::<f64>();
        }
        let penalty: f64 = self.weights.values().map(|w| w * w).sum();
        total / examples.len() as f64 - l2 * penalty
    }

    /// Gradient of [`Self::objective`] with respect to every weight.
    pub fn gradient(&self, examples: &[SelectorExample], l2: f64) -> BTreeMap<Feature, f64> {
        let mut grad: BTreeMap<Feature, f64> = BTreeMap::new();
        for ex in examples {
            let p = self.distribution(&ex.candidates);
            for (c, fv) in ex.candidates.iter().enumerate() {
                let coeff = ex.target[c] - p[c];
                if coeff == 0.0 {
                    continue;
                }
                for (f, v) in fv {
                    *grad.entry(*f).or_insert(0.0) += coeff * v;
                }
            }
        }
        let n = examples.len() as f64;
        for g in grad.values_mut() {
            *g /= n;
        }
        for (f, w) in &self.weights {
            *grad.entry(*f).or_insert(0.0) -= 2.0 * l2 * w;
        }
        grad
    }

    /// Batch gradient ascent with backtracking step control. Only steps that
    /// improve the objective are kept, so the objective trace is monotone.
    pub fn fit(
        config: &SelectorTrainConfig,
        examples: &[SelectorExample],
        warm_start: Option<&SelectorModel>,
    ) -> Result<SelectorModel, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        for ex in examples {
            if ex.candidates.is_empty() || ex.candidates.len() != ex.target.len() {
                return Err(ModelError::InvalidConfig(
                    "selector example candidates and target lengths differ".into(),
                ));
            }
            let sum: f64 = ex.target.iter().sum();
            if ex.target.iter().any(|&t| !(t.is_finite() && t >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(ModelError::InvalidConfig(format!(
                    "selector target must be a distribution, sums to {sum}"
                )));
            }
        }
        let mut model = warm_start.cloned().unwrap_or_default();
        if model.template_version != FEATURE_TEMPLATE_VERSION {
            return Err(ModelError::InvalidConfig(format!(
                "warm start uses feature template {}, current is {}",
                model.template_version, FEATURE_TEMPLATE_VERSION
            )));
        }
        let mut step = config.step_init;
        let mut objective = model.objective(examples, config.l2);
        if !objective.is_finite() {
            return Err(ModelError::Divergence(format!("initial objective {objective}")));
        }
        for _ in 0..config.max_iters {
            let grad = model.gradient(examples, config.l2);
            let grad_norm2: f64 = grad.values().map(|g| g * g).sum();
            if grad_norm2 < 1e-24 {
                break;
            }
            let mut accepted = false;
            while step >= 1e-14 {
                let mut trial = model.clone();
                for (f, g) in &grad {
                    let w = trial.weights.entry(*f).or_insert(0.0);
                    *w += step * g;
                }
                let trial_objective = trial.objective(examples, config.l2);
                if trial_objective.is_finite() && trial_objective > objective {
                    let gain = trial_objective - objective;
                    model = trial;
                    objective = trial_objective;
                    step *= 1.2;
                    accepted = true;
                    if gain < config.tol {
                        return Ok(model);
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(model)
    }
}
