//! Polarity probe: a small softmax text classifier trained on silver-labeled
//! relationship sentences, then applied to generated relationship sentences
//! to measure how often a sentence expresses its latent's polarity.
//!
//! Features are bag-of-words presence over the sentence with the pair's two
//! names mapped to placeholder tokens, a bias, and the scaled token distance
//! between the pair members. Prediction ties break by training prior, then
//! by polarity order, so an untrained classifier degrades to the majority
//! class.

use crate::annotator::AnnotatedStory;
use crate::generator::GeneratedStory;
use crate::models::ModelError;
use crate::types::{CharacterPair, LatentValue, Polarity};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { max_iters: 300, step_init: 1.0, tol: 1e-7 }
    }
}

type FeatureVector = BTreeMap<String, f64>;

/// Features of one sentence with respect to one character pair.
pub fn sentence_features(tokens: &[String], pair: &CharacterPair) -> FeatureVector {
    let mapped: Vec<&str> = tokens
        .iter()
        .map(|t| {
            if t == pair.first() {
                "<CHAR1>"
            } else if t == pair.second() {
                "<CHAR2>"
            } else {
                t.as_str()
            }
        })
        .collect();
    let mut fv = FeatureVector::new();
    for t in &mapped {
        fv.insert(format!("tok:{t}"), 1.0);
    }
    fv.insert("bias".into(), 1.0);
    let first = mapped.iter().position(|t| *t == "<CHAR1>");
    let second = mapped.iter().position(|t| *t == "<CHAR2>");
    if let (Some(a), Some(b)) = (first, second) {
        fv.insert("dist".into(), (a as f64 - b as f64).abs() / 10.0);
    }
    fv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityClassifier {
    weights: [FeatureVector; 3],
    /// Training class shares, the tie-break order and chance reference.
    prior: [f64; 3],
}

fn dot(weights: &FeatureVector, fv: &FeatureVector) -> f64 {
    fv.iter().map(|(k, v)| weights.get(k).copied().unwrap_or(0.0) * v).sum()
}

fn log_softmax(scores: [f64; 3]) -> [f64; 3] {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.map(|s| s - lse)
}

struct TrainExample {
    features: FeatureVector,
    class: usize,
}

fn mean_log_likelihood(weights: &[FeatureVector; 3], examples: &[TrainExample]) -> f64 {
    let total: f64 = examples
        .iter()
        .map(|ex| {
            let scores = [0, 1, 2].map(|c| dot(&weights[c], &ex.features));
            log_softmax(scores)[ex.class]
        })
        .sum();
    total / examples.len() as f64
}

fn gradient(weights: &[FeatureVector; 3], examples: &[TrainExample]) -> [FeatureVector; 3] {
    let mut grad: [FeatureVector; 3] = Default::default();
    for ex in examples {
        let scores = [0, 1, 2].map(|c| dot(&weights[c], &ex.features));
        let logp = log_softmax(scores);
        for c in 0..3 {
            let coeff = (ex.class == c) as u8 as f64 - logp[c].exp();
            for (k, v) in &ex.features {
                *grad[c].entry(k.clone()).or_insert(0.0) += coeff * v;
            }
        }
    }
    let n = examples.len() as f64;
    for g in &mut grad {
        g.values_mut().for_each(|v| *v /= n);
    }
    grad
}

impl PolarityClassifier {
    /// Class scores for one sentence and pair.
    fn scores(&self, tokens: &[String], pair: &CharacterPair) -> [f64; 3] {
        let fv = sentence_features(tokens, pair);
        [0, 1, 2].map(|c| dot(&self.weights[c], &fv))
    }

    /// Predicted polarity; exact score ties break by training prior, then by
    /// polarity order.
    pub fn predict(&self, tokens: &[String], pair: &CharacterPair) -> Polarity {
        let scores = self.scores(tokens, pair);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut best = 0;
        let mut best_prior = f64::NEG_INFINITY;
        for c in 0..3 {
            if scores[c] == max && self.prior[c] > best_prior {
                best = c;
                best_prior = self.prior[c];
            }
        }
        Polarity::ALL[best]
    }

    pub fn prior(&self) -> [f64; 3] {
        self.prior
    }
}

/// Trains the probe on every silver relationship sentence in the corpus.
pub fn train_polarity_classifier(
    corpus: &[AnnotatedStory],
    config: &ClassifierConfig,
) -> Result<PolarityClassifier, ModelError> {
    let mut examples = Vec::new();
    let mut counts = [0usize; 3];
    for story in corpus {
        for (sentence, latent) in story.story.sentences.iter().zip(story.silver.sentence_labels.iter())
        {
            if let LatentValue::Rel(j) = latent {
                let triple = story.silver.relationships.get(*j).expect("silver label in range");
                let class = triple.polarity.index();
                counts[class] += 1;
                examples.push(TrainExample {
                    features: sentence_features(sentence.tokens(), &triple.pair),
                    class,
                });
            }
        }
    }
    if examples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let prior = counts.map(|c| c as f64 / examples.len() as f64);

    let mut weights: [FeatureVector; 3] = Default::default();
    let mut objective = mean_log_likelihood(&weights, &examples);
    let mut step = config.step_init;
    for _ in 0..config.max_iters {
        let grad = gradient(&weights, &examples);
        let norm_sq: f64 = grad.iter().flat_map(|g| g.values()).map(|v| v * v).sum();
        if norm_sq < config.tol * config.tol {
            break;
        }
        let mut proposal = weights.clone();
        for c in 0..3 {
            for (k, v) in &grad[c] {
                *proposal[c].entry(k.clone()).or_insert(0.0) += step * v;
            }
        }
        let proposed = mean_log_likelihood(&proposal, &examples);
        if proposed > objective {
            weights = proposal;
            objective = proposed;
            step *= 1.2;
        } else {
            step /= 2.0;
            if step < 1e-12 {
                break;
            }
        }
    }
    if !objective.is_finite() {
        return Err(ModelError::Divergence("polarity probe objective is not finite".into()));
    }
    Ok(PolarityClassifier { weights, prior })
}

/// Probe results over generated stories. `accuracy` is the percentage of
/// relationship sentences whose predicted polarity matches their latent's;
/// `majority` and `mix_squared` are chance references computed from the
/// evaluated sentences' target mix (best single-class guess and expected
/// accuracy of guessing from the mix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PclsReport {
    pub sentences: usize,
    pub defined: bool,
    pub accuracy: f64,
    pub majority: f64,
    pub mix_squared: f64,
}

pub fn evaluate_pcls(classifier: &PolarityClassifier, stories: &[GeneratedStory]) -> PclsReport {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut target_counts = [0usize; 3];
    for story in stories {
        for (sentence, latent) in story.story.sentences.iter().zip(story.trace.iter()) {
            if let LatentValue::Rel(j) = latent {
                let triple = story.relationships.get(*j).expect("trace label in range");
                target_counts[triple.polarity.index()] += 1;
                total += 1;
                if classifier.predict(sentence.tokens(), &triple.pair) == triple.polarity {
                    correct += 1;
                }
            }
        }
    }
    if total == 0 {
        return PclsReport {
            sentences: 0,
            defined: false,
            accuracy: 0.0,
            majority: 0.0,
            mix_squared: 0.0,
        };
    }
    let mix = target_counts.map(|c| c as f64 / total as f64);
    PclsReport {
        sentences: total,
        defined: true,
        accuracy: 100.0 * correct as f64 / total as f64,
        majority: 100.0 * mix.iter().cloned().fold(0.0, f64::max),
        mix_squared: 100.0 * mix.iter().map(|p| p * p).sum::<f64>(),
    }
}
