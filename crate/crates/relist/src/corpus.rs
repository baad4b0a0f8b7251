//! Synthetic gold corpus: SVO-template stories with known relationships,
//! per-sentence gold latent labels, and mention-role analyses, plus the
//! line-delimited corpus file format and train/test splitting.
//!
//! Every relationship sentence realizes exactly one gold triple as
//! `subject verb object`, with the verb drawn from the lexicon class of the
//! triple's polarity. Null sentences mention at most one character and use
//! only vocabulary absent from the lexicon, so the silver annotator can
//! recover the gold structure exactly; that recovery is the corpus's
//! built-in oracle.

use crate::lexicon::SentimentLexicon;
use crate::seeds::derive_indexed_seed;
use crate::types::{
    CharacterPair, LatentTrace, LatentValue, Polarity, RelationshipSet, RelationshipTriple,
    Sentence, Story, TypeError,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const CORPUS_FORMAT: &str = "relist-corpus-v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("lexicon needs at least 3 {polarity} entries, found {have}")]
    LexiconTooSmall { polarity: Polarity, have: usize },
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("{path} line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Grammatical role of a character mention within its sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionRole {
    #[serde(rename = "subject")]
    SubjectOfMainVerb,
    #[serde(rename = "object")]
    ObjectOfMainVerb,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub name: String,
    pub position: usize,
    pub role: MentionRole,
}

/// A sentence with its character mentions. At most one subject-of-main-verb
/// and one object-of-main-verb mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedSentence {
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl AnalyzedSentence {
    pub fn validate(&self) -> Result<(), String> {
        let mut subjects = 0;
        let mut objects = 0;
        for m in &self.mentions {
            let Some(tok) = self.tokens.get(m.position) else {
                return Err(format!("mention position {} out of range", m.position));
            };
            if tok != &m.name {
                return Err(format!(
                    "mention {:?} does not match token {:?} at position {}",
                    m.name, tok, m.position
                ));
            }
            match m.role {
                MentionRole::SubjectOfMainVerb => subjects += 1,
                MentionRole::ObjectOfMainVerb => objects += 1,
                MentionRole::Other => {}
            }
        }
        if subjects > 1 || objects > 1 {
            return Err(format!(
                "at most one subject and one object mention allowed, got {subjects}/{objects}"
            ));
        }
        Ok(())
    }

    pub fn sentence(&self) -> Result<Sentence, TypeError> {
        Sentence::new(self.tokens.clone())
    }
}

/// A synthesized story with full gold structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStory {
    #[serde(flatten)]
    pub story: Story,
    pub gold_relationships: RelationshipSet,
    pub gold_sentence_labels: LatentTrace,
    pub analyzed: Vec<AnalyzedSentence>,
}

impl GoldStory {
    pub fn validate(&self) -> Result<(), String> {
        let t = self.story.sentences.len();
        if t == 0 {
            return Err("story must have at least one sentence".into());
        }
        self.gold_sentence_labels
            .validate(t, self.gold_relationships.len())
            .map_err(|e| e.to_string())?;
        if self.analyzed.len() != t {
            return Err(format!("{} analyzed sentences for {} story sentences", self.analyzed.len(), t));
        }
        for (i, (a, s)) in self.analyzed.iter().zip(&self.story.sentences).enumerate() {
            if a.tokens != s.tokens() {
                return Err(format!("analyzed tokens diverge from sentence {i}"));
            }
            a.validate().map_err(|e| format!("sentence {i}: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_stories: usize,
    /// Inclusive range of characters per story.
    pub characters_per_story: (usize, usize),
    /// Inclusive range of non-prompt sentences per story.
    pub sentences_per_story: (usize, usize),
    /// Probability of positive, neutral, negative gold polarity, in that order.
    pub polarity_mix: [f64; 3],
    /// Probability that a non-coverage sentence carries no relationship.
    pub null_sentence_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_stories: 1000,
            characters_per_story: (2, 4),
            sentences_per_story: (8, 14),
            polarity_mix: [0.36, 0.19, 0.45],
            null_sentence_rate: 0.5,
            seed: 0,
        }
    }
}

const NAME_POOL: [&str; 16] = [
    "Alice", "Bob", "Carol", "David", "Emma", "Frank", "Grace", "Henry", "Irene", "Jack", "Karen",
    "Liam", "Mona", "Noah", "Olive", "Peter",
];

const VENUES: [&str; 5] = ["town", "village", "city", "harbor", "valley"];
const SCENE_NOUNS: [&str; 6] = ["town", "market", "river", "sky", "road", "square"];
const SCENE_ADJS: [&str; 6] = ["quiet", "busy", "grey", "cold", "still", "distant"];
const SCENE_LINES: [&[&str]; 3] = [
    &["it", "rained", "all", "day", "."],
    &["the", "wind", "blew", "through", "the", "streets", "."],
    &["the", "sun", "rose", "over", "the", "hills", "."],
];
const WALK_PLACES: [&str; 4] = ["market", "square", "river", "harbor"];
const LOOK_NOUNS: [&str; 4] = ["sky", "river", "road", "stars"];

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let (cmin, cmax) = self.characters_per_story;
        if cmin < 2 || cmin > cmax || cmax > NAME_POOL.len() {
            return Err(CorpusError::InvalidConfig(format!(
                "characters_per_story {cmin}..={cmax} must lie within 2..={}",
                NAME_POOL.len()
            )));
        }
        let (smin, smax) = self.sentences_per_story;
        if smin < 1 || smin > smax {
            return Err(CorpusError::InvalidConfig(format!(
                "sentences_per_story {smin}..={smax} must be a non-empty range from 1"
            )));
        }
        let sum: f64 = self.polarity_mix.iter().sum();
        if self.polarity_mix.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-12 {
            return Err(CorpusError::InvalidConfig(format!(
                "polarity_mix must be probabilities summing to 1, got {:?}",
                self.polarity_mix
            )));
        }
        if !(0.0..=1.0).contains(&self.null_sentence_rate) {
            return Err(CorpusError::InvalidConfig(format!(
                "null_sentence_rate must lie in [0, 1], got {}",
                self.null_sentence_rate
            )));
        }
        Ok(())
    }
}

fn sample_polarity(mix: &[f64; 3], rng: &mut ChaCha8Rng) -> Polarity {
    let u: f64 = rng.gen();
    if u < mix[0] {
        Polarity::Positive
    } else if u < mix[0] + mix[1] {
        Polarity::Neutral
    } else {
        Polarity::Negative
    }
}

fn prompt_sentence(characters: &[String], rng: &mut ChaCha8Rng) -> Sentence {
    let venue = VENUES[rng.gen_range(0..VENUES.len())];
    let mut tokens: Vec<String> = Vec::new();
    for (i, name) in characters.iter().enumerate() {
        if i > 0 {
            if i + 1 == characters.len() {
                tokens.push("and".into());
            } else {
                tokens.push(",".into());
            }
        }
        tokens.push(name.clone());
    }
    for w in ["lived", "in", "the", venue, "."] {
        tokens.push(w.into());
    }
    Sentence::new(tokens).expect("prompt tokens are valid")
}

struct VerbPools {
    by_class: [Vec<String>; 3],
}

impl VerbPools {
    fn from_lexicon(lexicon: &SentimentLexicon) -> Result<Self, CorpusError> {
        let mut by_class: [Vec<String>; 3] = Default::default();
        for polarity in Polarity::ALL {
            let entries: Vec<String> =
                lexicon.class_entries(polarity).into_iter().map(str::to_string).collect();
            if entries.len() < 3 {
                return Err(CorpusError::LexiconTooSmall { polarity, have: entries.len() });
            }
            by_class[polarity.index()] = entries;
        }
        Ok(VerbPools { by_class })
    }

    fn draw(&self, polarity: Polarity, rng: &mut ChaCha8Rng) -> &str {
        let pool = &self.by_class[polarity.index()];
        &pool[rng.gen_range(0..pool.len())]
    }
}

fn relationship_sentence(
    triple: &RelationshipTriple,
    verbs: &VerbPools,
    rng: &mut ChaCha8Rng,
) -> AnalyzedSentence {
    let mut tokens: Vec<String> = Vec::new();
    let (subject, object) = if rng.gen::<bool>() {
        (triple.pair.first(), triple.pair.second())
    } else {
        (triple.pair.second(), triple.pair.first())
    };
    let verb = verbs.draw(triple.polarity, rng).to_string();
    let subj_pos = tokens.len();
    tokens.push(subject.to_string());
    tokens.push(verb);
    let obj_pos = tokens.len();
    tokens.push(object.to_string());
    tokens.push(".".into());
    AnalyzedSentence {
        tokens,
        mentions: vec![
            Mention {
                name: subject.to_string(),
                position: subj_pos,
                role: MentionRole::SubjectOfMainVerb,
            },
            Mention {
                name: object.to_string(),
                position: obj_pos,
                role: MentionRole::ObjectOfMainVerb,
            },
        ],
    }
}

fn null_sentence(characters: &[String], rng: &mut ChaCha8Rng) -> AnalyzedSentence {
    match rng.gen_range(0..4u8) {
        0 => {
            let noun = SCENE_NOUNS[rng.gen_range(0..SCENE_NOUNS.len())];
            let adj = SCENE_ADJS[rng.gen_range(0..SCENE_ADJS.len())];
            AnalyzedSentence {
                tokens: ["the", noun, "was", adj, "."].iter().map(|w| w.to_string()).collect(),
                mentions: vec![],
            }
        }
        1 => {
            let line = SCENE_LINES[rng.gen_range(0..SCENE_LINES.len())];
            AnalyzedSentence {
                tokens: line.iter().map(|w| w.to_string()).collect(),
                mentions: vec![],
            }
        }
        2 => {
            let name = characters[rng.gen_range(0..characters.len())].clone();
            let place = WALK_PLACES[rng.gen_range(0..WALK_PLACES.len())];
            AnalyzedSentence {
                tokens: [name.as_str(), "walked", "to", "the", place, "."]
                    .iter()
                    .map(|w| w.to_string())
                    .collect(),
                mentions: vec![Mention {
                    name,
                    position: 0,
                    role: MentionRole::SubjectOfMainVerb,
                }],
            }
        }
        _ => {
            let name = characters[rng.gen_range(0..characters.len())].clone();
            let noun = LOOK_NOUNS[rng.gen_range(0..LOOK_NOUNS.len())];
            AnalyzedSentence {
                tokens: [name.as_str(), "looked", "at", "the", noun, "."]
                    .iter()
                    .map(|w| w.to_string())
                    .collect(),
                mentions: vec![Mention {
                    name,
                    position: 0,
                    role: MentionRole::SubjectOfMainVerb,
                }],
            }
        }
    }
}

fn synthesize_story(
    cfg: &SynthConfig,
    verbs: &VerbPools,
    rng: &mut ChaCha8Rng,
) -> GoldStory {
    let (cmin, cmax) = cfg.characters_per_story;
    let n_chars = rng.gen_range(cmin..=cmax);
    let mut pool: Vec<&str> = NAME_POOL.to_vec();
    pool.shuffle(rng);
    let characters: Vec<String> = pool[..n_chars].iter().map(|s| s.to_string()).collect();

    let (smin, smax) = cfg.sentences_per_story;
    let t = rng.gen_range(smin..=smax);

    let mut pairs: Vec<CharacterPair> = Vec::new();
    for i in 0..characters.len() {
        for j in (i + 1)..characters.len() {
            pairs.push(CharacterPair::new(&characters[i], &characters[j]).expect("distinct names"));
        }
    }
    pairs.shuffle(rng);
    let k_max = pairs.len().min(3).min(t);
    let k = rng.gen_range(1..=k_max);
    let triples: Vec<RelationshipTriple> = pairs[..k]
        .iter()
        .map(|pair| RelationshipTriple {
            pair: pair.clone(),
            polarity: sample_polarity(&cfg.polarity_mix, rng),
        })
        .collect();
    let relationships = RelationshipSet::new(triples).expect("k >= 1, unique pairs");

    // Guarantee every triple at least one sentence, then fill the rest by rate.
    let mut positions: Vec<usize> = (0..t).collect();
    positions.shuffle(rng);
    let mut plan: Vec<LatentValue> = vec![LatentValue::Null; t];
    for (j, &pos) in positions[..k].iter().enumerate() {
        plan[pos] = LatentValue::Rel(j + 1);
    }
    for slot in plan.iter_mut() {
        if slot.is_null() && rng.gen::<f64>() >= cfg.null_sentence_rate {
            *slot = LatentValue::Rel(rng.gen_range(1..=k));
        }
    }

    let prompt = prompt_sentence(&characters, rng);
    let mut analyzed: Vec<AnalyzedSentence> = Vec::with_capacity(t);
    for slot in &plan {
        let a = match relationships.latent_triple(*slot) {
            Some(triple) => relationship_sentence(triple, verbs, rng),
            None => null_sentence(&characters, rng),
        };
        analyzed.push(a);
    }
    let sentences: Vec<Sentence> =
        analyzed.iter().map(|a| a.sentence().expect("template tokens are valid")).collect();

    GoldStory {
        story: Story::new(prompt, sentences, characters).expect("valid story"),
        gold_relationships: relationships,
        gold_sentence_labels: LatentTrace(plan),
        analyzed,
    }
}

/// Synthesizes a deterministic gold corpus. Each story draws from its own
/// seed stream, so story `i` is unaffected by corpus size.
pub fn synthesize_corpus(
    cfg: &SynthConfig,
    lexicon: &SentimentLexicon,
) -> Result<Vec<GoldStory>, CorpusError> {
    cfg.validate()?;
    let verbs = VerbPools::from_lexicon(lexicon)?;
    let mut stories = Vec::with_capacity(cfg.num_stories);
    for i in 0..cfg.num_stories {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed_seed(cfg.seed, i as u64));
        stories.push(synthesize_story(cfg, &verbs, &mut rng));
    }
    Ok(stories)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<GoldStory>,
    pub test: Vec<GoldStory>,
}

/// Seeded test-membership mask: `round(n * fraction)` positions are marked
/// for the test side; everything else trains.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<Vec<bool>, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    let test_size = ((n as f64) * test_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in &indices[..test_size] {
        in_test[i] = true;
    }
    Ok(in_test)
}

/// Seeded disjoint split. The test side gets `round(n * fraction)` stories;
/// both sides keep the original relative order.
pub fn split_corpus(
    stories: Vec<GoldStory>,
    test_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let in_test = split_indices(stories.len(), test_fraction, seed)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, story) in stories.into_iter().enumerate() {
        if in_test[i] {
            test.push(story);
        } else {
            train.push(story);
        }
    }
    Ok(CorpusSplit { train, test })
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// Writes the corpus as a header line followed by one JSON record per story.
pub fn save_corpus(path: &Path, stories: &[GoldStory]) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| {
        writeln!(w, "{CORPUS_FORMAT}")?;
        for story in stories {
            let line = serde_json::to_string(story).expect("corpus records serialize");
            writeln!(w, "{line}")?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Reads a corpus file. A zero-length file is an empty corpus; otherwise the
/// first line must be the format tag and each following line one record.
pub fn load_corpus(path: &Path) -> Result<Vec<GoldStory>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut stories = Vec::new();
    let mut lines = reader.lines();
    let Some(header) = lines.next() else {
        return Ok(stories);
    };
    let header = header.map_err(|e| io_err(path, e))?;
    if header.trim() != CORPUS_FORMAT {
        return Err(CorpusError::Parse {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header {CORPUS_FORMAT:?}, got {header:?}"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let story: GoldStory = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        story.validate().map_err(|reason| CorpusError::Parse {
            path: path.display().to_string(),
            line: line_no,
            reason,
        })?;
        stories.push(story);
    }
    Ok(stories)
}
