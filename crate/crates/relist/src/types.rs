//! Core domain types: polarities, canonical character pairs, relationship
//! sets, tokenized sentences, stories, and latent traces.
//!
//! Pairs are undirected and stored canonically (byte-lexicographically
//! smaller name first), so `(Bob, Alice)` and `(Alice, Bob)` are the same
//! pair. Latent values index into a story's relationship set with 1-based
//! indices; index 0 is reserved for the null value.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("character {0:?} cannot relate to itself")]
    SelfRelationship(String),
    #[error("character name must be a non-empty single token, got {0:?}")]
    BadName(String),
    #[error("duplicate pair {0} in relationship set")]
    DuplicatePair(String),
    #[error("relationship set must contain at least one triple")]
    EmptySet,
    #[error("sentence must contain at least one token")]
    EmptySentence,
    #[error("token must be non-empty and whitespace-free, got {0:?}")]
    BadToken(String),
    #[error("cannot parse {0:?} as a relationship triple")]
    BadTriple(String),
    #[error("cannot parse {0:?} as a polarity")]
    BadPolarity(String),
    #[error("latent index {index} out of range for {k} relationships")]
    LatentOutOfRange { index: usize, k: usize },
}

/// Relationship polarity. The variant order is the total order used for
/// deterministic serialization and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }

    /// Surface form used inside serialized triples, e.g. `<positive>`.
    pub fn angle_token(self) -> &'static str {
        match self {
            Polarity::Positive => "<positive>",
            Polarity::Neutral => "<neutral>",
            Polarity::Negative => "<negative>",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Neutral => 1,
            Polarity::Negative => 2,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, TypeError> {
        match s {
            "positive" | "<positive>" => Ok(Polarity::Positive),
            "neutral" | "<neutral>" => Ok(Polarity::Neutral),
            "negative" | "<negative>" => Ok(Polarity::Negative),
            other => Err(TypeError::BadPolarity(other.to_string())),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

/// Unordered pair of distinct characters, stored with the
/// byte-lexicographically smaller name first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CharacterPair {
    first: String,
    second: String,
}

impl CharacterPair {
    /// Canonicalizes the pair; argument order never matters.
    pub fn new(a: &str, b: &str) -> Result<Self, TypeError> {
        if !valid_name(a) {
            return Err(TypeError::BadName(a.to_string()));
        }
        if !valid_name(b) {
            return Err(TypeError::BadName(b.to_string()));
        }
        if a == b {
            return Err(TypeError::SelfRelationship(a.to_string()));
        }
        let (first, second) = if a <= b { (a, b) } else { (b, a) };
        Ok(CharacterPair { first: first.to_string(), second: second.to_string() })
    }

    pub fn first(&self) -> &str {
        &self.first
    }

    pub fn second(&self) -> &str {
        &self.second
    }

    pub fn contains(&self, name: &str) -> bool {
        self.first == name || self.second == name
    }
}

impl fmt::Display for CharacterPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

/// A character pair with a polarity. Serializes as the surface string
/// `First <polarity> Second`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RelationshipTriple {
    pub pair: CharacterPair,
    pub polarity: Polarity,
}

impl RelationshipTriple {
    pub fn new(a: &str, b: &str, polarity: Polarity) -> Result<Self, TypeError> {
        Ok(RelationshipTriple { pair: CharacterPair::new(a, b)?, polarity })
    }

    pub fn surface(&self) -> String {
        format!("{} {} {}", self.pair.first(), self.polarity.angle_token(), self.pair.second())
    }
}

impl fmt::Display for RelationshipTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

impl FromStr for RelationshipTriple {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, TypeError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [a, pol, b] = parts[..] else {
            return Err(TypeError::BadTriple(s.to_string()));
        };
        if !pol.starts_with('<') {
            return Err(TypeError::BadTriple(s.to_string()));
        }
        let polarity = pol.parse().map_err(|_| TypeError::BadTriple(s.to_string()))?;
        RelationshipTriple::new(a, b, polarity)
    }
}

impl TryFrom<String> for RelationshipTriple {
    type Error = TypeError;

    fn try_from(s: String) -> Result<Self, TypeError> {
        s.parse()
    }
}

impl From<RelationshipTriple> for String {
    fn from(t: RelationshipTriple) -> String {
        t.surface()
    }
}

/// Non-empty, insertion-ordered set of relationship triples with unique
/// pairs. Insertion order is preserved through serialization round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RelationshipTriple>", into = "Vec<RelationshipTriple>")]
pub struct RelationshipSet {
    triples: Vec<RelationshipTriple>,
}

impl RelationshipSet {
    pub fn new(triples: Vec<RelationshipTriple>) -> Result<Self, TypeError> {
        if triples.is_empty() {
            return Err(TypeError::EmptySet);
        }
        for (i, t) in triples.iter().enumerate() {
            if triples[..i].iter().any(|u| u.pair == t.pair) {
                return Err(TypeError::DuplicatePair(t.pair.to_string()));
            }
        }
        Ok(RelationshipSet { triples })
    }

    /// Number of relationships K.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // K >= 1 by construction
    }

    pub fn triples(&self) -> &[RelationshipTriple] {
        &self.triples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RelationshipTriple> {
        self.triples.iter()
    }

    /// 1-based lookup matching latent indices; `None` for 0 or out of range.
    pub fn get(&self, index: usize) -> Option<&RelationshipTriple> {
        if index == 0 {
            None
        } else {
            self.triples.get(index - 1)
        }
    }

    /// Triple selected by a latent value; `None` for the null value.
    pub fn latent_triple(&self, latent: LatentValue) -> Option<&RelationshipTriple> {
        match latent {
            LatentValue::Null => None,
            LatentValue::Rel(j) => self.get(j),
        }
    }

    /// All character names in first-appearance order.
    pub fn characters(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for t in &self.triples {
            for name in [t.pair.first(), t.pair.second()] {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        names
    }
}

impl TryFrom<Vec<RelationshipTriple>> for RelationshipSet {
    type Error = TypeError;

    fn try_from(triples: Vec<RelationshipTriple>) -> Result<Self, TypeError> {
        RelationshipSet::new(triples)
    }
}

impl From<RelationshipSet> for Vec<RelationshipTriple> {
    fn from(set: RelationshipSet) -> Self {
        set.triples
    }
}

/// Non-empty token sequence; tokens are non-empty and whitespace-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self, TypeError> {
        if tokens.is_empty() {
            return Err(TypeError::EmptySentence);
        }
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TypeError::BadToken(t.clone()));
            }
        }
        Ok(Sentence { tokens })
    }

    /// Splits on whitespace; errors only on fully blank input.
    pub fn parse(text: &str) -> Result<Self, TypeError> {
        Sentence::new(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

impl TryFrom<Vec<String>> for Sentence {
    type Error = TypeError;

    fn try_from(tokens: Vec<String>) -> Result<Self, TypeError> {
        Sentence::new(tokens)
    }
}

impl From<Sentence> for Vec<String> {
    fn from(s: Sentence) -> Self {
        s.tokens
    }
}

/// A prompt sentence, follow-up sentences, and the character inventory.
/// Synthesized training stories always have at least one sentence; generated
/// stories may legitimately end before producing any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub prompt: Sentence,
    pub sentences: Vec<Sentence>,
    pub characters: Vec<String>,
}

impl Story {
    pub fn new(
        prompt: Sentence,
        sentences: Vec<Sentence>,
        characters: Vec<String>,
    ) -> Result<Self, TypeError> {
        for name in &characters {
            if !valid_name(name) {
                return Err(TypeError::BadName(name.clone()));
            }
        }
        Ok(Story { prompt, sentences, characters })
    }

    /// Context seen before sentence `i` (1-based): the prompt plus sentences
    /// `1..i`. Panics if `i` is 0 or past `T + 1`.
    pub fn context_before(&self, i: usize) -> Context<'_> {
        assert!(i >= 1 && i <= self.sentences.len() + 1, "context index {i} out of range");
        Context {
            prompt: &self.prompt,
            sentences: &self.sentences[..i - 1],
            characters: &self.characters,
        }
    }

    /// All story tokens in order, without the prompt.
    pub fn body_tokens(&self) -> Vec<String> {
        self.sentences.iter().flat_map(|s| s.tokens().iter().cloned()).collect()
    }
}

/// Read-only view of a story prefix: everything visible when deciding the
/// next sentence.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub prompt: &'a Sentence,
    pub sentences: &'a [Sentence],
    pub characters: &'a [String],
}

impl<'a> Context<'a> {
    pub fn new(prompt: &'a Sentence, sentences: &'a [Sentence], characters: &'a [String]) -> Self {
        Context { prompt, sentences, characters }
    }

    /// Number of non-prompt sentences already in the context.
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// All context tokens, prompt first.
    pub fn tokens(&self) -> impl Iterator<Item = &'a String> + '_ {
        self.prompt.tokens().iter().chain(self.sentences.iter().flat_map(|s| s.tokens().iter()))
    }
}

/// Per-sentence latent assignment: the null value or a 1-based index into
/// the story's relationship set. Serializes as the candidate index, with 0
/// meaning null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum LatentValue {
    Null,
    Rel(usize),
}

impl LatentValue {
    /// Position in the candidate list `[null, r1, ..., rK]`.
    pub fn candidate_index(self) -> usize {
        match self {
            LatentValue::Null => 0,
            LatentValue::Rel(j) => j,
        }
    }

    pub fn from_candidate_index(index: usize) -> Self {
        if index == 0 {
            LatentValue::Null
        } else {
            LatentValue::Rel(index)
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, LatentValue::Null)
    }
}

impl TryFrom<usize> for LatentValue {
    type Error = TypeError;

    fn try_from(index: usize) -> Result<Self, TypeError> {
        Ok(LatentValue::from_candidate_index(index))
    }
}

impl From<LatentValue> for usize {
    fn from(v: LatentValue) -> usize {
        v.candidate_index()
    }
}

/// One latent value per story sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentTrace(pub Vec<LatentValue>);

impl LatentTrace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LatentValue> {
        self.0.iter()
    }

    /// Checks alignment with a story of `t` sentences and `k` relationships.
    pub fn validate(&self, t: usize, k: usize) -> Result<(), TypeError> {
        if self.0.len() != t {
            return Err(TypeError::LatentOutOfRange { index: self.0.len(), k: t });
        }
        for v in &self.0 {
            if let LatentValue::Rel(j) = v {
                if *j == 0 || *j > k {
                    return Err(TypeError::LatentOutOfRange { index: *j, k });
                }
            }
        }
        Ok(())
    }
}
