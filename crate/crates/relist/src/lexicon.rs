//! Sentiment lexicon: a token-to-valence map. Tokens absent from the map
//! score zero, which is distinct from being present with valence zero only
//! for pattern anchoring (a present token marks an interaction verb even
//! when its valence is neutral).

use crate::types::Polarity;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: expected `token<TAB>valence`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("lexicon line {line}: token {token:?} listed twice")]
    Duplicate { line: usize, token: String },
    #[error("lexicon line {line}: non-finite valence for {token:?}")]
    NonFinite { line: usize, token: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    valence: BTreeMap<String, f64>,
}

impl SentimentLexicon {
    pub fn new(valence: BTreeMap<String, f64>) -> Self {
        SentimentLexicon { valence }
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../assets/lexicon.tsv"))
            .expect("bundled lexicon must parse")
    }

    /// Parses `token<TAB>valence` lines; `#` starts a comment, blank lines
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut valence = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split('\t');
            let (Some(token), Some(value), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(LexiconError::Malformed { line, text: raw.to_string() });
            };
            let token = token.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| LexiconError::Malformed { line, text: raw.to_string() })?;
            if !value.is_finite() {
                return Err(LexiconError::NonFinite { line, token: token.to_string() });
            }
            if valence.insert(token.to_string(), value).is_some() {
                return Err(LexiconError::Duplicate { line, token: token.to_string() });
            }
        }
        Ok(SentimentLexicon { valence })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Valence of a token; unknown tokens score 0.
    pub fn lookup(&self, token: &str) -> f64 {
        self.valence.get(token).copied().unwrap_or(0.0)
    }

    /// Whether the token is an entry at all (any valence, including 0).
    pub fn contains(&self, token: &str) -> bool {
        self.valence.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    /// Entries whose valence falls in the given polarity class, sorted by
    /// token. Positive class is valence > 0, negative < 0, neutral == 0.
    pub fn class_entries(&self, polarity: Polarity) -> Vec<&str> {
        self.valence
            .iter()
            .filter(|(_, &v)| match polarity {
                Polarity::Positive => v > 0.0,
                Polarity::Negative => v < 0.0,
                Polarity::Neutral => v == 0.0,
            })
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_has_three_verbs_per_class() {
        let lex = SentimentLexicon::bundled();
        for p in Polarity::ALL {
            assert!(lex.class_entries(p).len() >= 3, "class {p} too small");
        }
        assert_eq!(lex.lookup("loves"), 1.0);
        assert_eq!(lex.lookup("hates"), -1.0);
        assert_eq!(lex.lookup("meets"), 0.0);
        assert!(lex.contains("meets"));
        assert!(!lex.contains("walked"));
    }

    #[test]
    fn parse_handles_comments_blanks_and_errors() {
        let lex = SentimentLexicon::parse("# header\n\nloves\t2.5\nhits\t-1.0 # inline\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.lookup("hits"), -1.0);

        let err = SentimentLexicon::parse("loves 2.5").unwrap_err();
        assert!(matches!(err, LexiconError::Malformed { line: 1, .. }));

        let err = SentimentLexicon::parse("loves\t1.0\nloves\t2.0").unwrap_err();
        assert!(matches!(err, LexiconError::Duplicate { line: 2, .. }));

        let err = SentimentLexicon::parse("loves\tnan").unwrap_err();
        assert!(matches!(err, LexiconError::NonFinite { .. }));
    }

    #[test]
    fn unknown_tokens_score_zero() {
        let lex = SentimentLexicon::parse("loves\t3.0").unwrap();
        assert_eq!(lex.lookup("Alice"), 0.0);
        assert!(!lex.contains("Alice"));
    }
}
