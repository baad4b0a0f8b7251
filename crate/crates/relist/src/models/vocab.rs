//! Token vocabulary shared by the language models of one trained bundle.
//! Ids 0 through 8 are reserved and identical in every vocabulary; all other
//! ids are assigned in interning order.

use crate::types::Polarity;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const BOS: &str = "<BOS>";
pub const EOS_SENT: &str = "<EOS-SENT>";
pub const EOS_STORY: &str = "<EOS-STORY>";
pub const UNK: &str = "<UNK>";
pub const REL_OPEN: &str = "<@>";
pub const REL_CLOSE: &str = "<$>";

pub const BOS_ID: u32 = 0;
pub const EOS_SENT_ID: u32 = 1;
pub const EOS_STORY_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const CHAR1_ID: u32 = 4;
pub const CHAR2_ID: u32 = 5;

const RESERVED: [&str; 9] = [
    BOS,
    EOS_SENT,
    EOS_STORY,
    UNK,
    "<CHAR1>",
    "<CHAR2>",
    "<POL:positive>",
    "<POL:neutral>",
    "<POL:negative>",
];

/// Placeholder token for the k-th character, 1-based.
pub fn char_placeholder(k: usize) -> String {
    format!("<CHAR{k}>")
}

/// Inverse of [`char_placeholder`]; `None` for anything else.
pub fn char_placeholder_rank(token: &str) -> Option<usize> {
    let inner = token.strip_prefix("<CHAR")?.strip_suffix('>')?;
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    inner.parse().ok().filter(|&k| k >= 1)
}

/// Polarity prefix token fed to a language model ahead of the sentence.
pub fn pol_token(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "<POL:positive>",
        Polarity::Neutral => "<POL:neutral>",
        Polarity::Negative => "<POL:negative>",
    }
}

/// Angle-bracketed control tokens. These never appear in sampled text; the
/// sampler bans them wholesale, with narrow exceptions for `<CHARk>` and the
/// end-of-sentence/story markers handled by position rules.
pub fn is_markup(token: &str) -> bool {
    token.len() >= 2 && token.starts_with('<') && token.ends_with('>')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED {
            v.intern(t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    /// Id for `token`, assigning the next free id on first sight.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn intern_all<S: AsRef<str>>(&mut self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.intern(t.as_ref())).collect()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id for `token`, falling back to the unknown-token id.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn ids_or_unk<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Panics on an id this vocabulary never produced.
    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens_for(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&id| self.token(id).to_string()).collect()
    }

    pub fn pol_id(p: Polarity) -> u32 {
        6 + p.index() as u32
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < RESERVED.len() {
            return Err(format!("vocabulary has {} tokens, need the {} reserved", tokens.len(), RESERVED.len()));
        }
        for (i, want) in RESERVED.iter().enumerate() {
            if tokens[i] != *want {
                return Err(format!("reserved slot {i} holds {:?}, want {want:?}", tokens[i]));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        Ok(Vocabulary { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::new();
        assert_eq!(v.len(), 9);
        assert_eq!(v.id(BOS), Some(BOS_ID));
        assert_eq!(v.id(EOS_SENT), Some(EOS_SENT_ID));
        assert_eq!(v.id(EOS_STORY), Some(EOS_STORY_ID));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.id("<CHAR1>"), Some(CHAR1_ID));
        assert_eq!(v.id("<CHAR2>"), Some(CHAR2_ID));
        assert_eq!(v.id(pol_token(Polarity::Positive)), Some(6));
        assert_eq!(v.id(pol_token(Polarity::Neutral)), Some(7));
        assert_eq!(v.id(pol_token(Polarity::Negative)), Some(8));
        assert_eq!(Vocabulary::pol_id(Polarity::Negative), 8);
    }

    #[test]
    fn interning_is_idempotent_and_lookup_falls_back_to_unk() {
        let mut v = Vocabulary::new();
        let a = v.intern("alpha");
        assert_eq!(v.intern("alpha"), a);
        assert_eq!(v.id_or_unk("alpha"), a);
        assert_eq!(v.id_or_unk("never-seen"), UNK_ID);
        assert_eq!(v.token(a), "alpha");
    }

    #[test]
    fn char_placeholders_round_trip() {
        assert_eq!(char_placeholder(3), "<CHAR3>");
        assert_eq!(char_placeholder_rank("<CHAR3>"), Some(3));
        assert_eq!(char_placeholder_rank("<CHAR12>"), Some(12));
        assert_eq!(char_placeholder_rank("<CHAR0>"), None);
        assert_eq!(char_placeholder_rank("<CHARX>"), None);
        assert_eq!(char_placeholder_rank("<CHAR>"), None);
        assert_eq!(char_placeholder_rank("plain"), None);
    }

    #[test]
    fn markup_detection() {
        assert!(is_markup("<BOS>"));
        assert!(is_markup("<@>"));
        assert!(is_markup("<positive>"));
        assert!(!is_markup("word"));
        assert!(!is_markup("<unclosed"));
        assert!(!is_markup("closed>"));
    }

    #[test]
    fn serde_round_trip_preserves_ids() {
        let mut v = Vocabulary::new();
        v.intern("zebra");
        v.intern("apple");
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("zebra"), Some(9));
        assert_eq!(back.id("apple"), Some(10));

        let bad = serde_json::to_string(&vec!["<BOS>", "wrong"]).unwrap();
        assert!(serde_json::from_str::<Vocabulary>(&bad).is_err());
    }
}
