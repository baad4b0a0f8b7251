//! Name delexicalization. Language models never see raw character names;
//! they see `<CHARk>` placeholders. Ranks come from first appearance in a
//! token stream over an eligible name list, so the sentence "who acts first"
//! shape survives while identities drop out.

use super::vocab::{char_placeholder, char_placeholder_rank};

/// Name order for whole-inventory delexicalization: every inventory name in
/// order of first appearance in `stream`, then absentees in inventory order.
pub fn char_list_name_order<'a, I>(stream: I, characters: &[String]) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut order: Vec<String> = Vec::with_capacity(characters.len());
    for token in stream {
        if characters.iter().any(|c| c == token) && !order.iter().any(|n| n == token) {
            order.push(token.to_string());
            if order.len() == characters.len() {
                break;
            }
        }
    }
    for c in characters {
        if !order.iter().any(|n| n == c) {
            order.push(c.clone());
        }
    }
    order
}

/// Replaces each token equal to `names[k]` with `<CHARk+1>`; other tokens
/// pass through.
pub fn apply_name_map<S: AsRef<str>>(tokens: &[S], names: &[String]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            match names.iter().position(|n| n == t) {
                Some(k) => char_placeholder(k + 1),
                None => t.to_string(),
            }
        })
        .collect()
}

/// Inverse of [`apply_name_map`]: `<CHARk>` becomes `names[k-1]`. Placeholders
/// with no entry pass through unchanged.
pub fn relexicalize<S: AsRef<str>>(tokens: &[S], names: &[String]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            match char_placeholder_rank(t) {
                Some(k) if k <= names.len() => names[k - 1].clone(),
                _ => t.to_string(),
            }
        })
        .collect()
}
