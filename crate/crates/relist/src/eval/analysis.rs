//! Structural analyses of generated latent traces and text: polarity-class
//! transition structure, where relationship sentences land inside stories,
//! and the most frequent content n-grams per polarity.

use crate::generator::GeneratedStory;
use crate::types::{LatentValue, Polarity, RelationshipSet};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Row and column order of the transition matrix: the three polarities, then
/// the null class.
pub const TRANSITION_CLASSES: [&str; 4] = ["positive", "neutral", "negative", "null"];

fn trace_class(relationships: &RelationshipSet, latent: LatentValue) -> usize {
    match relationships.latent_triple(latent) {
        Some(triple) => triple.polarity.index(),
        None => 3,
    }
}

/// Class-to-class transition structure over consecutive sentences. Pairs
/// that stay in the same class are dropped, so the diagonal is zero by
/// construction and each row describes where the story goes when its class
/// actually changes. Rows with no outgoing changes are all zero and flagged
/// undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub matrix: [[f64; 4]; 4],
    pub counts: [[usize; 4]; 4],
    pub row_defined: [bool; 4],
}

pub fn transition_matrix(stories: &[GeneratedStory]) -> TransitionReport {
    let mut counts = [[0usize; 4]; 4];
    for story in stories {
        let classes: Vec<usize> =
            story.trace.iter().map(|&v| trace_class(&story.relationships, v)).collect();
        for w in classes.windows(2) {
            if w[0] != w[1] {
                counts[w[0]][w[1]] += 1;
            }
        }
    }
    let mut matrix = [[0.0f64; 4]; 4];
    let mut row_defined = [false; 4];
    for r in 0..4 {
        let total: usize = counts[r].iter().sum();
        if total > 0 {
            row_defined[r] = true;
            for c in 0..4 {
                matrix[r][c] = counts[r][c] as f64 / total as f64;
            }
        }
    }
    TransitionReport { matrix, counts, row_defined }
}

/// Where relationship sentences fall within their stories, as percentages
/// over story thirds. Undefined when no relationship sentence exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub rel_sentences: usize,
    pub defined: bool,
    pub early_pct: f64,
    pub middle_pct: f64,
    pub late_pct: f64,
}

pub fn position_distribution(stories: &[GeneratedStory]) -> PositionReport {
    let mut thirds = [0usize; 3];
    for story in stories {
        let t = story.trace.len();
        for (i, latent) in story.trace.iter().enumerate() {
            if !latent.is_null() {
                thirds[3 * i / t] += 1;
            }
        }
    }
    let total: usize = thirds.iter().sum();
    if total == 0 {
        return PositionReport {
            rel_sentences: 0,
            defined: false,
            early_pct: 0.0,
            middle_pct: 0.0,
            late_pct: 0.0,
        };
    }
    let pct = |c: usize| 100.0 * c as f64 / total as f64;
    PositionReport {
        rel_sentences: total,
        defined: true,
        early_pct: pct(thirds[0]),
        middle_pct: pct(thirds[1]),
        late_pct: pct(thirds[2]),
    }
}

/// Function-word list excluded from top n-gram summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn new<I: IntoIterator<Item = String>>(words: I) -> Self {
        Stopwords(words.into_iter().collect())
    }

    /// The list shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../../assets/stopwords.txt"))
    }

    /// One word per line; `#` starts a comment, blanks are skipped.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramEntry {
    pub ngram: String,
    pub count: usize,
}

/// Most frequent content n-grams of relationship sentences, grouped by the
/// latent's polarity: polarity name, then n as a string key, then entries
/// sorted by count descending with lexicographic tie-break.
pub type TopNgrams = BTreeMap<String, BTreeMap<String, Vec<NgramEntry>>>;

/// Maximum n-gram length the summary reports.
pub const TOP_NGRAM_MAX_ORDER: usize = 3;

fn content_gram(gram: &[String], inventory: &[String], stopwords: &Stopwords) -> bool {
    gram.iter().all(|t| {
        !stopwords.contains(t)
            && !inventory.iter().any(|n| n == t)
            && t.chars().any(char::is_alphanumeric)
    })
}

pub fn top_ngrams(stories: &[GeneratedStory], stopwords: &Stopwords, top_k: usize) -> TopNgrams {
    let mut counts: [[HashMap<String, usize>; TOP_NGRAM_MAX_ORDER]; 3] = Default::default();
    for story in stories {
        for (sentence, latent) in story.story.sentences.iter().zip(story.trace.iter()) {
            let Some(triple) = story.relationships.latent_triple(*latent) else { continue };
            let class = triple.polarity.index();
            for n in 1..=TOP_NGRAM_MAX_ORDER {
                let tokens = sentence.tokens();
                if tokens.len() < n {
                    continue;
                }
                for gram in tokens.windows(n) {
                    if content_gram(gram, &story.story.characters, stopwords) {
                        *counts[class][n - 1].entry(gram.join(" ")).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut out = TopNgrams::new();
    for polarity in Polarity::ALL {
        let mut by_n = BTreeMap::new();
        for n in 1..=TOP_NGRAM_MAX_ORDER {
            let mut entries: Vec<NgramEntry> = counts[polarity.index()][n - 1]
                .iter()
                .map(|(g, &c)| NgramEntry { ngram: g.clone(), count: c })
                .collect();
            entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.ngram.cmp(&b.ngram)));
            entries.truncate(top_k);
            by_n.insert(n.to_string(), entries);
        }
        out.insert(polarity.as_str().to_string(), by_n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GenMode, Termination};
    use crate::types::{LatentTrace, RelationshipTriple, Sentence, Story};

    fn stub_story(
        sentences: &[&str],
        trace: Vec<LatentValue>,
        triples: Vec<RelationshipTriple>,
    ) -> GeneratedStory {
        let relationships = RelationshipSet::new(triples).unwrap();
        let characters = relationships.characters();
        GeneratedStory {
            mode: GenMode::ReList,
            seed: 0,
            relationships,
            story: Story::new(
                Sentence::parse("Ann and Bea lived in the town .").unwrap(),
                sentences.iter().map(|s| Sentence::parse(s).unwrap()).collect(),
                characters,
            )
            .unwrap(),
            trace: LatentTrace(trace),
            termination: Termination::MaxSentences,
        }
    }

    fn pos_neg_triples() -> Vec<RelationshipTriple> {
        vec![
            RelationshipTriple::new("Ann", "Bea", Polarity::Positive).unwrap(),
            RelationshipTriple::new("Ann", "Cal", Polarity::Negative).unwrap(),
        ]
    }

    #[test]
    fn transitions_skip_same_class_pairs_and_normalize_rows() {
        use LatentValue::{Null, Rel};
        // Classes along the trace: pos pos null neg null. Counted changes:
        // pos->null, null->neg, neg->null.
        let story = stub_story(
            &["a .", "b .", "c .", "d .", "e ."],
            vec![Rel(1), Rel(1), Null, Rel(2), Null],
            pos_neg_triples(),
        );
        let report = transition_matrix(&[story]);
        assert_eq!(report.counts[0][3], 1);
        assert_eq!(report.counts[3][2], 1);
        assert_eq!(report.counts[2][3], 1);
        let total: usize = report.counts.iter().flatten().sum();
        assert_eq!(total, 3);
        for r in 0..4 {
            assert_eq!(report.counts[r][r], 0, "diagonal row {r}");
            let row_sum: f64 = report.matrix[r].iter().sum();
            if report.row_defined[r] {
                assert!((row_sum - 1.0).abs() < 1e-12, "row {r} sums to {row_sum}");
            } else {
                assert_eq!(row_sum, 0.0);
            }
        }
        assert!(!report.row_defined[1], "no neutral transitions in this trace");
    }

    #[test]
    fn positions_bucket_relationship_sentences_by_story_third() {
        use LatentValue::{Null, Rel};
        // Six sentences: rel at indices 0 and 1 (early, early), 3 (middle),
        // 5 (late).
        let story = stub_story(
            &["a .", "b .", "c .", "d .", "e .", "f ."],
            vec![Rel(1), Rel(1), Null, Rel(2), Null, Rel(1)],
            pos_neg_triples(),
        );
        let report = position_distribution(&[story]);
        assert!(report.defined);
        assert_eq!(report.rel_sentences, 4);
        assert_eq!(report.early_pct, 50.0);
        assert_eq!(report.middle_pct, 25.0);
        assert_eq!(report.late_pct, 25.0);
        let total = report.early_pct + report.middle_pct + report.late_pct;
        assert!((total - 100.0).abs() < 1e-9);

        let empty = position_distribution(&[]);
        assert!(!empty.defined);
    }

    #[test]
    fn top_ngrams_drop_function_words_names_and_punctuation() {
        use LatentValue::Rel;
        let stopwords = Stopwords::bundled();
        let story = stub_story(
            &["Ann helps Bea .", "Ann helps Bea .", "Ann hugs Bea ."],
            vec![Rel(1), Rel(1), Rel(1)],
            vec![RelationshipTriple::new("Ann", "Bea", Polarity::Positive).unwrap()],
        );
        let top = top_ngrams(&[story], &stopwords, 5);
        let unigrams = &top["positive"]["1"];
        assert_eq!(unigrams.len(), 2);
        assert_eq!(unigrams[0].ngram, "helps");
        assert_eq!(unigrams[0].count, 2);
        assert_eq!(unigrams[1].ngram, "hugs");
        assert_eq!(unigrams[1].count, 1);
        // Bigrams and trigrams all touch a name or the period.
        assert!(top["positive"]["2"].is_empty());
        assert!(top["negative"]["1"].is_empty());
    }

    #[test]
    fn top_ngram_ties_break_lexicographically() {
        use LatentValue::Rel;
        let stopwords = Stopwords::bundled();
        let story = stub_story(
            &["Ann hugs Bea .", "Ann helps Bea ."],
            vec![Rel(1), Rel(1)],
            vec![RelationshipTriple::new("Ann", "Bea", Polarity::Positive).unwrap()],
        );
        let top = top_ngrams(&[story], &stopwords, 5);
        let unigrams = &top["positive"]["1"];
        assert_eq!(unigrams[0].ngram, "helps");
        assert_eq!(unigrams[1].ngram, "hugs");
    }

    #[test]
    fn stopword_list_parses_with_comments() {
        let sw = Stopwords::parse("# heading\nthe\n\nand # trailing\n");
        assert_eq!(sw.len(), 2);
        assert!(sw.contains("the"));
        assert!(sw.contains("and"));
        assert!(!sw.contains("helps"));
        assert!(Stopwords::bundled().contains("the"));
    }
}
