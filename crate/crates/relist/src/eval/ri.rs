//! Relationship identification: recover the relationships a finished story
//! expresses, using only its tokens, and grade them against the requested
//! set.
//!
//! Raw sentences carry no mention-role analysis, so a pattern step rebuilds
//! one: the anchor is the sentence's first lexicon entry (any valence,
//! including zero), the subject is the closest inventory name before the
//! anchor, and the object is the first inventory name after it. The analyzed
//! sentences then run through the same pooling annotator used for silver
//! labels, so identification and annotation can never drift apart.
//!
//! Each story's identified set is graded as one of three mutually exclusive
//! outcomes: exact (identified equals requested), underspecified (a proper
//! subset, the empty set included), or incorrect (anything identified that
//! was never requested, a wrong polarity included).

use crate::annotator::annotate_story;
use crate::corpus::{AnalyzedSentence, Mention, MentionRole};
use crate::lexicon::SentimentLexicon;
use crate::types::{RelationshipSet, RelationshipTriple, Sentence, Story};
use serde::{Deserialize, Serialize};

/// Rebuilds a mention analysis for one raw sentence from the anchor pattern.
pub fn analyze_sentence_pattern(
    sentence: &Sentence,
    inventory: &[String],
    lexicon: &SentimentLexicon,
) -> AnalyzedSentence {
    let tokens = sentence.tokens();
    let is_name = |i: usize| inventory.iter().any(|n| n == &tokens[i]);
    let mut subject: Option<usize> = None;
    let mut object: Option<usize> = None;
    if let Some(anchor) = tokens.iter().position(|t| lexicon.contains(t)) {
        subject = (0..anchor).rev().find(|&i| is_name(i));
        object = (anchor + 1..tokens.len()).find(|&i| is_name(i));
    }
    let mentions = (0..tokens.len())
        .filter(|&i| is_name(i))
        .map(|i| Mention {
            name: tokens[i].clone(),
            position: i,
            role: if Some(i) == subject {
                MentionRole::SubjectOfMainVerb
            } else if Some(i) == object {
                MentionRole::ObjectOfMainVerb
            } else {
                MentionRole::Other
            },
        })
        .collect();
    AnalyzedSentence { tokens: tokens.to_vec(), mentions }
}

/// Relationships a story expresses, via pattern analysis plus the pooling
/// annotator. Empty when no sentence anchors a pair.
pub fn identify_relationships(story: &Story, lexicon: &SentimentLexicon) -> Vec<RelationshipTriple> {
    let analyzed: Vec<AnalyzedSentence> = story
        .sentences
        .iter()
        .map(|s| analyze_sentence_pattern(s, &story.characters, lexicon))
        .collect();
    let silver = annotate_story(story, &analyzed, lexicon)
        .expect("analysis built from the story always aligns");
    match silver {
        Some(silver) => silver.relationships.triples().to_vec(),
        None => Vec::new(),
    }
}

/// Per-story identification grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiOutcome {
    Exact,
    Unspec,
    Incorrect,
}

impl RiOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RiOutcome::Exact => "exact",
            RiOutcome::Unspec => "unspec",
            RiOutcome::Incorrect => "incorrect",
        }
    }
}

/// Grades one identified set against the requested relationships.
pub fn classify_identification(
    requested: &RelationshipSet,
    identified: &[RelationshipTriple],
) -> RiOutcome {
    let subset = identified.iter().all(|t| requested.iter().any(|r| r == t));
    if !subset {
        return RiOutcome::Incorrect;
    }
    let complete = requested.iter().all(|r| identified.iter().any(|t| t == r));
    if complete {
        RiOutcome::Exact
    } else {
        RiOutcome::Unspec
    }
}

/// Aggregate identification metrics. The three percentages partition the
/// story set and sum to 100 whenever `defined` holds; `avg_rel` is the mean
/// number of identified relationships per story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiReport {
    pub stories: usize,
    pub defined: bool,
    pub pct_exact: f64,
    pub pct_unspec: f64,
    pub pct_incorrect: f64,
    pub avg_rel: f64,
}

/// Summarizes per-story grades; each entry pairs the grade with the number
/// of identified relationships.
pub fn ri_metrics(outcomes: &[(RiOutcome, usize)]) -> RiReport {
    let stories = outcomes.len();
    if stories == 0 {
        return RiReport {
            stories: 0,
            defined: false,
            pct_exact: 0.0,
            pct_unspec: 0.0,
            pct_incorrect: 0.0,
            avg_rel: 0.0,
        };
    }
    let mut counts = [0usize; 3];
    let mut total_rel = 0usize;
    for (outcome, identified) in outcomes {
        let slot = match outcome {
            RiOutcome::Exact => 0,
            RiOutcome::Unspec => 1,
            RiOutcome::Incorrect => 2,
        };
        counts[slot] += 1;
        total_rel += identified;
    }
    let pct = |c: usize| 100.0 * c as f64 / stories as f64;
    RiReport {
        stories,
        defined: true,
        pct_exact: pct(counts[0]),
        pct_unspec: pct(counts[1]),
        pct_incorrect: pct(counts[2]),
        avg_rel: total_rel as f64 / stories as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Polarity;

    fn story(characters: &[&str], sentences: &[&str]) -> Story {
        Story::new(
            Sentence::parse("the friends lived in the town .").unwrap(),
            sentences.iter().map(|s| Sentence::parse(s).unwrap()).collect(),
            characters.iter().map(|c| c.to_string()).collect(),
        )
        .unwrap()
    }

    fn triple(a: &str, b: &str, p: Polarity) -> RelationshipTriple {
        RelationshipTriple::new(a, b, p).unwrap()
    }

    #[test]
    fn neutral_anchor_attributes_the_pair_and_pooling_sets_polarity() {
        // "tells" carries zero valence but still anchors the pair, so the
        // first sentence joins the pool and the second tips it positive.
        let lexicon = SentimentLexicon::bundled();
        let s = story(
            &["Jonny", "Curtis"],
            &["Curtis tells Jonny a secret .", "Curtis helps Jonny ."],
        );
        let identified = identify_relationships(&s, &lexicon);
        assert_eq!(identified, vec![triple("Curtis", "Jonny", Polarity::Positive)]);
    }

    #[test]
    fn anchor_pattern_picks_nearest_names_around_the_verb() {
        let lexicon = SentimentLexicon::bundled();
        let sentence = Sentence::parse("one day Ann and Bea meets Cal .").unwrap();
        let inventory: Vec<String> = ["Ann", "Bea", "Cal"].map(String::from).to_vec();
        // The anchor is "meets"; Bea is the closest name before it, Cal the
        // first after, and Ann is left as a plain mention.
        let analyzed = analyze_sentence_pattern(&sentence, &inventory, &lexicon);
        let roles: Vec<(&str, MentionRole)> =
            analyzed.mentions.iter().map(|m| (m.name.as_str(), m.role)).collect();
        assert_eq!(
            roles,
            vec![
                ("Ann", MentionRole::Other),
                ("Bea", MentionRole::SubjectOfMainVerb),
                ("Cal", MentionRole::ObjectOfMainVerb),
            ]
        );
    }

    #[test]
    fn sentences_without_anchor_or_pair_identify_nothing() {
        let lexicon = SentimentLexicon::bundled();
        let s = story(&["Ann", "Bea"], &["Ann walked to the market .", "the sky was grey ."]);
        assert!(identify_relationships(&s, &lexicon).is_empty());
        // A reflexive pattern is not a pair either.
        let s = story(&["Ann", "Bea"], &["Ann admires Ann ."]);
        assert!(identify_relationships(&s, &lexicon).is_empty());
    }

    #[test]
    fn grading_partitions_into_exact_unspec_incorrect() {
        let requested = RelationshipSet::new(vec![
            triple("Ann", "Bea", Polarity::Positive),
            triple("Cal", "Dee", Polarity::Negative),
        ])
        .unwrap();
        let exact = vec![
            triple("Cal", "Dee", Polarity::Negative),
            triple("Ann", "Bea", Polarity::Positive),
        ];
        assert_eq!(classify_identification(&requested, &exact), RiOutcome::Exact);
        let subset = vec![triple("Ann", "Bea", Polarity::Positive)];
        assert_eq!(classify_identification(&requested, &subset), RiOutcome::Unspec);
        assert_eq!(classify_identification(&requested, &[]), RiOutcome::Unspec);
        // Right pair, wrong polarity.
        let flipped = vec![triple("Ann", "Bea", Polarity::Negative)];
        assert_eq!(classify_identification(&requested, &flipped), RiOutcome::Incorrect);
        // A correct triple plus an unrequested pair is still incorrect.
        let extra = vec![
            triple("Ann", "Bea", Polarity::Positive),
            triple("Ann", "Dee", Polarity::Neutral),
        ];
        assert_eq!(classify_identification(&requested, &extra), RiOutcome::Incorrect);
    }

    #[test]
    fn metrics_partition_sums_to_one_hundred() {
        let outcomes = vec![(RiOutcome::Unspec, 1), (RiOutcome::Incorrect, 2)];
        let report = ri_metrics(&outcomes);
        assert!(report.defined);
        assert_eq!(report.pct_exact, 0.0);
        assert_eq!(report.pct_unspec, 50.0);
        assert_eq!(report.pct_incorrect, 50.0);
        assert_eq!(report.avg_rel, 1.5);
        let total = report.pct_exact + report.pct_unspec + report.pct_incorrect;
        assert!((total - 100.0).abs() < 1e-9);

        let empty = ri_metrics(&[]);
        assert!(!empty.defined);
    }

    #[test]
    fn identification_recovers_silver_on_clean_stories() {
        // Each pair's own sentences pool independently.
        let lexicon = SentimentLexicon::bundled();
        let s = story(
            &["Ann", "Bea", "Cal"],
            &[
                "Ann helps Bea .",
                "the sky was grey .",
                "Cal blames Ann .",
                "one day Ann thanks Bea .",
            ],
        );
        let identified = identify_relationships(&s, &lexicon);
        assert_eq!(
            identified,
            vec![
                triple("Ann", "Bea", Polarity::Positive),
                triple("Ann", "Cal", Polarity::Negative),
            ]
        );
    }
}
