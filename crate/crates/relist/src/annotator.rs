//! Silver relationship annotation. Stories arrive with per-sentence mention
//! analyses; annotation finds sentences where two distinct characters fill
//! the subject and object of the main verb, pools each pair's sentences,
//! scores pooled sentiment with the lexicon, and emits one polarity triple
//! per pair. Sentences outside any pooled pair get the null label, and
//! stories with no eligible pair at all are discarded.

use crate::corpus::{AnalyzedSentence, GoldStory, MentionRole};
use crate::lexicon::SentimentLexicon;
use crate::types::{
    CharacterPair, LatentTrace, LatentValue, Polarity, RelationshipSet, RelationshipTriple, Story,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const ANNOTATED_FORMAT: &str = "relist-annotated-v1";

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("story {story}: {analyzed} analyzed sentences for {sentences} story sentences")]
    Alignment { story: usize, analyzed: usize, sentences: usize },
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
}

/// Summed sentiment over a token span: positive mass, negative mass, and the
/// count of zero-valence tokens (unknown tokens included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityScores {
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
}

pub fn score_sentiment<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> PolarityScores {
    let mut scores = PolarityScores { pos: 0.0, neg: 0.0, neu: 0.0 };
    for t in tokens {
        let v = lexicon.lookup(t.as_ref());
        if v > 0.0 {
            scores.pos += v;
        } else if v < 0.0 {
            scores.neg += -v;
        } else {
            scores.neu += 1.0;
        }
    }
    scores
}

/// Positive iff positive mass strictly dominates, negative iff negative mass
/// strictly dominates, neutral otherwise (ties included).
pub fn polarity_of(scores: PolarityScores) -> Polarity {
    if scores.pos > scores.neg {
        Polarity::Positive
    } else if scores.neg > scores.pos {
        Polarity::Negative
    } else {
        Polarity::Neutral
    }
}

/// The canonical pair expressed by a sentence, if it has exactly one
/// subject-of-main-verb mention and one object-of-main-verb mention naming
/// distinct characters.
pub fn eligible_pair(sentence: &AnalyzedSentence) -> Option<CharacterPair> {
    let mut subject: Option<&str> = None;
    let mut object: Option<&str> = None;
    for m in &sentence.mentions {
        match m.role {
            MentionRole::SubjectOfMainVerb => {
                if subject.is_some() {
                    return None;
                }
                subject = Some(&m.name);
            }
            MentionRole::ObjectOfMainVerb => {
                if object.is_some() {
                    return None;
                }
                object = Some(&m.name);
            }
            MentionRole::Other => {}
        }
    }
    let (s, o) = (subject?, object?);
    CharacterPair::new(s, o).ok()
}

/// Silver output for one story: pooled pair polarities and per-sentence
/// latent labels aligned with the silver relationship order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilverAnnotation {
    pub relationships: RelationshipSet,
    pub sentence_labels: LatentTrace,
}

/// A story paired with its silver annotation; the unit the trainer consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStory {
    pub story: Story,
    pub silver: SilverAnnotation,
}

impl AnnotatedStory {
    pub fn validate(&self) -> Result<(), String> {
        self.silver
            .sentence_labels
            .validate(self.story.sentences.len(), self.silver.relationships.len())
            .map_err(|e| e.to_string())?;
        for name in self.silver.relationships.characters() {
            if !self.story.characters.iter().any(|c| c == &name) {
                return Err(format!("relationship character {name:?} not in the story cast"));
            }
        }
        Ok(())
    }
}

/// Runs the four-step silver pipeline on one story. Returns `None` when no
/// sentence is eligible (the story is discarded).
pub fn annotate_story(
    story: &Story,
    analyzed: &[AnalyzedSentence],
    lexicon: &SentimentLexicon,
) -> Result<Option<SilverAnnotation>, AnnotateError> {
    if analyzed.len() != story.sentences.len() {
        return Err(AnnotateError::Alignment {
            story: 0,
            analyzed: analyzed.len(),
            sentences: story.sentences.len(),
        });
    }

    // Step 1+2: per-sentence eligible pairs.
    let eligible: Vec<Option<CharacterPair>> = analyzed.iter().map(eligible_pair).collect();

    // Step 3: group sentence indices by pair, first-seen order.
    let mut groups: Vec<(CharacterPair, Vec<usize>)> = Vec::new();
    for (i, pair) in eligible.iter().enumerate() {
        let Some(pair) = pair else { continue };
        match groups.iter_mut().find(|(p, _)| p == pair) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((pair.clone(), vec![i])),
        }
    }
    if groups.is_empty() {
        return Ok(None);
    }

    // Step 4: pooled sentiment per pair; everything else is null.
    let triples: Vec<RelationshipTriple> = groups
        .iter()
        .map(|(pair, idxs)| {
            let pooled: Vec<&String> =
                idxs.iter().flat_map(|&i| analyzed[i].tokens.iter()).collect();
            RelationshipTriple {
                pair: pair.clone(),
                polarity: polarity_of(score_sentiment(&pooled, lexicon)),
            }
        })
        .collect();
    let relationships = RelationshipSet::new(triples).expect("non-empty, unique pairs");

    let labels: Vec<LatentValue> = eligible
        .iter()
        .map(|pair| match pair {
            Some(p) => {
                let j = groups.iter().position(|(gp, _)| gp == p).expect("grouped") + 1;
                LatentValue::Rel(j)
            }
            None => LatentValue::Null,
        })
        .collect();

    Ok(Some(SilverAnnotation { relationships, sentence_labels: LatentTrace(labels) }))
}

/// Aggregate silver statistics over an annotated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub stories_in: usize,
    pub stories_kept: usize,
    pub stories_discarded: usize,
    pub total_relationships: usize,
    pub mean_relationships_per_story: f64,
    pub polarity_counts: [usize; 3],
    pub polarity_shares: [f64; 3],
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stories_in             {}", self.stories_in)?;
        writeln!(f, "stories_kept           {}", self.stories_kept)?;
        writeln!(f, "stories_discarded      {}", self.stories_discarded)?;
        writeln!(f, "total_relationships    {}", self.total_relationships)?;
        writeln!(f, "mean_relationships     {:.4}", self.mean_relationships_per_story)?;
        for (p, (count, share)) in Polarity::ALL
            .iter()
            .zip(self.polarity_counts.iter().zip(self.polarity_shares.iter()))
        {
            writeln!(f, "{:<22} {} ({:.2}%)", format!("{p}_relationships"), count, share * 100.0)?;
        }
        Ok(())
    }
}

/// Annotates a whole corpus, dropping stories with no eligible pair.
pub fn annotate_corpus(
    stories: &[GoldStory],
    lexicon: &SentimentLexicon,
) -> Result<(Vec<AnnotatedStory>, CorpusStats), AnnotateError> {
    let mut kept = Vec::with_capacity(stories.len());
    let mut polarity_counts = [0usize; 3];
    for (idx, gold) in stories.iter().enumerate() {
        let silver = annotate_story(&gold.story, &gold.analyzed, lexicon).map_err(|e| match e {
            AnnotateError::Alignment { analyzed, sentences, .. } => {
                AnnotateError::Alignment { story: idx, analyzed, sentences }
            }
            other => other,
        })?;
        if let Some(silver) = silver {
            for t in silver.relationships.iter() {
                polarity_counts[t.polarity.index()] += 1;
            }
            kept.push(AnnotatedStory { story: gold.story.clone(), silver });
        }
    }
    let total: usize = polarity_counts.iter().sum();
    let shares = if total == 0 {
        [0.0; 3]
    } else {
        polarity_counts.map(|c| c as f64 / total as f64)
    };
    let stats = CorpusStats {
        stories_in: stories.len(),
        stories_kept: kept.len(),
        stories_discarded: stories.len() - kept.len(),
        total_relationships: total,
        mean_relationships_per_story: if kept.is_empty() {
            0.0
        } else {
            total as f64 / kept.len() as f64
        },
        polarity_counts,
        polarity_shares: shares,
    };
    Ok((kept, stats))
}

fn io_err(path: &Path, source: std::io::Error) -> AnnotateError {
    AnnotateError::Io { path: path.display().to_string(), source }
}

/// Writes annotated stories as a header line followed by one JSON record per
/// story.
pub fn save_annotated(path: &Path, stories: &[AnnotatedStory]) -> Result<(), AnnotateError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| {
        writeln!(w, "{ANNOTATED_FORMAT}")?;
        for story in stories {
            let line = serde_json::to_string(story).expect("annotated records serialize");
            writeln!(w, "{line}")?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Reads an annotated-story file. A zero-length file is an empty corpus;
/// otherwise the first line must be the format tag.
pub fn load_annotated(path: &Path) -> Result<Vec<AnnotatedStory>, AnnotateError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut stories = Vec::new();
    let mut lines = reader.lines();
    let Some(header) = lines.next() else {
        return Ok(stories);
    };
    let header = header.map_err(|e| io_err(path, e))?;
    if header.trim() != ANNOTATED_FORMAT {
        return Err(AnnotateError::Parse {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header {ANNOTATED_FORMAT:?}, got {header:?}"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let story: AnnotatedStory =
            serde_json::from_str(&line).map_err(|e| AnnotateError::Parse {
                path: path.display().to_string(),
                line: line_no,
                reason: e.to_string(),
            })?;
        story.validate().map_err(|reason| AnnotateError::Parse {
            path: path.display().to_string(),
            line: line_no,
            reason,
        })?;
        stories.push(story);
    }
    Ok(stories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, Mention, SynthConfig};
    use crate::types::Sentence;
    use proptest::prelude::*;

    fn lex() -> SentimentLexicon {
        SentimentLexicon::parse("loves\t3.0\nhits\t-2.0\nmeets\t0.0\n").unwrap()
    }

    fn analyzed_svo(subject: &str, verb: &str, object: &str) -> AnalyzedSentence {
        AnalyzedSentence {
            tokens: vec![subject.into(), verb.into(), object.into(), ".".into()],
            mentions: vec![
                Mention { name: subject.into(), position: 0, role: MentionRole::SubjectOfMainVerb },
                Mention { name: object.into(), position: 2, role: MentionRole::ObjectOfMainVerb },
            ],
        }
    }

    fn analyzed_plain(tokens: &[&str]) -> AnalyzedSentence {
        AnalyzedSentence {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            mentions: vec![],
        }
    }

    #[test]
    fn sentiment_scores_split_by_sign() {
        let tokens = ["Alice", "loves", "Bob"];
        let s = score_sentiment(&tokens, &lex());
        assert_eq!((s.pos, s.neg, s.neu), (3.0, 0.0, 2.0));
    }

    #[test]
    fn polarity_rule_breaks_ties_to_neutral() {
        assert_eq!(polarity_of(PolarityScores { pos: 2.0, neg: 1.0, neu: 0.0 }), Polarity::Positive);
        assert_eq!(polarity_of(PolarityScores { pos: 1.0, neg: 2.0, neu: 5.0 }), Polarity::Negative);
        assert_eq!(polarity_of(PolarityScores { pos: 2.0, neg: 2.0, neu: 0.0 }), Polarity::Neutral);
        assert_eq!(polarity_of(PolarityScores { pos: 0.0, neg: 0.0, neu: 9.0 }), Polarity::Neutral);
    }

    #[test]
    fn eligibility_needs_exactly_one_subject_and_object() {
        assert_eq!(
            eligible_pair(&analyzed_svo("Alice", "loves", "Bob")),
            Some(CharacterPair::new("Alice", "Bob").unwrap())
        );
        // Subject-only conjunction: "John and Beth lost all their money".
        let conjunct = AnalyzedSentence {
            tokens: ["John", "and", "Beth", "lost", "all", "their", "money", "."]
                .iter()
                .map(|t| t.to_string())
                .collect(),
            mentions: vec![
                Mention { name: "John".into(), position: 0, role: MentionRole::SubjectOfMainVerb },
                Mention { name: "Beth".into(), position: 2, role: MentionRole::Other },
            ],
        };
        assert_eq!(eligible_pair(&conjunct), None);
        // Same character in both roles.
        let reflexive = AnalyzedSentence {
            tokens: vec!["Alice".into(), "sees".into(), "Alice".into()],
            mentions: vec![
                Mention { name: "Alice".into(), position: 0, role: MentionRole::SubjectOfMainVerb },
                Mention { name: "Alice".into(), position: 2, role: MentionRole::ObjectOfMainVerb },
            ],
        };
        assert_eq!(eligible_pair(&reflexive), None);
        assert_eq!(eligible_pair(&analyzed_plain(&["the", "town", "was", "quiet", "."])), None);
    }

    fn story_from(analyzed: Vec<AnalyzedSentence>, characters: &[&str]) -> Story {
        let sentences = analyzed.iter().map(|a| a.sentence().unwrap()).collect();
        Story::new(
            Sentence::parse("the story begins .").unwrap(),
            sentences,
            characters.iter().map(|c| c.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn annotation_pools_pair_sentences_and_labels_the_rest_null() {
        let analyzed = vec![
            analyzed_svo("Alice", "loves", "Bob"),
            analyzed_plain(&["it", "rained", "all", "day", "."]),
            analyzed_svo("Carol", "hits", "Alice"),
            analyzed_svo("Bob", "loves", "Alice"),
        ];
        let story = story_from(analyzed.clone(), &["Alice", "Bob", "Carol"]);
        let silver = annotate_story(&story, &analyzed, &lex()).unwrap().unwrap();

        let expected = RelationshipSet::new(vec![
            RelationshipTriple::new("Alice", "Bob", Polarity::Positive).unwrap(),
            RelationshipTriple::new("Alice", "Carol", Polarity::Negative).unwrap(),
        ])
        .unwrap();
        assert_eq!(silver.relationships, expected);
        assert_eq!(
            silver.sentence_labels,
            LatentTrace(vec![
                LatentValue::Rel(1),
                LatentValue::Null,
                LatentValue::Rel(2),
                LatentValue::Rel(1),
            ])
        );
    }

    #[test]
    fn pooled_polarity_can_differ_from_single_sentences() {
        // One positive and one stronger negative interaction for the same
        // pair: the pooled score decides.
        let lex = SentimentLexicon::parse("loves\t1.0\nhits\t-2.0\n").unwrap();
        let analyzed = vec![
            analyzed_svo("Alice", "loves", "Bob"),
            analyzed_svo("Bob", "hits", "Alice"),
        ];
        let story = story_from(analyzed.clone(), &["Alice", "Bob"]);
        let silver = annotate_story(&story, &analyzed, &lex).unwrap().unwrap();
        assert_eq!(silver.relationships.triples()[0].polarity, Polarity::Negative);
    }

    #[test]
    fn stories_without_eligible_pairs_are_discarded() {
        let analyzed = vec![analyzed_plain(&["the", "town", "was", "quiet", "."])];
        let story = story_from(analyzed.clone(), &["Alice"]);
        assert_eq!(annotate_story(&story, &analyzed, &lex()).unwrap(), None);
    }

    #[test]
    fn misaligned_analysis_is_an_error() {
        let analyzed = vec![analyzed_svo("Alice", "loves", "Bob")];
        let story = story_from(analyzed.clone(), &["Alice", "Bob"]);
        assert!(annotate_story(&story, &[], &lex()).is_err());
    }

    #[test]
    fn corpus_annotation_recovers_gold_exactly_on_synthetic_data() {
        let lexicon = SentimentLexicon::bundled();
        let cfg = SynthConfig { num_stories: 150, seed: 21, ..SynthConfig::default() };
        let stories = synthesize_corpus(&cfg, &lexicon).unwrap();
        let (annotated, stats) = annotate_corpus(&stories, &lexicon).unwrap();
        assert_eq!(stats.stories_discarded, 0);
        assert_eq!(annotated.len(), stories.len());
        for (gold, silver) in stories.iter().zip(&annotated) {
            let mut want: Vec<&RelationshipTriple> = gold.gold_relationships.iter().collect();
            let mut got: Vec<&RelationshipTriple> = silver.silver.relationships.iter().collect();
            want.sort_by_key(|t| t.surface());
            got.sort_by_key(|t| t.surface());
            assert_eq!(want, got, "silver triples diverge from gold");
        }
    }

    #[test]
    fn corpus_polarity_shares_stay_near_the_synthesis_mix() {
        let lexicon = SentimentLexicon::bundled();
        let cfg = SynthConfig { num_stories: 1000, seed: 13, ..SynthConfig::default() };
        let stories = synthesize_corpus(&cfg, &lexicon).unwrap();
        let (_, stats) = annotate_corpus(&stories, &lexicon).unwrap();
        for (share, mix) in stats.polarity_shares.iter().zip(cfg.polarity_mix.iter()) {
            assert!((share - mix).abs() < 0.05, "share {share} vs mix {mix}");
        }
        assert!(stats.mean_relationships_per_story >= 1.0);
    }

    #[test]
    fn annotated_file_round_trips() {
        let lexicon = SentimentLexicon::bundled();
        let cfg = SynthConfig { num_stories: 20, seed: 41, ..SynthConfig::default() };
        let stories = synthesize_corpus(&cfg, &lexicon).unwrap();
        let (annotated, _) = annotate_corpus(&stories, &lexicon).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotated.jsonl");
        save_annotated(&path, &annotated).unwrap();
        let loaded = load_annotated(&path).unwrap();
        assert_eq!(annotated, loaded);

        save_annotated(&path, &[]).unwrap();
        assert!(load_annotated(&path).unwrap().is_empty());
    }

    #[test]
    fn annotated_load_rejects_bad_headers_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotated.jsonl");

        std::fs::write(&path, "relist-annotated-v0\n").unwrap();
        let err = load_annotated(&path).unwrap_err();
        assert!(
            matches!(&err, AnnotateError::Parse { line: 1, .. }),
            "{err}"
        );

        std::fs::write(&path, format!("{ANNOTATED_FORMAT}\n{{\"story\":1}}\n")).unwrap();
        let err = load_annotated(&path).unwrap_err();
        assert!(
            matches!(&err, AnnotateError::Parse { line: 2, .. }),
            "{err}"
        );

        // A structurally valid record whose trace is too long fails validation.
        let lexicon = SentimentLexicon::bundled();
        let cfg = SynthConfig { num_stories: 5, seed: 42, ..SynthConfig::default() };
        let stories = synthesize_corpus(&cfg, &lexicon).unwrap();
        let (annotated, _) = annotate_corpus(&stories, &lexicon).unwrap();
        let mut broken = annotated[0].clone();
        broken.silver.sentence_labels.0.push(LatentValue::Null);
        let line = serde_json::to_string(&broken).unwrap();
        std::fs::write(&path, format!("{ANNOTATED_FORMAT}\n{line}\n")).unwrap();
        let err = load_annotated(&path).unwrap_err();
        assert!(
            matches!(&err, AnnotateError::Parse { line: 2, .. }),
            "{err}"
        );
    }

    proptest! {
        // Pooled scoring ignores token order: any permutation of the pooled
        // tokens yields the same polarity.
        #[test]
        fn scoring_is_permutation_invariant(perm in proptest::sample::subsequence(
            vec!["loves", "hits", "meets", "Alice", "Bob", "hits"], 6)
        ) {
            let lexicon = lex();
            let mut shuffled = perm.clone();
            shuffled.reverse();
            let a = score_sentiment(&perm, &lexicon);
            let b = score_sentiment(&shuffled, &lexicon);
            prop_assert_eq!(polarity_of(a), polarity_of(b));
            prop_assert_eq!((a.pos, a.neg, a.neu), (b.pos, b.neg, b.neu));
        }
    }
}
