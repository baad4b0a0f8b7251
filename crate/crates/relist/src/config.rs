//! Experiment configuration. One TOML file (or the bundled default) drives
//! every pipeline stage; a single master seed fans out into per-stage
//! streams so whole runs reproduce byte for byte.

use crate::corpus::SynthConfig;
use crate::em::{EMConfig, EMode};
use crate::models::ngram::LmConfig;
use crate::seeds::derive_seed;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Environment variable that overrides the configured master seed.
pub const SEED_ENV_VAR: &str = "RELIST_SEED";

const DEFAULT_CONFIG: &str = include_str!("../assets/default_config.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub num_stories: usize,
    /// Share of stories held out for evaluation.
    pub test_fraction: f64,
    /// Inclusive range of characters per story.
    pub characters_per_story: [usize; 2],
    /// Inclusive range of non-prompt sentences per story.
    pub sentences_per_story: [usize; 2],
    /// Positive, neutral, negative shares, in that order.
    pub polarity_mix: [f64; 3],
    pub null_sentence_rate: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let base = SynthConfig::default();
        SynthesisSection {
            num_stories: 2000,
            test_fraction: 0.13,
            characters_per_story: [base.characters_per_story.0, base.characters_per_story.1],
            sentences_per_story: [base.sentences_per_story.0, base.sentences_per_story.1],
            polarity_mix: base.polarity_mix,
            null_sentence_rate: base.null_sentence_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub cycles: usize,
    pub warmup: usize,
    pub e_mode: EMode,
    /// Highest n-gram order of both language models.
    pub order: usize,
    /// Additive smoothing mass per vocabulary entry.
    pub alpha: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let base = EMConfig::default();
        let lm = LmConfig::default();
        TrainingSection {
            cycles: base.cycles,
            warmup: base.warmup,
            e_mode: base.e_mode,
            order: lm.order,
            alpha: lm.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub max_sentences: usize,
    pub max_sentence_tokens: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            max_sentences: crate::generator::DEFAULT_MAX_SENTENCES,
            max_sentence_tokens: crate::generator::DEFAULT_MAX_SENTENCE_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub synthesis: SynthesisSection,
    pub training: TrainingSection,
    pub generation: GenerationSection,
}

impl ExperimentConfig {
    /// The configuration compiled into the binary.
    pub fn bundled() -> Self {
        let cfg: ExperimentConfig =
            toml::from_str(DEFAULT_CONFIG).expect("bundled config parses");
        cfg.validate().expect("bundled config is valid");
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), reason: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the master seed with `RELIST_SEED` when that variable is set.
    pub fn apply_env_seed(&mut self) -> Result<(), ConfigError> {
        match std::env::var(SEED_ENV_VAR) {
            Ok(raw) => {
                let seed: u64 = raw.trim().parse().map_err(|_| {
                    ConfigError::Invalid(format!("{SEED_ENV_VAR} must be an unsigned integer, got {raw:?}"))
                })?;
                self.seed = seed;
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.synth_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let f = self.synthesis.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "test_fraction must lie strictly between 0 and 1, got {f}"
            )));
        }
        let n = self.synthesis.num_stories;
        let test = ((n as f64) * f).round() as usize;
        if test == 0 || test == n {
            return Err(ConfigError::Invalid(format!(
                "test_fraction {f} leaves an empty split for {n} stories"
            )));
        }
        if self.training.order == 0 {
            return Err(ConfigError::Invalid("order must be at least 1".into()));
        }
        if !(self.training.alpha > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "alpha must be positive, got {}",
                self.training.alpha
            )));
        }
        if self.generation.max_sentences == 0 || self.generation.max_sentence_tokens == 0 {
            return Err(ConfigError::Invalid(
                "generation limits must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Synthesis stage configuration with its derived seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            num_stories: self.synthesis.num_stories,
            characters_per_story: (
                self.synthesis.characters_per_story[0],
                self.synthesis.characters_per_story[1],
            ),
            sentences_per_story: (
                self.synthesis.sentences_per_story[0],
                self.synthesis.sentences_per_story[1],
            ),
            polarity_mix: self.synthesis.polarity_mix,
            null_sentence_rate: self.synthesis.null_sentence_rate,
            seed: derive_seed(self.seed, "synth"),
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    /// Training stage configuration with its derived seed.
    pub fn em_config(&self) -> EMConfig {
        EMConfig {
            cycles: self.training.cycles,
            warmup: self.training.warmup,
            e_mode: self.training.e_mode,
            seed: derive_seed(self.seed, "train"),
            lm: LmConfig {
                order: self.training.order,
                alpha: self.training.alpha,
                lambdas: LmConfig::uniform_lambdas(self.training.order),
            },
            ..EMConfig::default()
        }
    }

    /// Base seed for one generation lane; per-story seeds index off it.
    pub fn lane_seed(&self, lane: &str) -> u64 {
        derive_seed(self.seed, &format!("generate-{lane}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_matches_the_code_defaults() {
        let bundled = ExperimentConfig::bundled();
        let mut coded = ExperimentConfig::default();
        coded.seed = bundled.seed;
        assert_eq!(bundled, coded, "asset file and struct defaults diverge");
    }

    #[test]
    fn partial_files_inherit_defaults_and_unknown_keys_fail() {
        let cfg: ExperimentConfig =
            toml::from_str("seed = 7\n[training]\ne_mode = \"soft\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.training.e_mode, EMode::Soft);
        assert_eq!(cfg.training.cycles, TrainingSection::default().cycles);
        assert_eq!(cfg.synthesis, SynthesisSection::default());

        let err = toml::from_str::<ExperimentConfig>("speed = 7\n").unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
        assert!(toml::from_str::<ExperimentConfig>("[training]\ne_mode = \"loose\"\n").is_err());
    }

    #[test]
    fn load_validates_and_reports_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "[synthesis]\ntest_fraction = 1.5\n").unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");

        std::fs::write(&path, "seed = \"many\"\n").unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");

        let err = ExperimentConfig::load(&dir.path().join("missing.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }), "{err}");

        std::fs::write(&path, "seed = 3\n").unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn tiny_corpora_with_degenerate_splits_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.synthesis.num_stories = 3;
        cfg.synthesis.test_fraction = 0.01;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("empty split"), "{err}");
    }

    #[test]
    fn stage_seeds_are_distinct_and_stable() {
        let cfg = ExperimentConfig::bundled();
        let synth = cfg.synth_config().seed;
        let split = cfg.split_seed();
        let train = cfg.em_config().seed;
        let lane_a = cfg.lane_seed("relist");
        let lane_b = cfg.lane_seed("flat");
        let all = [synth, split, train, lane_a, lane_b];
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(cfg.lane_seed("relist"), lane_a);

        let other = ExperimentConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(other.lane_seed("relist"), lane_a);
    }

    #[test]
    fn em_config_carries_the_training_section() {
        let mut cfg = ExperimentConfig::default();
        cfg.training.cycles = 5;
        cfg.training.warmup = 2;
        cfg.training.order = 2;
        cfg.training.alpha = 0.25;
        let em = cfg.em_config();
        assert_eq!(em.cycles, 5);
        assert_eq!(em.warmup, 2);
        assert_eq!(em.lm.order, 2);
        assert_eq!(em.lm.alpha, 0.25);
        assert_eq!(em.lm.lambdas, vec![0.5, 0.5]);
    }
}
