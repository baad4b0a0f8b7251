//! Relationship-conditioned story generation with discrete latent relationship
//! selection.
//!
//! A story is modeled sentence by sentence. Before each sentence a selector
//! picks a latent value: one of the story's character relationships, or the
//! null value for sentences that advance the plot without expressing a
//! relationship. Two count-based language models then continue the story,
//! one conditioned on the selected relationship's polarity, one unconditioned.
//!
//! The crate covers the full experimental loop at desk scale:
//!
//! * [`corpus`] synthesizes gold-labeled stories from SVO templates and a
//!   sentiment lexicon, and reads/writes the line-delimited corpus format.
//! * [`annotator`] produces silver relationship labels from raw analyzed
//!   sentences (subject/object mention detection plus lexicon sentiment).
//! * [`models`] holds the interpolated n-gram language models, the log-linear
//!   selector, and the delexicalization machinery they share.
//! * [`em`] initializes from silver labels and refines both parts with EM
//!   (sampled, hard, or soft assignments).
//! * [`generator`] produces stories with latent traces under several modes,
//!   including ablation baselines.
//! * [`eval`] and [`report`] implement relationship identification metrics,
//!   a polarity-classification probe, content-overlap metrics, trace
//!   analyses, and cross-mode comparison with paired t-tests.
//! * [`pipeline`] wires the stages into a reproducible end-to-end run driven
//!   by [`config`].
//!
//! Every stage is deterministic given the experiment seed: reruns with the
//! same config produce byte-identical artifacts.

pub mod annotator;
pub mod config;
pub mod corpus;
pub mod em;
pub mod eval;
pub mod generator;
pub mod lexicon;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod seeds;
pub mod types;
