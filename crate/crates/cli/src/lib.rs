//! Command implementations behind the `corrkd` binary.

pub mod commands;
pub mod config;
mod flags;

pub use commands::{
    augment, distill, gradcheck, probe, probe_corpus, probe_model, training_corpora, AugmentArgs,
    CorpusSource, DistillSummary, ProbeTarget,
};
pub use config::{CorpusConfig, RunConfig, KEYS};
pub use flags::ConfigFlags;
