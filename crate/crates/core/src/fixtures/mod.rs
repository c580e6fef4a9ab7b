//! Bundled worlds for tests, demos and the acceptance suite.

pub mod corpus;
pub mod demo;

pub use corpus::{corpus_apps, labeled_queries, CorpusApp, LabeledQuery};
pub use demo::*;
