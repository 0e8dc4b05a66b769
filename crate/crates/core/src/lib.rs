//! Curation and evaluation toolkit for long narrative video corpora.
//!
//! * [`manifest`]: corpus data model and the line-delimited manifest format
//! * [`matching`]: temporal IoU matching of captioned clips to action spans
//! * [`stats`]: histograms and summaries for corpus profiling
//! * [`scoring`]: annotation-quality rubric aggregation
//! * [`embed`]: embedding losses, perturbations, and distribution metrics
//! * [`context`]: narrative histories and rolling conditioning windows

pub mod context;
pub mod embed;
pub mod manifest;
pub mod matching;
pub mod scoring;
pub mod stats;
