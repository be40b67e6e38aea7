//! Conversation clustering toolkit: turns messenger-style text corpora into
//! clusters usable as chatbot intents.
//!
//! The pipeline runs preprocess, embed, PCA, a DBSCAN parameter search over
//! k-distance knees, then K-Means with the DBSCAN-derived cluster count on
//! the denoised data.

pub mod bpe;
pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod search;
