//! Unsupervised feature-space transformation.
//!
//! The pipeline scores feature sets with a neighbor-consistency utility,
//! explores feature crosses with cooperating Q-learning agents, embeds
//! explored sets by contrastive pre-training of a graph encoder over
//! feature-feature similarity graphs, fine-tunes a sequence decoder and a
//! utility evaluator on top of the encoder, and finally moves the best
//! embeddings uphill along the evaluator gradient and decodes them into new
//! feature sets.

pub mod collector;
pub mod config;
pub mod datasets;
pub mod encoder;
pub mod expr;
pub mod generator;
pub mod harness;
pub mod nn;
pub mod pipeline;
pub mod tabular;
pub mod utility;
