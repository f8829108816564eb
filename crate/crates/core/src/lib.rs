//! Radio-access-network configuration recommendation from graph embeddings.
//!
//! Cells of a RAN form an undirected graph. Each cell is embedded from a
//! sampled subgraph around it by a GATv2 encoder trained either as a Siamese
//! network (contrastive loss on configuration similarity) or as a graph
//! auto-encoder. New cells receive configurations from their nearest
//! neighbors in embedding space, and an isolation forest over the
//! embeddings scores cells for misconfiguration.

pub mod anomaly;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod inference;
pub mod numeric;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
