//! Reaction-aware molecule embeddings.
//!
//! Molecules are parsed from SMILES into attributed graphs, encoded with a
//! GNN (GCN, GAT, GraphSAGE, or TAG), and trained with a margin-based
//! contrastive loss so that for every reaction the sum of reactant embeddings
//! matches the sum of product embeddings. The trained embeddings feed
//! reaction-product ranking, property probes, and graph-edit-distance
//! regression.

pub mod datagen;
pub mod diagnostics;
pub mod encoder;
pub mod eval;
pub mod ged;
pub mod graph;
pub mod numeric;
pub mod probe;
pub mod smiles;
pub mod train;
