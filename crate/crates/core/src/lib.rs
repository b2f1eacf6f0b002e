//! Bow-tie analysis of tie strength in weighted social networks.
//!
//! Every tie `(i, j)` is decomposed into the friends only `i` has, the friends
//! only `j` has, and the friends they share. Structural predictors computed
//! from that decomposition (overlap, clustering of the non-shared circles,
//! group sizes and edge counts) are combined with nodal attributes and fed to
//! random forests and regression models that predict tie strength.

pub mod attributes;
pub mod bowtie;
pub mod eval;
pub mod features;
pub mod graph;
pub mod impute;
pub mod ingest;
pub mod learn;
pub mod pipeline;
pub mod plot;
pub mod strength;
pub mod synth;

pub use attributes::{AttributeTable, NodeAttributes, Sex, SexPair};
pub use bowtie::{edge_features, extract_bowtie, BowTie, FeatureExtractor, FeatureVector};
pub use graph::{NodeId, NodeStats, WeightedGraph};
