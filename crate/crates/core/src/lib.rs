//! Core algorithms for graph community augmentation.
//!
//! The pipeline embeds a graph into a latent space with a variational graph
//! autoencoder ([`embed`]), models the node embeddings with a full-covariance
//! Gaussian mixture ([`gmm`]) whose component count and embedding dimension
//! are selected by decomposed NML code lengths ([`mdl`]), then synthesizes a
//! new community by placing an extra mixture component far from the existing
//! clusters but close to the original mixture ([`augment`]), guided by the
//! divergence machinery in [`divergence`]. Generated graphs are compared to
//! the originals with the statistics in [`metrics`].

pub mod augment;
pub mod divergence;
pub mod embed;
pub mod gmm;
pub mod graph;
pub mod linalg;
pub mod mdl;
pub mod metrics;
pub mod seed;
pub mod stats;

pub use augment::{augment_graph, place_new_component, AugmentConfig, AugmentState};
pub use divergence::{kl_gaussian, variational_bound, BoundState};
pub use embed::{train_vgae, EncoderConfig, LatentEmbedding, TrainedDecoder};
pub use gmm::{fit_em, GmmModel};
pub use graph::{generate_sbm, Graph, SbmSpec};
pub use mdl::{estimate_k, select_model, SelectionGrid};
pub use metrics::{evaluate, MetricsReport, MmdConfig};
