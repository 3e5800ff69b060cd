//! Probing classifiers for multimodal fact verification.
//!
//! The crate trains a small multi-input feed-forward network on pooled
//! embeddings (one vector per instance per input setup) and compares it
//! against KNN and linear SVM baselines. Embeddings come from vision-language
//! models (intrinsic fusion) or from separate text and image encoders whose
//! outputs are fused inside the classifier (extrinsic fusion).
//!
//! Data-parallel inner loops (minibatch gradients, validation loss, batch
//! prediction, grid points) run on rayon when the `parallel` feature is on
//! and fall back to plain iteration otherwise. Results are bit-identical
//! either way: work is split into fixed-size chunks and reduced in order.

pub mod baselines;
pub mod dataset_prep;
pub mod embedding_store;
pub mod grid_search;
pub mod label;
pub mod metrics;
pub mod par;
pub mod probe_model;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use embedding_store::{
    join_in_order, join_setups, mean_pool, preset, read_embedding_set, write_embedding_set,
    DatasetId, EmbeddingManifest, InputSetup, JoinedDataset, PooledEmbedding, Split,
};
pub use label::Veracity;
pub use probe_model::{ProbeConfig, ProbeParams};
pub use trainer::{TrainConfig, TrainResult};
