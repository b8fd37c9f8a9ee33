//! Asymmetric transfer hashing.
//!
//! Learns two domain-specific linear (or kernelized) hash functions jointly
//! with an adaptive bipartite graph between source and target samples, so
//! that target queries can be matched against a source database by Hamming
//! distance even when the two domains have different feature dimensions.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`data`] | datasets, tasks, query split, file formats, synthetic tasks |
//! | [`graph`] | kNN and semantic affinity graphs, Laplacians |
//! | [`model`] | hash functions, kernel maps, PCA initialization, codes |
//! | [`optimizer`] | objective, A/B/W block updates, γ setting, training loop |
//! | [`retrieval`] | Hamming ranking, AP/MAP, PR curves |
//! | [`diagnostics`] | 1-NN pseudo-label accuracy across iterations |

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod model;
pub mod optimizer;
pub mod retrieval;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{DomainDataset, DomainId, GitrTask, Labels, SplitTask, Subtask, SynthSpec};
pub use error::{AthError, Result};
pub use graph::{AffinityGraph, GraphKind, Laplacian, SemanticBipartiteEdges};
pub use model::{BinaryCodes, HashFunction, HashModel, KernelMap, KernelSpec, SigmaMode, Variant};
pub use optimizer::{
    train, train_with_observer, BipartiteGraph, BipartiteMode, Gamma, GammaSchedule, HyperParams,
    ObjectiveTerms, TrainOptions, TrainState,
};
pub use retrieval::{Direction, RetrievalResult};
