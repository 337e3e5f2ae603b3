//! Likelihood-equivalent Bayesian scoring of network structures.
//!
//! Structures are scored by `ln p(D, B_s)` assembled from subset marginal
//! likelihoods `ln p(D^X)`: Dirichlet priors for discrete domains (BDe),
//! normal-Wishart priors for Gaussian domains (BGe), and a partitioned
//! combination of both for mixed domains. On top of the scores sit
//! equivalence testing, exhaustive and greedy search, and model averaging.

pub mod dataset;
pub mod discrete;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod network;
pub mod numeric;
pub mod scoring;
pub mod search;

pub use dataset::{load_csv, read_csv, write_csv, Column, Database, Value};
pub use discrete::{bde_score, BdeScorer, DirichletPriorSpec, DirichletSubsetEvaluator};
pub use error::{Error, Result};
pub use gaussian::{
    bge_subset_loglik, BgeEvaluator, GaussianNetParams, NormalWishartPriorSpec, SubsetDof,
    T0Convention,
};
pub use graph::{equivalent, Domain, NetworkStructure, Variable, VariableKind};
pub use scoring::{
    be_score, bayes_factor, mixed_score, score_structure, BeScorer, LocalScore, Metric,
    ScoreEntry, ScoreReport, StructurePrior, SubsetEvaluator, UniformPrior,
};
pub use search::{exhaustive_search, greedy_search, search, Move, SearchConfig, SearchMode};
pub use network::{LocalParams, Network, PriorSettings};
