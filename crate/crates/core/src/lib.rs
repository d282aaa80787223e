//! Speculative decoding with chain, static-tree and dynamic-tree drafting,
//! exact acceptance, and relaxed acceptance over latent-codebook neighborhoods.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the benchmark harness
//! uses; the `*F32` aliases are there for memory-bound experiments.
//!
//! ```
//! use specdec::{Categorical, Method, SessionConfig, RuleSpec, SyntheticFamilyConfig};
//!
//! let family = SyntheticFamilyConfig {
//!     vocab_size: 64,
//!     concentration: 2.0,
//!     drafter_noise: 0.5,
//!     context_hash_depth: 2,
//!     seed: 1,
//! };
//! let (target, drafter) = specdec::make_synthetic_pair(family).unwrap();
//! let cfg = SessionConfig {
//!     token_budget: 32,
//!     method: Method::Chain { gamma: 3 },
//!     rule: RuleSpec::Exact,
//!     seed: 7,
//! };
//! let session = specdec::run_session::<f64, _, _>(&cfg, &target, &drafter, None).unwrap();
//! assert_eq!(session.tokens.len(), 32);
//! assert!(session.metrics.step_compression >= 1.0);
//! # let _ = Categorical::uniform(4);
//! ```

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod codebook;
pub mod distributions;
pub mod draft_tree;
pub mod engine;
pub mod enumerate;
pub mod error;
pub mod models;
pub mod rng;
pub mod scalar;

pub use acceptance::{
    accept_probability, adjusted_target, relaxation_ratio, verify_chain, verify_tree,
    AcceptanceRule, NodeDecision, VerificationOutcome,
};
pub use codebook::{aggregated_mass, refined_subset_additive, refined_subset_multiplicative, NeighborSet};
pub use distributions::{residual, tvd, TokenId};
pub use draft_tree::{draft_dynamic, draft_static, tree_stats, DraftMode, StaticTreeSpec, TreeStats};
pub use engine::{
    compare_methods, run_session, CellSummary, DecodeMetrics, GridCell, Method, RoundTrace, RuleSpec,
    SessionConfig, SessionResult,
};
pub use error::{Error, Result};
pub use models::{make_synthetic_pair, ModelOracle, Role, SyntheticFamilyConfig, SyntheticModel};
pub use rng::{Chooser, SessionRng};
pub use scalar::Real;

pub type Categorical = distributions::CategoricalDistribution<f64>;
pub type Codebook = codebook::Codebook<f64>;
pub type DraftNode = draft_tree::DraftNode<f64>;
pub type DraftTree = draft_tree::DraftTree<f64>;
pub type Rule = acceptance::AcceptanceRule<f64>;
pub type Outcome = acceptance::VerificationOutcome<f64>;

pub type CategoricalF32 = distributions::CategoricalDistribution<f32>;
pub type CodebookF32 = codebook::Codebook<f32>;
pub type DraftTreeF32 = draft_tree::DraftTree<f32>;
pub type RuleF32 = acceptance::AcceptanceRule<f32>;
