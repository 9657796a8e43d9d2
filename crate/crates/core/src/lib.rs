//! Toolkit for crowdsourced genericity annotations.
//!
//! The pipeline runs from dependency-parsed sentences ([`corpus`]) through
//! raw binary-plus-confidence judgments ([`annotations`]), mixed-model bias
//! estimation ([`glmm`]) and confidence-aware agreement ([`agreement`]), to
//! bias-corrected real-valued labels ([`normalize`]). Those labels feed the
//! feature-based property regressor ([`features`], [`regressor`]) and the
//! clause-type classifier ([`ontology`]).

pub mod agreement;
pub mod annotations;
pub mod corpus;
mod error;
pub mod features;
pub mod glmm;
pub mod jsonl;
pub mod math;
pub mod normalize;
pub mod ontology;
pub mod regressor;
pub mod synthetic;

pub use error::{Error, Result};
