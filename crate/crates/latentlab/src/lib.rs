//! A desk-scale laboratory for latent chain-of-thought reasoning.
//!
//! The crate generates graph-reachability QA tasks, trains small
//! decoder-only transformers under discrete and latent-thought regimes,
//! decodes with discrete, latent-recurrent, and soft-mixture strategies,
//! and probes internal representations (intermediate-layer lens entropy,
//! paired-intervention metrics, entity-belief evolution).

pub mod decode;
pub mod exp;
pub mod model;
pub mod probes;
pub mod rng;
pub mod taskgen;
pub mod training;
