//! Core engine for a partially decentralized data architecture.
//!
//! The pipeline has three tiers: per-user personal data stores ([`pds`])
//! evaluate declared views locally and emit signed-multiset deltas; a
//! three-server secure aggregation tier ([`mpc`]) accumulates additively
//! secret-shared contributions and releases per-group aggregates only once
//! a minimum contributor count is met; a central store ([`central`])
//! maintains the released, windowed materialized views together with
//! completeness statistics. Schemas are written in a small SQL-extension
//! dialect ([`schema`]) that carries placement, sensitivity and privacy
//! annotations. [`simnet`] drives everything as a deterministic multi-actor
//! simulation.

pub mod central;
pub mod ivm;
pub mod mpc;
pub mod pds;
pub mod rng;
pub mod schema;
pub mod simnet;
pub mod value;

pub use schema::{parse_ddl, validate, SchemaCatalog};
