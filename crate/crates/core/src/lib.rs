//! Analytics engine for recorded public-speaking performances.
//!
//! Ingests precomputed multimodal feature bundles, derives 23
//! presentation-technique factors, scores them with per-factor ordinal
//! effectiveness models, recommends similar or contrasting speeches and
//! sentences, and summarizes spans as glyph-ready data for a linked-panel UI.

pub mod api;
pub mod corpus;
pub mod effectiveness;
pub mod factors;
pub mod feature;
pub mod pose;
pub mod recommend;
pub mod report;
pub mod summary;
