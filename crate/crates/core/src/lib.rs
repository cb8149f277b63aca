//! Quad indexing with pattern-vector filters and a SPARQL-subset query engine.

pub mod datagen;
pub mod engine;
pub mod filter;
pub mod fingerprint;
pub mod index;
pub mod lsh;
pub mod pattern;
pub mod rdf;
pub mod sparql;
