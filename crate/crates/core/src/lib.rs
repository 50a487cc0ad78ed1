//! Retrieval-augmented cleaning of tabular data.
//!
//! A dirty column of a query table is filled (or checked) one row at a time,
//! either by asking a generative model directly or by retrieving candidate
//! tuples from a data lake, reranking them and reasoning over each
//! query/candidate pair. Suggestions drawn from the lake keep the table, row
//! and attribute they came from.

pub mod embed;
pub mod index;
pub mod lake;
pub mod model;
pub mod pipeline;
pub mod reason;
pub mod rerank;
pub mod semantic;
pub mod syntactic;
pub mod synth;
