//! Conceptual-graph verification and validation engine for enterprise
//! process models.
//!
//! The pipeline: an enterprise model is parsed ([`ingest`]), translated into
//! a conceptual graph governed by a domain ontology ([`ontology`], [`cgraph`]),
//! enriched by forward-chaining graph rules, and checked against positive and
//! negative constraints and user properties ([`reasoning`], [`propmodel`]).
//! Graphs can be exported as first-order formulas ([`fol`]). All text formats
//! share one tokenizer and diagnostic machinery ([`frontio`]).

pub mod cgraph;
pub mod cli;
pub mod fol;
pub mod frontio;
pub mod ingest;
pub mod ontology;
pub mod projection;
pub mod propmodel;
pub mod reasoning;
