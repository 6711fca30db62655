//! Co-evolution of textual DSL instances with their grammar.
//!
//! [`grammar`] reads Xtext-style grammars, [`cst`] parses instances into
//! lossless syntax trees, [`gdiff`] compares two grammar versions,
//! [`migrate`] rewrites instances deterministically, [`llm`] drives an LLM
//! to do the same, and [`metrics`] scores the result line by line.

pub mod cst;
pub mod gdiff;
pub mod grammar;
pub mod llm;
pub mod metrics;
pub mod migrate;

#[cfg(feature = "testkit")]
pub mod testkit;
