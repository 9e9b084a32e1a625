//! Blueprint-guided knowledge-graph question answering.
//!
//! The pipeline has an offline and an online half. Offline, training
//! (question, SPARQL) pairs are de-instantiated into relation-only
//! blueprint templates, deduplicated, and indexed by anchor-question
//! embedding ([`blueprint`]). Online, a query agent retrieves (or adapts)
//! a blueprint for the incoming question and walks the graph under it:
//! candidate relations are reranked by fused local/step/global similarity
//! signals, pruned with a structure-consistency safeguard, and expanded
//! into a growing evidence memory until an answer is sufficient
//! ([`explore`]). When the search stalls, a failure-aware refinement layer
//! reflects over the trajectory, backtracks to the faulty decision, and
//! falls back to grounded inference as a last resort ([`refine`]).
//!
//! [`kg`] abstracts graph access (in-memory store or SPARQL endpoint),
//! [`embed`] provides encoders and the retrieval index, [`llm`] carries
//! prompt templates and chat backends, and [`harness`] runs datasets
//! end-to-end with exact-match scoring and usage accounting.

pub mod blueprint;
pub mod embed;
pub mod explore;
pub mod harness;
pub mod kg;
pub mod llm;
pub mod refine;
