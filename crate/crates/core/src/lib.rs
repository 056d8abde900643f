//! Ontology grounding engine for enterprise LLM agents.
//!
//! Modules, bottom-up:
//!
//! * [`ontology`]: three-layer Role/Domain/Interaction ontologies, blueprint
//!   loading, validation and tenant overlays.
//! * [`context`]: token-budgeted context resolution with priority truncation
//!   and a TTL cache.
//! * [`discovery`]: skill registry, governance gating and hierarchical scoring.
//! * [`compliance`]: rule-based output validation against an ontology.
//! * [`metrics`]: TF/MA/RC/RS response scores.
//! * [`experiment`]: condition assembly, stub generators and run records.
//! * [`stats`]: Friedman, Kendall's W, Wilcoxon, Bonferroni, entropy and the
//!   binomial sign test.

pub mod compliance;
pub mod context;
pub mod discovery;
pub mod experiment;
pub mod metrics;
pub mod ontology;
pub mod stats;
pub mod text;

#[cfg(test)]
pub(crate) mod test_fixtures;
