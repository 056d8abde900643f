//! Three-layer enterprise ontologies: roles, domain knowledge and the
//! interaction patterns between roles.
//!
//! An [`Ontology`] is loaded from a single JSON blueprint per industry,
//! cross-validated on load and immutable afterwards. Tenant customizations
//! are applied with [`merge_overlay`], which never touches its input.

mod load;
mod overlay;
pub mod path;
mod validate;

#[cfg(test)]
pub(crate) use crate::test_fixtures;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use load::{load_blueprint, to_blueprint_string};
pub use overlay::{
    load_overlay, merge_overlay, DomainOverlay, InteractionOverlay, MetricOverride, RoleOverride,
    TenantOverlay,
};
pub use path::{ancestors, is_ancestor, MAX_VERTICAL_DEPTH};
pub use validate::{validate_ontology, ErrorKind, ValidationReport, Violation, ViolationCode};

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("hierarchy error: {0}")]
    Hierarchy(String),
    #[error("invalid vertical path `{path}`: {reason}")]
    Format { path: String, reason: String },
}

/// How a role thinks, decides and communicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleDef {
    pub id: String,
    pub decision_patterns: Vec<String>,
    pub metrics_focus: Vec<String>,
    pub communication_style: String,
    #[serde(default)]
    pub expertise_domains: Vec<String>,
    #[serde(default)]
    pub approval_authority: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::HigherBetter => "higher-better",
            Direction::LowerBetter => "lower-better",
        }
    }
}

/// Closed interval `[lower, upper]` tagged with a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthyRange {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub unit: String,
}

impl HealthyRange {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// A KPI definition. The map key in [`DomainOntology::metrics`] is its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDef {
    pub healthy_range: HealthyRange,
    pub world_class: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub definition: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<String>,
}

/// A regulatory framework. An empty `verticals` list means it applies to
/// every vertical; otherwise it applies to the listed verticals and their
/// descendants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceDef {
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verticals: Vec<String>,
}

impl GovernanceDef {
    pub fn applies_to(&self, vertical: &str) -> bool {
        self.verticals.is_empty()
            || self
                .verticals
                .iter()
                .any(|v| v == vertical || path::is_ancestor(v, vertical))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOntology {
    pub verticals: Vec<String>,
    #[serde(default)]
    pub entities: BTreeMap<String, EntityDef>,
    #[serde(default)]
    pub metrics: BTreeMap<String, MetricDef>,
    #[serde(default)]
    pub governance: BTreeMap<String, GovernanceDef>,
}

impl DomainOntology {
    /// The first declared single-segment vertical, falling back to the first
    /// vertical of any depth.
    pub fn root_vertical(&self) -> Option<&str> {
        self.verticals
            .iter()
            .find(|v| !v.contains('.'))
            .or_else(|| self.verticals.first())
            .map(String::as_str)
    }
}

/// A typed, directed handoff between two roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoffPattern {
    pub from_role: String,
    pub to_role: String,
    pub trigger: String,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub approval_required: bool,
}

impl HandoffPattern {
    pub fn touches(&self, role: &str) -> bool {
        self.from_role == role || self.to_role == role
    }
}

/// Roles that must authorize a decision, in order. The timeout is stored
/// but not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApprovalChain {
    pub roles: Vec<String>,
    #[serde(default)]
    pub timeout_seconds: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionOntology {
    #[serde(default)]
    pub handoffs: Vec<HandoffPattern>,
    #[serde(default)]
    pub approval_chains: Vec<ApprovalChain>,
    /// role id -> fallback role id
    #[serde(default)]
    pub escalation_paths: BTreeMap<String, String>,
}

/// Keyword groups used by role-consistency scoring: one group per
/// decision-pattern tag and per communication-style tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicons {
    #[serde(default)]
    pub decision_patterns: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub styles: BTreeMap<String, Vec<String>>,
}

impl Lexicons {
    fn is_empty(&self) -> bool {
        self.decision_patterns.is_empty() && self.styles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ontology {
    pub industry_id: String,
    pub roles: Vec<RoleDef>,
    pub domain: DomainOntology,
    #[serde(default)]
    pub interaction: InteractionOntology,
    /// Metric names roles may reference without a local definition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external_metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Lexicons::is_empty")]
    pub lexicons: Lexicons,
}

impl Ontology {
    pub fn role(&self, id: &str) -> Option<&RoleDef> {
        self.roles.iter().find(|r| r.id == id)
    }

    pub fn has_role(&self, id: &str) -> bool {
        self.role(id).is_some()
    }
}
