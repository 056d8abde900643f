use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::path::{self, MAX_VERTICAL_DEPTH};
use super::{Direction, Ontology};
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyIndustryId,
    NoRoles,
    EmptyRoleId,
    DuplicateRoleId,
    EmptyDecisionPatterns,
    EmptyMetricsFocus,
    UnknownMetric,
    RangeInverted,
    NonFiniteValue,
    WorldClassInconsistent,
    NoVerticals,
    DuplicateVertical,
    EmptySegment,
    DepthExceeded,
    HierarchyOrphan,
    DuplicateEntityTerm,
    SynonymConflict,
    UnknownVertical,
    SelfHandoff,
    UnknownRole,
    EmptyChain,
    EscalationCycle,
}

/// Which load error a violation turns into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ErrorKind {
    Schema,
    Reference,
    Hierarchy,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            EmptyIndustryId => "EMPTY_INDUSTRY_ID",
            NoRoles => "NO_ROLES",
            EmptyRoleId => "EMPTY_ROLE_ID",
            DuplicateRoleId => "DUPLICATE_ROLE_ID",
            EmptyDecisionPatterns => "EMPTY_DECISION_PATTERNS",
            EmptyMetricsFocus => "EMPTY_METRICS_FOCUS",
            UnknownMetric => "UNKNOWN_METRIC",
            RangeInverted => "RANGE_INVERTED",
            NonFiniteValue => "NON_FINITE_VALUE",
            WorldClassInconsistent => "WORLD_CLASS_INCONSISTENT",
            NoVerticals => "NO_VERTICALS",
            DuplicateVertical => "DUPLICATE_VERTICAL",
            EmptySegment => "EMPTY_SEGMENT",
            DepthExceeded => "DEPTH_EXCEEDED",
            HierarchyOrphan => "HIERARCHY_ORPHAN",
            DuplicateEntityTerm => "DUPLICATE_ENTITY_TERM",
            SynonymConflict => "SYNONYM_CONFLICT",
            UnknownVertical => "UNKNOWN_VERTICAL",
            SelfHandoff => "SELF_HANDOFF",
            UnknownRole => "UNKNOWN_ROLE",
            EmptyChain => "EMPTY_CHAIN",
            EscalationCycle => "ESCALATION_CYCLE",
        }
    }

    pub fn kind(self) -> ErrorKind {
        use ViolationCode::*;
        match self {
            UnknownMetric | UnknownRole | UnknownVertical => ErrorKind::Reference,
            EmptySegment | DepthExceeded | HierarchyOrphan => ErrorKind::Hierarchy,
            _ => ErrorKind::Schema,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Dotted location inside the blueprint, e.g. `roles[product_manager].metrics_focus`.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            location: location.into(),
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of an ontology. Violations are data;
/// this never fails.
pub fn validate_ontology(o: &Ontology) -> ValidationReport {
    let mut r = ValidationReport::default();
    use ViolationCode::*;

    if o.industry_id.trim().is_empty() {
        r.push(EmptyIndustryId, "industry_id", "industry_id must be nonempty");
    }

    // roles
    if o.roles.is_empty() {
        r.push(NoRoles, "roles", "at least one role is required");
    }
    let mut role_ids = BTreeSet::new();
    for role in &o.roles {
        let loc = format!("roles[{}]", role.id);
        if role.id.trim().is_empty() {
            r.push(EmptyRoleId, &loc, "role id must be nonempty");
        } else if !role_ids.insert(role.id.as_str()) {
            r.push(DuplicateRoleId, &loc, format!("role id `{}` declared twice", role.id));
        }
        if role.decision_patterns.is_empty() {
            r.push(EmptyDecisionPatterns, format!("{loc}.decision_patterns"), "at least one decision pattern is required");
        }
        if role.metrics_focus.is_empty() {
            r.push(EmptyMetricsFocus, format!("{loc}.metrics_focus"), "at least one metric is required");
        }
        for m in &role.metrics_focus {
            if !o.domain.metrics.contains_key(m) && !o.external_metrics.contains(m) {
                r.push(
                    UnknownMetric,
                    format!("{loc}.metrics_focus"),
                    format!("metric `{m}` is neither defined in domain.metrics nor listed in external_metrics"),
                );
            }
        }
    }

    // metrics
    for (name, m) in &o.domain.metrics {
        let loc = format!("domain.metrics[{name}]");
        let range = &m.healthy_range;
        if !(range.lower.is_finite() && range.upper.is_finite() && m.world_class.is_finite()) {
            r.push(NonFiniteValue, &loc, "range bounds and world_class must be finite");
            continue;
        }
        if range.lower > range.upper {
            r.push(RangeInverted, &loc, format!("healthy_range lower {} > upper {}", range.lower, range.upper));
            continue;
        }
        let consistent = match m.direction {
            Direction::HigherBetter => m.world_class >= range.lower,
            Direction::LowerBetter => m.world_class <= range.upper,
        };
        if !consistent {
            r.push(
                WorldClassInconsistent,
                &loc,
                format!("world_class {} contradicts direction {}", m.world_class, m.direction.as_str()),
            );
        }
    }

    // verticals
    if o.domain.verticals.is_empty() {
        r.push(NoVerticals, "domain.verticals", "at least one vertical is required");
    }
    let vset: BTreeSet<&str> = o.domain.verticals.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    for v in &o.domain.verticals {
        let loc = format!("domain.verticals[{v}]");
        if !seen.insert(v.as_str()) {
            r.push(DuplicateVertical, &loc, format!("vertical `{v}` declared twice"));
            continue;
        }
        if v.split('.').any(|s| s.trim().is_empty()) {
            r.push(EmptySegment, &loc, format!("vertical `{v}` has an empty segment"));
            continue;
        }
        if path::depth(v) > MAX_VERTICAL_DEPTH {
            r.push(DepthExceeded, &loc, format!("vertical `{v}` deeper than {MAX_VERTICAL_DEPTH} segments"));
        }
        if let Some(parent) = path::parent(v) {
            if !vset.contains(parent) {
                r.push(HierarchyOrphan, &loc, format!("parent `{parent}` of `{v}` is not declared"));
            }
        }
    }

    // entities: folded terms unique, synonyms disjoint across entities
    let mut term_owner: BTreeMap<String, &str> = BTreeMap::new();
    for term in o.domain.entities.keys() {
        let folded = fold(term);
        if let Some(prev) = term_owner.insert(folded, term) {
            r.push(
                DuplicateEntityTerm,
                format!("domain.entities[{term}]"),
                format!("`{term}` collides with `{prev}` after case folding"),
            );
        }
    }
    let mut synonym_owner: BTreeMap<String, &str> = BTreeMap::new();
    for (term, e) in &o.domain.entities {
        for syn in &e.synonyms {
            let folded = fold(syn);
            let clash = match term_owner.get(&folded) {
                Some(owner) if *owner != term.as_str() => Some(*owner),
                _ => None,
            }
            .or_else(|| synonym_owner.get(&folded).copied().filter(|o| *o != term.as_str()));
            if let Some(other) = clash {
                r.push(
                    SynonymConflict,
                    format!("domain.entities[{term}].synonyms"),
                    format!("synonym `{syn}` is also claimed by `{other}`"),
                );
            }
            synonym_owner.entry(folded).or_insert(term);
        }
    }

    for (id, g) in &o.domain.governance {
        for v in &g.verticals {
            if !vset.contains(v.as_str()) {
                r.push(
                    UnknownVertical,
                    format!("domain.governance[{id}].verticals"),
                    format!("vertical `{v}` is not declared"),
                );
            }
        }
    }

    // interaction
    let known = |id: &str| role_ids.contains(id);
    for (i, h) in o.interaction.handoffs.iter().enumerate() {
        let loc = format!("interaction.handoffs[{i}]");
        if h.from_role == h.to_role {
            r.push(SelfHandoff, &loc, format!("handoff from `{}` to itself", h.from_role));
        }
        for id in [&h.from_role, &h.to_role] {
            if !known(id) {
                r.push(UnknownRole, &loc, format!("role `{id}` is not defined"));
            }
        }
    }
    for (i, chain) in o.interaction.approval_chains.iter().enumerate() {
        let loc = format!("interaction.approval_chains[{i}]");
        if chain.roles.is_empty() {
            r.push(EmptyChain, &loc, "approval chain must name at least one role");
        }
        for id in &chain.roles {
            if !known(id) {
                r.push(UnknownRole, &loc, format!("role `{id}` is not defined"));
            }
        }
    }
    for (from, to) in &o.interaction.escalation_paths {
        let loc = format!("interaction.escalation_paths[{from}]");
        for id in [from, to] {
            if !known(id) {
                r.push(UnknownRole, &loc, format!("role `{id}` is not defined"));
            }
        }
    }
    for start in o.interaction.escalation_paths.keys() {
        let mut visited = BTreeSet::new();
        let mut cur = start.as_str();
        while let Some(next) = o.interaction.escalation_paths.get(cur) {
            if !visited.insert(cur) {
                break;
            }
            if next == start {
                r.push(
                    EscalationCycle,
                    format!("interaction.escalation_paths[{start}]"),
                    format!("escalation from `{start}` returns to itself"),
                );
                break;
            }
            cur = next;
        }
    }

    r
}
