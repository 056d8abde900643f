use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::load::report_to_error;
use super::validate::validate_ontology;
use super::{
    ApprovalChain, Direction, EntityDef, GovernanceDef, HandoffPattern, HealthyRange, Ontology,
    OntologyError,
};

/// Tenant-specific customizations layered over a base ontology.
///
/// Role and metric entries override existing definitions field by field;
/// everything else is an addition. An overlay on its own is never a valid
/// ontology.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantOverlay {
    pub tenant_id: String,
    #[serde(default)]
    pub roles: Vec<RoleOverride>,
    #[serde(default)]
    pub domain: DomainOverlay,
    #[serde(default)]
    pub interaction: InteractionOverlay,
    #[serde(default)]
    pub external_metrics: Vec<String>,
}

impl TenantOverlay {
    pub fn empty(tenant_id: impl Into<String>) -> Self {
        Self { tenant_id: tenant_id.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleOverride {
    pub id: String,
    #[serde(default)]
    pub decision_patterns: Option<Vec<String>>,
    #[serde(default)]
    pub metrics_focus: Option<Vec<String>>,
    #[serde(default)]
    pub communication_style: Option<String>,
    #[serde(default)]
    pub expertise_domains: Option<Vec<String>>,
    #[serde(default)]
    pub approval_authority: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOverride {
    #[serde(default)]
    pub healthy_range: Option<HealthyRange>,
    #[serde(default)]
    pub world_class: Option<f64>,
    #[serde(default)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOverlay {
    #[serde(default)]
    pub verticals: Vec<String>,
    #[serde(default)]
    pub entities: BTreeMap<String, EntityDef>,
    #[serde(default)]
    pub metrics: BTreeMap<String, MetricOverride>,
    #[serde(default)]
    pub governance: BTreeMap<String, GovernanceDef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionOverlay {
    #[serde(default)]
    pub handoffs: Vec<HandoffPattern>,
    #[serde(default)]
    pub approval_chains: Vec<ApprovalChain>,
    #[serde(default)]
    pub escalation_paths: BTreeMap<String, String>,
}

pub fn load_overlay(document: &str) -> Result<TenantOverlay, OntologyError> {
    let overlay: TenantOverlay =
        serde_json::from_str(document).map_err(|e| OntologyError::Schema(e.to_string()))?;
    if overlay.tenant_id.trim().is_empty() {
        return Err(OntologyError::Schema("`tenant_id` must be nonempty".into()));
    }
    Ok(overlay)
}

fn push_unique<T: PartialEq>(list: &mut Vec<T>, item: T) {
    if !list.contains(&item) {
        list.push(item);
    }
}

/// Applies `overlay` on top of `base` and revalidates the result.
///
/// Overlay values win on conflict and additions are deduplicated, so
/// applying the same overlay twice is the same as applying it once.
pub fn merge_overlay(base: &Ontology, overlay: &TenantOverlay) -> Result<Ontology, OntologyError> {
    let mut o = base.clone();

    for ov in &overlay.roles {
        let role = o
            .roles
            .iter_mut()
            .find(|r| r.id == ov.id)
            .ok_or_else(|| OntologyError::Reference(format!("overlay overrides unknown role `{}`", ov.id)))?;
        if let Some(v) = &ov.decision_patterns {
            role.decision_patterns = v.clone();
        }
        if let Some(v) = &ov.metrics_focus {
            role.metrics_focus = v.clone();
        }
        if let Some(v) = &ov.communication_style {
            role.communication_style = v.clone();
        }
        if let Some(v) = &ov.expertise_domains {
            role.expertise_domains = v.clone();
        }
        if let Some(v) = &ov.approval_authority {
            role.approval_authority = v.clone();
        }
    }

    for (name, ov) in &overlay.domain.metrics {
        let metric = o.domain.metrics.get_mut(name).ok_or_else(|| {
            OntologyError::Reference(format!("overlay overrides unknown metric `{name}`"))
        })?;
        if let Some(r) = &ov.healthy_range {
            metric.healthy_range = r.clone();
        }
        if let Some(w) = ov.world_class {
            metric.world_class = w;
        }
        if let Some(d) = ov.direction {
            metric.direction = d;
        }
    }

    for v in &overlay.domain.verticals {
        push_unique(&mut o.domain.verticals, v.clone());
    }
    for (term, e) in &overlay.domain.entities {
        o.domain.entities.insert(term.clone(), e.clone());
    }
    for (id, g) in &overlay.domain.governance {
        o.domain.governance.insert(id.clone(), g.clone());
    }
    for h in &overlay.interaction.handoffs {
        push_unique(&mut o.interaction.handoffs, h.clone());
    }
    for c in &overlay.interaction.approval_chains {
        push_unique(&mut o.interaction.approval_chains, c.clone());
    }
    for (from, to) in &overlay.interaction.escalation_paths {
        o.interaction.escalation_paths.insert(from.clone(), to.clone());
    }
    for m in &overlay.external_metrics {
        push_unique(&mut o.external_metrics, m.clone());
    }

    if let Some(err) = report_to_error(&validate_ontology(&o)) {
        return Err(err);
    }
    Ok(o)
}
