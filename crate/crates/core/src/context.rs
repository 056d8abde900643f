//! Token-budgeted context resolution.
//!
//! A query is resolved against a (possibly tenant-customized) ontology into
//! three sections, ROLE, DOMAIN and INTERACTION, each a list of one-line
//! items under a fixed header. [`optimize`] then drops whole items until the
//! rendered text fits the token budget: INTERACTION items go first, then
//! DOMAIN, then ROLE, each section losing its items last-to-first.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use serde::Serialize;

use crate::ontology::{
    merge_overlay, path, DomainOntology, EntityDef, GovernanceDef, MetricDef, Ontology,
    OntologyError, RoleDef, TenantOverlay,
};
use crate::text::{fold, FoldedText};

pub const DEFAULT_TOKEN_BUDGET: usize = 2000;
pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(300);

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("token budget must be at least 1")]
    InvalidBudget,
    #[error("first ROLE item needs {needed} tokens but the budget is {budget}")]
    BudgetInfeasible { needed: usize, budget: usize },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Number of maximal runs of non-whitespace characters.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Layer {
    Role,
    Domain,
    Interaction,
}

impl Layer {
    /// Highest priority first.
    pub const PRIORITY: [Layer; 3] = [Layer::Role, Layer::Domain, Layer::Interaction];

    pub fn header(self) -> &'static str {
        match self {
            Layer::Role => "## ROLE CONTEXT",
            Layer::Domain => "## DOMAIN CONTEXT",
            Layer::Interaction => "## INTERACTION CONTEXT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverConfig {
    token_budget: usize,
    cache_ttl: Duration,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self { token_budget: DEFAULT_TOKEN_BUDGET, cache_ttl: DEFAULT_CACHE_TTL }
    }
}

impl ResolverConfig {
    pub fn new(token_budget: usize) -> Result<Self, ContextError> {
        if token_budget == 0 {
            return Err(ContextError::InvalidBudget);
        }
        Ok(Self { token_budget, ..Self::default() })
    }

    pub fn with_cache_ttl(mut self, ttl: Duration) -> Self {
        self.cache_ttl = ttl;
        self
    }

    pub fn token_budget(&self) -> usize {
        self.token_budget
    }

    pub fn cache_ttl(&self) -> Duration {
        self.cache_ttl
    }
}

/// Unbudgeted items per layer, in priority order by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawContext {
    pub role: Vec<String>,
    pub domain: Vec<String>,
    pub interaction: Vec<String>,
}

impl RawContext {
    pub fn layer(&self, layer: Layer) -> &[String] {
        match layer {
            Layer::Role => &self.role,
            Layer::Domain => &self.domain,
            Layer::Interaction => &self.interaction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Section {
    pub layer: Layer,
    /// Header plus one line per item; empty when no item survived.
    pub text: String,
    pub items: Vec<String>,
}

/// Items removed to meet the budget, per layer, in original order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TruncationReport {
    pub role: Vec<String>,
    pub domain: Vec<String>,
    pub interaction: Vec<String>,
}

impl TruncationReport {
    pub fn dropped(&self, layer: Layer) -> &[String] {
        match layer {
            Layer::Role => &self.role,
            Layer::Domain => &self.domain,
            Layer::Interaction => &self.interaction,
        }
    }

    pub fn total(&self) -> usize {
        self.role.len() + self.domain.len() + self.interaction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextBundle {
    /// Always ROLE, DOMAIN, INTERACTION.
    pub sections: Vec<Section>,
    pub token_count: usize,
    pub token_budget: usize,
    pub truncation_report: TruncationReport,
}

impl ContextBundle {
    /// The rendered context: nonempty sections separated by a blank line.
    pub fn text(&self) -> String {
        self.sections
            .iter()
            .filter(|s| !s.text.is_empty())
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn section(&self, layer: Layer) -> &Section {
        self.sections.iter().find(|s| s.layer == layer).expect("all layers present")
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serialization is infallible")
    }

    fn build(raw: &RawContext, kept: [usize; 3], budget: usize) -> Self {
        let mut sections = Vec::with_capacity(3);
        let mut report = TruncationReport::default();
        for (layer, keep) in Layer::PRIORITY.into_iter().zip(kept) {
            let items = raw.layer(layer);
            let kept_items = items[..keep].to_vec();
            let dropped = items[keep..].to_vec();
            match layer {
                Layer::Role => report.role = dropped,
                Layer::Domain => report.domain = dropped,
                Layer::Interaction => report.interaction = dropped,
            }
            sections.push(Section { layer, text: render_section(layer, &kept_items), items: kept_items });
        }
        let mut bundle = Self { sections, token_count: 0, token_budget: budget, truncation_report: report };
        bundle.token_count = count_tokens(&bundle.text());
        bundle
    }
}

fn render_section(layer: Layer, items: &[String]) -> String {
    if items.is_empty() {
        return String::new();
    }
    let mut s = String::from(layer.header());
    for item in items {
        s.push('\n');
        s.push_str(item);
    }
    s
}

/// Drops whole items, lowest priority first, until the rendered context fits
/// in `budget` tokens. A section's header is only paid for while it keeps at
/// least one item.
pub fn optimize(raw: &RawContext, budget: usize) -> Result<ContextBundle, ContextError> {
    let header_cost = |l: Layer| count_tokens(l.header());
    let item_costs: Vec<Vec<usize>> = Layer::PRIORITY
        .iter()
        .map(|&l| raw.layer(l).iter().map(|i| count_tokens(i)).collect())
        .collect();
    let mut kept = [raw.role.len(), raw.domain.len(), raw.interaction.len()];
    let total = |kept: &[usize; 3]| -> usize {
        Layer::PRIORITY
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if kept[i] == 0 {
                    0
                } else {
                    header_cost(l) + item_costs[i][..kept[i]].iter().sum::<usize>()
                }
            })
            .sum()
    };

    while total(&kept) > budget {
        if kept[2] > 0 {
            kept[2] -= 1;
        } else if kept[1] > 0 {
            kept[1] -= 1;
        } else if kept[0] > 1 {
            kept[0] -= 1;
        } else {
            return Err(ContextError::BudgetInfeasible { needed: total(&kept), budget });
        }
    }
    Ok(ContextBundle::build(raw, kept, budget))
}

/// Matched slice of a domain ontology for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainContext {
    /// The selected vertical, or `None` for an ontology without verticals.
    pub vertical: Option<String>,
    pub ancestors: Vec<String>,
    pub entities: Vec<(String, EntityDef)>,
    pub metrics: Vec<(String, MetricDef)>,
    pub governance: Vec<(String, GovernanceDef)>,
}

/// Lexicon-driven domain resolution.
///
/// Entities match when their term or a synonym occurs in the case-folded
/// query; metrics match by name or through a same-named entity's synonyms.
/// An identifier such as `loss_ratio` also matches `loss ratio`.
/// The selected vertical is the deepest one whose last segment occurs in the
/// query (first declared wins ties), else the root vertical.
pub fn resolve_domain(d: &DomainOntology, q: &str) -> DomainContext {
    let text = FoldedText::new(q);
    let mentions = |t: &str| text.contains_phrase(t) || (t.contains('_') && text.contains_phrase(&t.replace('_', " ")));

    let entities: Vec<(String, EntityDef)> = d
        .entities
        .iter()
        .filter(|(term, e)| {
            mentions(term) || e.synonyms.iter().any(|s| text.contains_phrase(s))
        })
        .map(|(t, e)| (t.clone(), e.clone()))
        .collect();

    let metrics: Vec<(String, MetricDef)> = d
        .metrics
        .iter()
        .filter(|(name, _)| {
            mentions(name)
                || d.entities.iter().any(|(term, e)| {
                    fold(term) == fold(name) && e.synonyms.iter().any(|s| text.contains_phrase(s))
                })
        })
        .map(|(n, m)| (n.clone(), m.clone()))
        .collect();

    let mut best: Option<&String> = None;
    for v in &d.verticals {
        if text.contains_phrase(path::leaf(v))
            && best.is_none_or(|b| path::depth(v) > path::depth(b))
        {
            best = Some(v);
        }
    }
    let vertical = best.map(String::as_str).or_else(|| d.root_vertical()).map(str::to_string);
    let ancestors = vertical
        .as_deref()
        .and_then(|v| path::ancestors(v).ok())
        .unwrap_or_default();

    let governance = d
        .governance
        .iter()
        .filter(|(_, g)| vertical.as_deref().is_none_or(|v| g.applies_to(v)))
        .map(|(id, g)| (id.clone(), g.clone()))
        .collect();

    DomainContext { vertical, ancestors, entities, metrics, governance }
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.join(", ")
    }
}

pub fn role_items(r: &RoleDef) -> Vec<String> {
    vec![
        format!("id: {}", r.id),
        format!("decision_patterns: {}", list(&r.decision_patterns)),
        format!("metrics_focus: {}", list(&r.metrics_focus)),
        format!("communication_style: {}", r.communication_style),
        format!("expertise_domains: {}", list(&r.expertise_domains)),
        format!("approval_authority: {}", list(&r.approval_authority)),
    ]
}

pub fn domain_items(ctx: &DomainContext) -> Vec<String> {
    let mut items = Vec::new();
    if let Some(v) = &ctx.vertical {
        let mut line = format!("vertical: {v}");
        if !ctx.ancestors.is_empty() {
            let _ = write!(line, "; ancestors: {}", ctx.ancestors.join(", "));
        }
        items.push(line);
    }
    for (term, e) in &ctx.entities {
        let mut line = format!("entity {term}: {}", e.definition);
        if !e.synonyms.is_empty() {
            let _ = write!(line, "; synonyms: {}", e.synonyms.join(", "));
        }
        items.push(line);
    }
    for (name, m) in &ctx.metrics {
        let r = &m.healthy_range;
        items.push(format!(
            "metric {name}: healthy_range [{}, {}] {}; world_class: {}; direction: {}",
            r.lower,
            r.upper,
            r.unit,
            m.world_class,
            m.direction.as_str()
        ));
    }
    for (id, g) in &ctx.governance {
        items.push(format!("governance {id}: {}", g.description));
    }
    items
}

pub fn interaction_items(o: &Ontology, role: &str) -> Vec<String> {
    let i = &o.interaction;
    let mut items = Vec::new();
    for h in i.handoffs.iter().filter(|h| h.touches(role)) {
        items.push(format!(
            "handoff {} -> {}: trigger: {}; artifacts: {}; approval_required: {}",
            h.from_role,
            h.to_role,
            h.trigger,
            list(&h.artifacts),
            h.approval_required
        ));
    }
    for c in i.approval_chains.iter().filter(|c| c.roles.iter().any(|r| r == role)) {
        items.push(format!(
            "approval_chain: {}; timeout_seconds: {}",
            c.roles.join(" -> "),
            c.timeout_seconds
        ));
    }
    for (from, to) in i.escalation_paths.iter().filter(|(f, t)| *f == role || *t == role) {
        items.push(format!("escalation {from} -> {to}"));
    }
    items
}

/// Uncached resolution: merge overlay, extract the role, resolve domain and
/// interactions, serialize and fit to budget.
///
/// When not even the first ROLE item fits, the result is an empty bundle
/// whose truncation report lists every item.
pub fn resolve_context(
    q: &str,
    tenant: Option<&TenantOverlay>,
    role: &str,
    o: &Ontology,
    cfg: &ResolverConfig,
) -> Result<ContextBundle, ContextError> {
    let merged: Cow<'_, Ontology> = match tenant {
        Some(ov) => Cow::Owned(merge_overlay(o, ov)?),
        None => Cow::Borrowed(o),
    };
    let role_def = merged.role(role).ok_or_else(|| ContextError::UnknownRole(role.to_string()))?;
    let domain = resolve_domain(&merged.domain, q);
    let raw = RawContext {
        role: role_items(role_def),
        domain: domain_items(&domain),
        interaction: interaction_items(&merged, role),
    };
    match optimize(&raw, cfg.token_budget) {
        Ok(bundle) => Ok(bundle),
        Err(ContextError::BudgetInfeasible { .. }) => {
            Ok(ContextBundle::build(&raw, [0, 0, 0], cfg.token_budget))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    tenant: Option<String>,
    role: String,
    industry: String,
    query: String,
    budget: usize,
}

/// In-process resolver with a TTL cache.
///
/// Concurrent lookups share a read lock; on a miss the bundle is resolved
/// outside any lock and inserted last-writer-wins.
#[derive(Debug, Default)]
pub struct ContextResolver {
    cfg: ResolverConfig,
    cache: RwLock<HashMap<CacheKey, (Instant, Arc<ContextBundle>)>>,
    resolutions: AtomicU64,
}

impl ContextResolver {
    pub fn new(cfg: ResolverConfig) -> Self {
        Self { cfg, ..Self::default() }
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.cfg
    }

    /// Number of uncached resolutions performed so far.
    pub fn resolutions(&self) -> u64 {
        self.resolutions.load(Ordering::Relaxed)
    }

    pub fn resolve(
        &self,
        q: &str,
        tenant: Option<&TenantOverlay>,
        role: &str,
        o: &Ontology,
    ) -> Result<Arc<ContextBundle>, ContextError> {
        let key = CacheKey {
            tenant: tenant.map(|t| t.tenant_id.clone()),
            role: role.to_string(),
            industry: o.industry_id.clone(),
            query: q.to_string(),
            budget: self.cfg.token_budget,
        };
        if let Some((at, bundle)) = self.cache.read().get(&key) {
            if at.elapsed() < self.cfg.cache_ttl {
                return Ok(Arc::clone(bundle));
            }
        }
        let bundle = Arc::new(resolve_context(q, tenant, role, o, &self.cfg)?);
        self.resolutions.fetch_add(1, Ordering::Relaxed);
        self.cache.write().insert(key, (Instant::now(), Arc::clone(&bundle)));
        Ok(bundle)
    }

    /// Removes expired entries.
    pub fn purge_expired(&self) {
        let ttl = self.cfg.cache_ttl;
        self.cache.write().retain(|_, (at, _)| at.elapsed() < ttl);
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::saas;

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn token_rule() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("ARR NPS churn_rate"), 3);
        assert_eq!(count_tokens("  a\n\tb  "), 2);
    }

    #[test]
    fn saas_role_section_golden_count() {
        // header 3 + id 2 + decision_patterns 4 + metrics_focus 5
        // + communication_style 2 + expertise_domains 3 + approval_authority 3
        let o = saas();
        let text = render_section(Layer::Role, &role_items(o.role("product_manager").unwrap()));
        assert_eq!(count_tokens(&text), 22);
    }

    #[test]
    fn arithmetic_example() {
        // ROLE and DOMAIN are 900 and 800 tokens including their headers;
        // INTERACTION has three 200-token items plus a 3-token header.
        let raw = RawContext {
            role: vec![words(897, "r")],
            domain: vec![words(797, "d")],
            interaction: vec![words(200, "a"), words(200, "b"), words(200, "c")],
        };
        let b = optimize(&raw, 2000).unwrap();
        assert_eq!(b.section(Layer::Role).items.len(), 1);
        assert_eq!(b.section(Layer::Domain).items.len(), 1);
        assert_eq!(b.section(Layer::Interaction).items, vec![words(200, "a")]);
        assert_eq!(b.token_count, 900 + 800 + 3 + 200);
        assert_eq!(b.truncation_report.interaction.len(), 2);
    }

    #[test]
    fn fitting_input_is_untouched() {
        let raw = RawContext {
            role: vec!["id: x".into()],
            domain: vec!["vertical: v".into()],
            interaction: vec!["escalation x -> y".into()],
        };
        let b = optimize(&raw, 100).unwrap();
        assert!(b.truncation_report.is_empty());
        assert_eq!(
            b.text(),
            "## ROLE CONTEXT\nid: x\n\n## DOMAIN CONTEXT\nvertical: v\n\n## INTERACTION CONTEXT\nescalation x -> y"
        );
        assert_eq!(b.token_count, count_tokens(&b.text()));
    }

    #[test]
    fn infeasible_first_role_item() {
        let raw = RawContext { role: vec![words(10, "r")], ..Default::default() };
        assert!(matches!(
            optimize(&raw, 5),
            Err(ContextError::BudgetInfeasible { needed: 13, budget: 5 })
        ));
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(matches!(ResolverConfig::new(0), Err(ContextError::InvalidBudget)));
    }

    #[test]
    fn domain_metric_match() {
        let o = saas();
        let ctx = resolve_domain(&o.domain, "analyze our churn_rate against ARR");
        let names: Vec<&str> = ctx.metrics.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["ARR", "churn_rate"]);
        assert_eq!(ctx.vertical.as_deref(), Some("saas"));
    }

    #[test]
    fn domain_fallback_to_root() {
        let o = saas();
        let ctx = resolve_domain(&o.domain, "hello there");
        assert_eq!(ctx.vertical.as_deref(), Some("saas"));
        assert!(ctx.entities.is_empty());
        assert!(ctx.metrics.is_empty());
        // only frameworks without vertical restriction apply at the root
        let gov: Vec<&str> = ctx.governance.iter().map(|(g, _)| g.as_str()).collect();
        assert_eq!(gov, vec!["GDPR", "SOC2"]);
    }

    #[test]
    fn synonym_pulls_metric() {
        let o = saas();
        let ctx = resolve_domain(&o.domain, "What drives our Net Promoter Score in b2c?");
        assert!(ctx.metrics.iter().any(|(n, _)| n == "NPS"));
        assert_eq!(ctx.vertical.as_deref(), Some("saas.b2c"));
        assert!(ctx.governance.iter().any(|(g, _)| g == "CCPA"));
    }

    #[test]
    fn interaction_only_touching_role() {
        let o = saas();
        let b = resolve_context("roadmap", None, "product_manager", &o, &ResolverConfig::new(10_000).unwrap())
            .unwrap();
        let role = b.section(Layer::Role);
        for field in ["decision_patterns", "metrics_focus", "communication_style", "expertise_domains", "approval_authority"] {
            assert!(role.text.contains(field), "{field}");
        }
        let inter = &b.section(Layer::Interaction).items;
        assert!(!inter.is_empty());
        for item in inter {
            assert!(item.contains("product_manager"), "{item}");
        }
        assert!(!inter.iter().any(|i| i.contains("ux_designer -> senior_developer")));
    }

    #[test]
    fn budget_of_one() {
        let o = saas();
        let b = resolve_context("churn_rate", None, "product_manager", &o, &ResolverConfig::new(1).unwrap())
            .unwrap();
        assert!(b.token_count <= 1);
        assert_eq!(b.truncation_report.role.len(), 6);
        assert!(b.truncation_report.total() > 8);
    }

    #[test]
    fn unknown_role() {
        let o = saas();
        assert!(matches!(
            resolve_context("q", None, "cfo", &o, &ResolverConfig::default()),
            Err(ContextError::UnknownRole(_))
        ));
    }

    #[test]
    fn overlay_is_applied() {
        let o = saas();
        let mut ov = TenantOverlay::empty("acme");
        ov.domain.metrics.insert(
            "churn_rate".into(),
            crate::ontology::MetricOverride {
                healthy_range: Some(crate::ontology::HealthyRange { lower: 0.0, upper: 5.0, unit: "%".into() }),
                ..Default::default()
            },
        );
        let b = resolve_context("churn_rate", Some(&ov), "product_manager", &o, &ResolverConfig::default()).unwrap();
        assert!(b.text().contains("healthy_range [0, 5] %"));
    }

    #[test]
    fn cache_hits_within_ttl() {
        let o = saas();
        let resolver = ContextResolver::new(ResolverConfig::default());
        let a = resolver.resolve("churn_rate against ARR", None, "product_manager", &o).unwrap();
        let b = resolver.resolve("churn_rate against ARR", None, "product_manager", &o).unwrap();
        assert_eq!(a, b);
        assert_eq!(resolver.resolutions(), 1);
        resolver.resolve("NPS", None, "product_manager", &o).unwrap();
        assert_eq!(resolver.resolutions(), 2);
    }

    #[test]
    fn cache_expires() {
        let o = saas();
        let resolver = ContextResolver::new(ResolverConfig::default().with_cache_ttl(Duration::ZERO));
        resolver.resolve("q", None, "product_manager", &o).unwrap();
        resolver.resolve("q", None, "product_manager", &o).unwrap();
        assert_eq!(resolver.resolutions(), 2);
        resolver.purge_expired();
        assert_eq!(resolver.cached_entries(), 0);
    }

    #[test]
    fn concurrent_lookups() {
        let o = saas();
        let resolver = ContextResolver::new(ResolverConfig::default());
        let first = resolver.resolve("ARR", None, "product_manager", &o).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..50 {
                        let b = resolver.resolve("ARR", None, "product_manager", &o).unwrap();
                        assert_eq!(*b, *first);
                    }
                });
            }
        });
        assert_eq!(resolver.resolutions(), 1);
    }
}
