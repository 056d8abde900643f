//! Skill registry and ontology-constrained discovery.
//!
//! Discovery first drops every skill whose quality is below the strictest
//! governance threshold among its own domain tags, then ranks the remaining
//! skills by a weighted sum of four components in `[0, 1]`: lexical overlap,
//! hierarchical domain match, capability overlap and role match.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ontology::path;
use crate::text::term_set;

#[derive(Debug, thiserror::Error)]
pub enum DiscoveryError {
    #[error("skill `{0}` is already registered")]
    DuplicateSkill(String),
    #[error("skill `{id}`: {reason}")]
    InvalidSkill { id: String, reason: String },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("query limit must be at least 1")]
    InvalidLimit,
    #[error("malformed input: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub domain_paths: Vec<String>,
    #[serde(default)]
    pub capabilities: Vec<String>,
    #[serde(default)]
    pub roles: Vec<String>,
    pub quality: f64,
}

impl SkillRecord {
    fn check(&self) -> Result<(), DiscoveryError> {
        let bad = |reason: &str| DiscoveryError::InvalidSkill { id: self.id.clone(), reason: reason.into() };
        if self.id.trim().is_empty() {
            return Err(bad("id must be nonempty"));
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(bad("quality must lie in [0, 1]"));
        }
        if self.domain_paths.is_empty() {
            return Err(bad("at least one domain path is required"));
        }
        for p in &self.domain_paths {
            path::segments(p).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryQuery {
    pub text: String,
    pub domain: String,
    #[serde(default)]
    pub capabilities: Vec<String>,
    #[serde(default)]
    pub role: Option<String>,
    limit: usize,
}

impl DiscoveryQuery {
    pub fn new(text: impl Into<String>, domain: impl Into<String>, limit: usize) -> Result<Self, DiscoveryError> {
        if limit == 0 {
            return Err(DiscoveryError::InvalidLimit);
        }
        Ok(Self { text: text.into(), domain: domain.into(), capabilities: Vec::new(), role: None, limit })
    }

    pub fn with_capabilities<I, S>(mut self, caps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.capabilities = caps.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = Some(role.into());
        self
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    semantic: f64,
    ontological: f64,
    capability: f64,
    role: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        Self { semantic: 0.4, ontological: 0.3, capability: 0.2, role: 0.1 }
    }
}

impl ScoringWeights {
    pub fn new(semantic: f64, ontological: f64, capability: f64, role: f64) -> Result<Self, DiscoveryError> {
        let w = [semantic, ontological, capability, role];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DiscoveryError::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(DiscoveryError::InvalidWeights("weights must not all be zero".into()));
        }
        Ok(Self { semantic, ontological, capability, role })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.semantic, self.ontological, self.capability, self.role]
    }
}

/// Governance thresholds per vertical. A path inherits the threshold of its
/// nearest mapped ancestor-or-self, falling back to `default`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GovernancePolicy {
    thresholds: BTreeMap<String, f64>,
    default: f64,
}

impl Default for GovernancePolicy {
    fn default() -> Self {
        let thresholds = [("fintech".to_string(), 0.8), ("healthcare".to_string(), 0.8)].into();
        Self { thresholds, default: 0.5 }
    }
}

impl GovernancePolicy {
    pub fn new(thresholds: BTreeMap<String, f64>, default: f64) -> Result<Self, DiscoveryError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(default) {
            return Err(DiscoveryError::InvalidPolicy("default threshold must lie in [0, 1]".into()));
        }
        if let Some((p, t)) = thresholds.iter().find(|(_, t)| !in_unit(**t)) {
            return Err(DiscoveryError::InvalidPolicy(format!("threshold {t} for `{p}` is outside [0, 1]")));
        }
        Ok(Self { thresholds, default })
    }

    /// Parses a policy file: an object of `path -> threshold` with an
    /// optional `default` key.
    pub fn from_json(doc: &str) -> Result<Self, DiscoveryError> {
        let mut map: BTreeMap<String, f64> =
            serde_json::from_str(doc).map_err(|e| DiscoveryError::Parse(e.to_string()))?;
        let default = map.remove("default").unwrap_or(Self::default().default);
        Self::new(map, default)
    }

    pub fn default_threshold(&self) -> f64 {
        self.default
    }

    pub fn threshold(&self, vertical: &str) -> f64 {
        let mut cur = Some(vertical);
        while let Some(p) = cur {
            if let Some(t) = self.thresholds.get(p) {
                return *t;
            }
            cur = path::parent(p);
        }
        self.default
    }

    /// Strictest threshold over a skill's own domain tags.
    pub fn required_quality(&self, skill: &SkillRecord) -> f64 {
        skill
            .domain_paths
            .iter()
            .map(|d| self.threshold(d))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_eligible(&self, skill: &SkillRecord) -> bool {
        skill.quality >= self.required_quality(skill)
    }
}

/// 1.0 for an exact match, 0.5 when the skill path is a strict ancestor of
/// the query path, else 0.0.
pub fn domain_match(skill_path: &str, query_path: &str) -> f64 {
    if skill_path == query_path {
        1.0
    } else if path::is_ancestor(skill_path, query_path) {
        0.5
    } else {
        0.0
    }
}

/// Fraction of distinct query terms present in the skill's name or
/// description.
pub fn lexical_rank(skill: &SkillRecord, query_text: &str) -> f64 {
    let q = term_set(query_text);
    if q.is_empty() {
        return 0.0;
    }
    let mut doc = term_set(&skill.name);
    doc.extend(term_set(&skill.description));
    overlap_ratio(&q, &doc)
}

fn overlap_ratio(q: &BTreeSet<String>, doc: &BTreeSet<String>) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    q.iter().filter(|t| doc.contains(*t)).count() as f64 / q.len() as f64
}

/// Fraction of requested capabilities the skill offers; 0.0 when none are
/// requested.
pub fn capability_match(skill: &SkillRecord, query: &DiscoveryQuery) -> f64 {
    if query.capabilities.is_empty() {
        return 0.0;
    }
    let wanted: BTreeSet<&str> = query.capabilities.iter().map(String::as_str).collect();
    let hits = wanted.iter().filter(|c| skill.capabilities.iter().any(|s| s == *c)).count();
    hits as f64 / wanted.len() as f64
}

pub fn role_match(skill: &SkillRecord, role: Option<&str>) -> f64 {
    match role {
        Some(r) if skill.roles.iter().any(|s| s == r) => 1.0,
        _ => 0.0,
    }
}

/// The four score components, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreComponents {
    pub lexical: f64,
    pub domain: f64,
    pub capability: f64,
    pub role: f64,
}

impl ScoreComponents {
    pub fn weighted(&self, w: &ScoringWeights) -> f64 {
        w.semantic * self.lexical + w.ontological * self.domain + w.capability * self.capability + w.role * self.role
    }
}

pub fn components(skill: &SkillRecord, query: &DiscoveryQuery) -> ScoreComponents {
    ScoreComponents {
        lexical: lexical_rank(skill, &query.text),
        domain: best_domain_match(skill, &query.domain),
        capability: capability_match(skill, query),
        role: role_match(skill, query.role.as_deref()),
    }
}

fn best_domain_match(skill: &SkillRecord, query_domain: &str) -> f64 {
    skill
        .domain_paths
        .iter()
        .map(|p| domain_match(p, query_domain))
        .fold(0.0, f64::max)
}

pub fn score(skill: &SkillRecord, query: &DiscoveryQuery, weights: &ScoringWeights) -> f64 {
    components(skill, query).weighted(weights)
}

pub fn filter_eligible<'a>(skills: &'a [SkillRecord], policy: &GovernancePolicy) -> Vec<&'a SkillRecord> {
    skills.iter().filter(|s| policy.is_eligible(s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSkill {
    pub id: String,
    pub name: String,
    pub score: f64,
    pub components: ScoreComponents,
}

#[derive(Debug, Clone)]
struct IndexedSkill {
    record: SkillRecord,
    terms: BTreeSet<String>,
}

impl IndexedSkill {
    fn new(record: SkillRecord) -> Self {
        let mut terms = term_set(&record.name);
        terms.extend(term_set(&record.description));
        Self { record, terms }
    }
}

/// Immutable view of the registry at one point in time.
#[derive(Debug, Clone, Default)]
pub struct RegistrySnapshot {
    skills: Vec<IndexedSkill>,
    ids: HashSet<String>,
}

impl RegistrySnapshot {
    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &SkillRecord> {
        self.skills.iter().map(|s| &s.record)
    }

    /// Governance filter, weighted scoring, then a sort by descending score
    /// with ascending id as the tie-break.
    pub fn discover(&self, query: &DiscoveryQuery, policy: &GovernancePolicy, weights: &ScoringWeights) -> Vec<RankedSkill> {
        let q_terms = term_set(&query.text);
        let mut ranked: Vec<RankedSkill> = self
            .skills
            .iter()
            .filter(|s| policy.is_eligible(&s.record))
            .map(|s| {
                let c = ScoreComponents {
                    lexical: overlap_ratio(&q_terms, &s.terms),
                    domain: best_domain_match(&s.record, &query.domain),
                    capability: capability_match(&s.record, query),
                    role: role_match(&s.record, query.role.as_deref()),
                };
                RankedSkill { id: s.record.id.clone(), name: s.record.name.clone(), score: c.weighted(weights), components: c }
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        ranked.truncate(query.limit);
        ranked
    }
}

/// Copy-on-write skill registry: readers take the current snapshot, writers
/// serialize and publish a new one.
#[derive(Debug, Default)]
pub struct SkillRegistry {
    current: RwLock<Arc<RegistrySnapshot>>,
    writer: Mutex<()>,
}

impl SkillRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = SkillRecord>) -> Result<Self, DiscoveryError> {
        let reg = Self::new();
        reg.register_all(records)?;
        Ok(reg)
    }

    /// Parses a skills file (a JSON list of skill records).
    pub fn from_json(doc: &str) -> Result<Self, DiscoveryError> {
        let records: Vec<SkillRecord> = serde_json::from_str(doc).map_err(|e| DiscoveryError::Parse(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn snapshot(&self) -> Arc<RegistrySnapshot> {
        Arc::clone(&self.current.read())
    }

    pub fn register(&self, record: SkillRecord) -> Result<(), DiscoveryError> {
        self.register_all([record])
    }

    /// Registers a batch atomically: either every record is published or none.
    pub fn register_all(&self, records: impl IntoIterator<Item = SkillRecord>) -> Result<(), DiscoveryError> {
        let _guard = self.writer.lock();
        let mut next = (*self.snapshot()).clone();
        for r in records {
            r.check()?;
            if !next.ids.insert(r.id.clone()) {
                return Err(DiscoveryError::DuplicateSkill(r.id));
            }
            next.skills.push(IndexedSkill::new(r));
        }
        *self.current.write() = Arc::new(next);
        Ok(())
    }

    pub fn discover(&self, query: &DiscoveryQuery, policy: &GovernancePolicy, weights: &ScoringWeights) -> Vec<RankedSkill> {
        self.snapshot().discover(query, policy, weights)
    }
}

/// Free-function form over a plain slice.
pub fn discover(
    query: &DiscoveryQuery,
    registry: &[SkillRecord],
    policy: &GovernancePolicy,
    weights: &ScoringWeights,
) -> Vec<RankedSkill> {
    let snapshot = RegistrySnapshot {
        skills: registry.iter().cloned().map(IndexedSkill::new).collect(),
        ids: HashSet::new(),
    };
    snapshot.discover(query, policy, weights)
}

const SYNTH_VERTICALS: &[&str] = &[
    "fintech",
    "fintech.payments",
    "fintech.payments.card_networks",
    "fintech.lending",
    "healthcare",
    "healthcare.claims",
    "healthcare.clinical",
    "insurance",
    "insurance.underwriting",
    "retail",
    "retail.ecommerce",
    "saas",
    "saas.b2b",
];

const SYNTH_WORDS: &[&str] = &[
    "payment", "fraud", "scoring", "claims", "triage", "underwriting", "risk", "ledger",
    "reconciliation", "churn", "forecast", "pricing", "compliance", "audit", "onboarding",
    "settlement", "chargeback", "patient", "eligibility", "invoice", "report", "anomaly",
    "detection", "customer", "segmentation", "policy", "renewal", "inventory", "demand", "kyc",
];

const SYNTH_CAPS: &[&str] = &[
    "classify", "summarize", "extract", "forecast", "score", "search", "translate", "validate",
];

const SYNTH_ROLES: &[&str] = &[
    "product_manager", "risk_analyst", "claims_adjuster", "compliance_officer", "underwriter", "data_scientist",
];

/// Deterministic synthetic registry for benchmarks and property tests.
pub fn synthetic_skills(n: usize, seed: u64) -> Vec<SkillRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pick = |rng: &mut ChaCha8Rng, pool: &[&str], lo: usize, hi: usize| -> Vec<String> {
                let k = rng.random_range(lo..=hi);
                let mut v: Vec<String> = pool.choose_multiple(rng, k).map(|s| s.to_string()).collect();
                v.sort();
                v
            };
            let name_words = pick(&mut rng, SYNTH_WORDS, 2, 3);
            let desc_words = pick(&mut rng, SYNTH_WORDS, 4, 8);
            let domain_paths = pick(&mut rng, SYNTH_VERTICALS, 1, 2);
            let capabilities = pick(&mut rng, SYNTH_CAPS, 1, 3);
            let roles = pick(&mut rng, SYNTH_ROLES, 0, 2);
            // two decimals so ties with thresholds are exercised
            let quality = f64::from(rng.random_range(30u32..=100)) / 100.0;
            SkillRecord {
                id: format!("skill-{i:04}"),
                name: name_words.join(" "),
                description: desc_words.join(" "),
                domain_paths,
                capabilities,
                roles,
                quality,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skill(id: &str, domains: &[&str], quality: f64) -> SkillRecord {
        SkillRecord {
            id: id.into(),
            name: "fraud scoring".into(),
            description: "payment fraud scoring for card networks".into(),
            domain_paths: domains.iter().map(|s| s.to_string()).collect(),
            capabilities: vec!["score".into(), "classify".into()],
            roles: vec!["risk_analyst".into()],
            quality,
        }
    }

    #[test]
    fn domain_match_cases() {
        assert_eq!(domain_match("fintech.payments", "fintech.payments"), 1.0);
        assert_eq!(domain_match("fintech", "fintech.payments.card_networks"), 0.5);
        assert_eq!(domain_match("healthcare", "fintech.payments"), 0.0);
        // a child never matches its parent query
        assert_eq!(domain_match("fintech.payments", "fintech"), 0.0);
    }

    #[test]
    fn lexical_rank_ratio() {
        let s = skill("a", &["fintech"], 1.0);
        assert_eq!(lexical_rank(&s, "payment fraud scoring"), 1.0);
        assert_eq!(lexical_rank(&s, "weather"), 0.0);
        assert_eq!(lexical_rank(&s, "fraud card oncology radiology"), 0.5);
        assert_eq!(lexical_rank(&s, ""), 0.0);
        assert_eq!(lexical_rank(&s, "FRAUD Fraud fraud"), 1.0);
    }

    #[test]
    fn governance_max_rule() {
        let mut t = BTreeMap::new();
        t.insert("fintech".to_string(), 0.8);
        t.insert("retail".to_string(), 0.5);
        let policy = GovernancePolicy::new(t, 0.5).unwrap();
        let skills = vec![skill("low", &["fintech", "retail"], 0.7), skill("high", &["fintech", "retail"], 0.9)];
        let ids: Vec<&str> = filter_eligible(&skills, &policy).iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["high"]);
        assert!(filter_eligible(&[], &policy).is_empty());
    }

    #[test]
    fn threshold_inherits_from_ancestor() {
        let policy = GovernancePolicy::default();
        assert_eq!(policy.threshold("fintech.payments.card_networks"), 0.8);
        assert_eq!(policy.threshold("healthcare"), 0.8);
        assert_eq!(policy.threshold("retail.ecommerce"), 0.5);
        assert_eq!(policy.threshold("fintechx"), 0.5);
    }

    #[test]
    fn policy_file() {
        let p = GovernancePolicy::from_json(r#"{"default": 0.4, "fintech": 0.9}"#).unwrap();
        assert_eq!(p.default_threshold(), 0.4);
        assert_eq!(p.threshold("fintech.lending"), 0.9);
        assert!(GovernancePolicy::from_json(r#"{"fintech": 1.5}"#).is_err());
    }

    #[test]
    fn weighted_sum_example() {
        let w = ScoringWeights::default();
        let c = ScoreComponents { lexical: 0.5, domain: 1.0, capability: 1.0, role: 0.0 };
        assert!((c.weighted(&w) - 0.7).abs() < 1e-12);
        let zero = ScoreComponents { lexical: 0.0, domain: 0.0, capability: 0.0, role: 0.0 };
        assert_eq!(zero.weighted(&w), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(ScoringWeights::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ScoringWeights::new(-0.1, 1.0, 0.0, 0.0).is_err());
        assert!(ScoringWeights::new(0.0, 1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn exact_domain_ranks_first() {
        let a = skill("a-parent", &["fintech"], 1.0);
        let b = skill("b-exact", &["fintech.payments"], 1.0);
        let q = DiscoveryQuery::new("fraud", "fintech.payments", 5).unwrap();
        let out = discover(&q, &[a, b], &GovernancePolicy::default(), &ScoringWeights::default());
        assert_eq!(out[0].id, "b-exact");
        assert_eq!(out[1].id, "a-parent");
    }

    #[test]
    fn single_skill_any_k() {
        let s = skill("only", &["retail"], 0.9);
        for k in 1..4 {
            let q = DiscoveryQuery::new("x", "retail", k).unwrap();
            let out = discover(&q, std::slice::from_ref(&s), &GovernancePolicy::default(), &ScoringWeights::default());
            assert_eq!(out.len(), 1);
        }
        assert!(DiscoveryQuery::new("x", "retail", 0).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let skills = vec![skill("c", &["retail"], 1.0), skill("a", &["retail"], 1.0), skill("b", &["retail"], 1.0)];
        let q = DiscoveryQuery::new("fraud", "retail", 3).unwrap();
        let out = discover(&q, &skills, &GovernancePolicy::default(), &ScoringWeights::default());
        let ids: Vec<&str> = out.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn registry_rejects_duplicates_and_bad_records() {
        let reg = SkillRegistry::new();
        reg.register(skill("a", &["retail"], 0.9)).unwrap();
        assert!(matches!(reg.register(skill("a", &["retail"], 0.9)), Err(DiscoveryError::DuplicateSkill(_))));
        assert!(reg.register(skill("q", &["retail"], 1.5)).is_err());
        assert!(reg.register(skill("e", &[], 0.9)).is_err());
        assert!(reg.register(skill("p", &["a..b"], 0.9)).is_err());
        // failed batch leaves the snapshot untouched
        assert!(reg.register_all([skill("b", &["retail"], 0.9), skill("b", &["retail"], 0.9)]).is_err());
        assert_eq!(reg.snapshot().len(), 1);
    }

    #[test]
    fn snapshots_are_stable_under_writes() {
        let reg = SkillRegistry::from_records(synthetic_skills(10, 1)).unwrap();
        let before = reg.snapshot();
        reg.register(skill("new", &["retail"], 0.9)).unwrap();
        assert_eq!(before.len(), 10);
        assert_eq!(reg.snapshot().len(), 11);
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let a = synthetic_skills(50, 7);
        assert_eq!(a, synthetic_skills(50, 7));
        assert_ne!(a, synthetic_skills(50, 8));
        assert!(SkillRegistry::from_records(a).is_ok());
    }
}
