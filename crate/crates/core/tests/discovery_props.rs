mod common;

use std::collections::BTreeMap;

use common::oracles::{discover_exhaustive, oracle_threshold, OracleQuery};
use ontoground_core::discovery::{
    synthetic_skills, DiscoveryQuery, GovernancePolicy, ScoringWeights, SkillRecord, SkillRegistry,
};
use proptest::prelude::*;

const PATHS: [&str; 8] = [
    "fintech",
    "fintech.payments",
    "fintech.payments.card_networks",
    "healthcare",
    "healthcare.claims",
    "insurance",
    "retail.ecommerce",
    "saas.b2b",
];

fn policy_entries() -> impl Strategy<Value = (Vec<(String, f64)>, f64)> {
    (
        proptest::collection::btree_map(proptest::sample::select(PATHS.to_vec()), (0u32..=100).prop_map(|q| f64::from(q) / 100.0), 0..5),
        (0u32..=100).prop_map(|q| f64::from(q) / 100.0),
    )
        .prop_map(|(m, d)| (m.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), d))
}

fn policy(entries: &[(String, f64)], default: f64) -> GovernancePolicy {
    GovernancePolicy::new(entries.iter().cloned().collect::<BTreeMap<_, _>>(), default).unwrap()
}

fn query_strategy() -> impl Strategy<Value = (String, String, Vec<String>, Option<String>, usize)> {
    (
        proptest::sample::subsequence(vec!["fraud", "payment", "claims", "risk", "audit", "kyc", "churn", "x"], 0..5),
        proptest::sample::select(PATHS.to_vec()),
        proptest::sample::subsequence(vec!["classify", "score", "search", "forecast"], 0..3),
        proptest::option::of(proptest::sample::select(vec!["risk_analyst", "underwriter", "product_manager"])),
        1usize..50,
    )
        .prop_map(|(w, d, c, r, k)| {
            (w.join(" "), d.to_string(), c.into_iter().map(String::from).collect(), r.map(String::from), k)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discover_equals_exhaustive_oracle(
        n in 0usize..300,
        seed in any::<u64>(),
        (entries, default) in policy_entries(),
        (text, domain, caps, role, k) in query_strategy(),
    ) {
        let skills = synthetic_skills(n, seed);
        let p = policy(&entries, default);
        let mut q = DiscoveryQuery::new(text.clone(), domain.clone(), k).unwrap().with_capabilities(caps.clone());
        if let Some(r) = &role {
            q = q.with_role(r.clone());
        }
        let got: Vec<(String, f64)> = SkillRegistry::from_records(skills.clone())
            .unwrap()
            .discover(&q, &p, &ScoringWeights::default())
            .into_iter()
            .map(|r| (r.id, r.score))
            .collect();
        let oq = OracleQuery { text: &text, domain: &domain, capabilities: &caps, role: role.as_deref(), k };
        prop_assert_eq!(got, discover_exhaustive(&skills, &entries, default, &oq));
    }

    #[test]
    fn no_skill_below_its_strictest_threshold(
        n in 1usize..200,
        seed in any::<u64>(),
        (entries, default) in policy_entries(),
        (text, domain, _, _, _) in query_strategy(),
    ) {
        let skills = synthetic_skills(n, seed);
        let p = policy(&entries, default);
        let q = DiscoveryQuery::new(text, domain, n).unwrap();
        let by_id: BTreeMap<&str, &SkillRecord> = skills.iter().map(|s| (s.id.as_str(), s)).collect();
        for r in ontoground_core::discovery::discover(&q, &skills, &p, &ScoringWeights::default()) {
            let s = by_id[r.id.as_str()];
            for d in &s.domain_paths {
                prop_assert!(s.quality >= oracle_threshold(&entries, default, d), "{} in {}", s.id, d);
            }
        }
    }
}

#[test]
fn six_hundred_skill_fixture_matches_generator() {
    let fixture: Vec<SkillRecord> = serde_json::from_str(&common::read_fixture("skills_600.json")).unwrap();
    assert_eq!(fixture, synthetic_skills(600, 42));
}

#[test]
fn policy_fixture_matches_default_policy() {
    let p = GovernancePolicy::from_json(&common::read_fixture("policy.json")).unwrap();
    assert_eq!(p, GovernancePolicy::default());
}

#[test]
fn duplicate_registration_is_rejected_atomically() {
    let skills = synthetic_skills(3, 1);
    let reg = SkillRegistry::from_records(skills.clone()).unwrap();
    let mut batch = synthetic_skills(5, 2);
    batch[4].id = skills[0].id.clone();
    assert!(reg.register_all(batch).is_err());
    assert_eq!(reg.snapshot().len(), 3);
}
