mod common;

use ontoground_core::compliance::{AgentResponse, CitedMetric};
use ontoground_core::metrics::score_all;
use proptest::prelude::*;

const VOCAB: &[&str] = &[
    "ARR", "NPS", "churn rate", "customer churn", "Net Promotor Score", "Monthly Recurring Revenu", "roadmap",
    "users", "evidence", "business", "latency", "audit", "GDPR", "SOC2", "HIPAA", "ISO 27001", "Circular 11/2021",
    "pipeline_velocity", "hands off to", "escalates to", "product_manager", "ux_designer", "is", "at", "of", "%",
    ".", ";", "!", "42", "-3", "1,200", "0.5", "2024/2025", "Ngân hàng", "ß", "\n",
];

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        proptest::collection::vec(proptest::sample::select(VOCAB.to_vec()), 1..40).prop_map(|w| w.join(" ")),
        "\\PC{1,120}",
    ]
}

fn cited() -> impl Strategy<Value = Option<Vec<CitedMetric>>> {
    proptest::option::of(proptest::collection::vec(
        (proptest::sample::select(vec!["ARR", "nps", "churn_rate", "ebitda"]), -1e3f64..1e3)
            .prop_map(|(n, v)| CitedMetric { name: n.into(), value: v, unit: None }),
        0..5,
    ))
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval(t in text(), c in cited(), industry in 0usize..6) {
        let o = common::blueprint(common::INDUSTRIES[industry]);
        let Ok(mut a) = AgentResponse::new(t) else { return Ok(()); };
        a.cited_metrics = c;
        for role in &o.roles {
            let s = score_all(&a, role, &o);
            for m in [&s.tf, &s.ma, &s.rc, &s.rs] {
                prop_assert!((0.0..=1.0).contains(&m.value), "{:?} = {}", m.metric, m.value);
                prop_assert_eq!(m.vacuous, m.evidence.is_empty() && m.sub_scores.is_none());
            }
            let sub = s.rs.sub_scores.unwrap();
            for v in [sub.decision_match, sub.kpi_align, sub.style_match] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
