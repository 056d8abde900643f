//! Response metrics: terminological fidelity (TF), metric accuracy (MA),
//! regulatory compliance (RC) and role consistency (RS).
//!
//! TF, MA and RC are ratios of compliant items to extracted items. When
//! nothing is extracted the ratio is defined as 1.0 and the score is marked
//! `vacuous`. Extraction is shared with [`crate::compliance`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::compliance::{
    extract_metric_refs, extract_regulatory_refs, extract_terms, mentioned_metrics, AgentResponse, TermKind,
};
use crate::ontology::{Ontology, RoleDef};
use crate::text::{fold, FoldedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    TF,
    MA,
    RC,
    RS,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::TF, Metric::MA, Metric::RC, Metric::RS];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TF => "tf",
            Metric::MA => "ma",
            Metric::RC => "rc",
            Metric::RS => "rs",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub item: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Evidence {
    fn new(item: impl Into<String>, ok: bool) -> Self {
        Self { item: item.into(), ok, note: None }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoleSubScores {
    pub decision_match: f64,
    pub kpi_align: f64,
    pub style_match: f64,
}

impl RoleSubScores {
    pub fn mean(&self) -> f64 {
        (self.decision_match + self.kpi_align + self.style_match) / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
    pub vacuous: bool,
    pub evidence: Vec<Evidence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub_scores: Option<RoleSubScores>,
}

impl MetricScore {
    fn ratio(metric: Metric, evidence: Vec<Evidence>) -> Self {
        let ok = evidence.iter().filter(|e| e.ok).count();
        let vacuous = evidence.is_empty();
        let value = if vacuous { 1.0 } else { ok as f64 / evidence.len() as f64 };
        Self { metric, value, vacuous, evidence, sub_scores: None }
    }

    /// Count of compliant items; `value * denominator` for ratio metrics.
    pub fn compliant(&self) -> usize {
        self.evidence.iter().filter(|e| e.ok).count()
    }
}

/// Distinct extracted terms that are entity terms or synonyms.
pub fn tf_score(a: &AgentResponse, o: &Ontology) -> MetricScore {
    let mut by_key: BTreeMap<String, (String, bool)> = BTreeMap::new();
    for t in extract_terms(&a.text, o) {
        let known = matches!(t.kind, TermKind::Known { .. });
        let slot = by_key.entry(t.key()).or_insert_with(|| (t.text.clone(), false));
        slot.1 |= known;
    }
    let evidence = by_key.into_values().map(|(text, ok)| Evidence::new(text, ok)).collect();
    MetricScore::ratio(Metric::TF, evidence)
}

/// Metric references whose value lies in the metric's healthy range.
pub fn ma_score(a: &AgentResponse, o: &Ontology) -> MetricScore {
    let evidence = extract_metric_refs(a, &o.domain)
        .into_iter()
        .map(|r| {
            let item = format!("{} = {}", r.name, r.value);
            match o.domain.metrics.get(&r.name) {
                Some(m) => Evidence::new(item, m.healthy_range.contains(r.value)),
                None => Evidence::new(item, false).note("UNKNOWN_METRIC"),
            }
        })
        .collect();
    MetricScore::ratio(Metric::MA, evidence)
}

/// Distinct regulatory references declared in the governance layer.
pub fn rc_score(a: &AgentResponse, o: &Ontology) -> MetricScore {
    let mut by_id: BTreeMap<String, (String, bool)> = BTreeMap::new();
    for r in extract_regulatory_refs(&a.text, &o.domain) {
        by_id.entry(r.normalized).or_insert((r.text, r.framework.is_some()));
    }
    let evidence = by_id.into_values().map(|(text, ok)| Evidence::new(text, ok)).collect();
    MetricScore::ratio(Metric::RC, evidence)
}

fn group_hits(ft: &FoldedText<'_>, words: &[String]) -> usize {
    words.iter().map(|w| ft.find_phrase(w).len()).sum()
}

/// Mean of decision-pattern coverage, KPI alignment and style match.
///
/// * decision_match: fraction of the role's decision-pattern tags whose
///   keyword group has at least one hit. A tag without a keyword group is
///   matched on the tag itself.
/// * kpi_align: fraction of cited metric names in the role's metric focus,
///   1.0 when none are cited.
/// * style_match: 1 when the style group with the most hits is unique and
///   equals the role's communication style, else 0.
pub fn rs_score(a: &AgentResponse, role: &RoleDef, o: &Ontology) -> MetricScore {
    let ft = FoldedText::new(&a.text);
    let mut evidence = Vec::new();

    let mut hit_groups = 0;
    for tag in &role.decision_patterns {
        let fallback = [tag.replace('-', " ")];
        let words = o.lexicons.decision_patterns.get(tag).map(Vec::as_slice).unwrap_or(&fallback);
        let hit = group_hits(&ft, words) > 0;
        hit_groups += usize::from(hit);
        evidence.push(Evidence::new(format!("decision:{tag}"), hit));
    }
    let decision_match =
        if role.decision_patterns.is_empty() { 1.0 } else { hit_groups as f64 / role.decision_patterns.len() as f64 };

    let cited: BTreeSet<String> = match &a.cited_metrics {
        Some(list) => list.iter().map(|c| c.name.clone()).collect(),
        None => mentioned_metrics(&a.text, &o.domain).into_iter().collect(),
    };
    let focus: BTreeSet<String> = role.metrics_focus.iter().map(|m| fold(m)).collect();
    let aligned = cited.iter().filter(|c| focus.contains(&fold(c))).count();
    for c in &cited {
        evidence.push(Evidence::new(format!("kpi:{c}"), focus.contains(&fold(c))));
    }
    let kpi_align = if cited.is_empty() { 1.0 } else { aligned as f64 / cited.len() as f64 };

    let counts: Vec<(&String, usize)> =
        o.lexicons.styles.iter().map(|(tag, words)| (tag, group_hits(&ft, words))).collect();
    let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
    let leaders: Vec<&String> = counts.iter().filter(|c| c.1 == best).map(|c| c.0).collect();
    let style_match = if best > 0 && leaders.len() == 1 && *leaders[0] == role.communication_style {
        1.0
    } else {
        0.0
    };
    let style_note = match (best, leaders.as_slice()) {
        (0, _) => "no style hits".to_string(),
        (_, [one]) => format!("majority {one}"),
        _ => "style tie".to_string(),
    };
    evidence.push(Evidence::new(format!("style:{}", role.communication_style), style_match == 1.0).note(style_note));

    let sub = RoleSubScores { decision_match, kpi_align, style_match };
    MetricScore { metric: Metric::RS, value: sub.mean(), vacuous: false, evidence, sub_scores: Some(sub) }
}

/// All four scores for one response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSet {
    pub tf: MetricScore,
    pub ma: MetricScore,
    pub rc: MetricScore,
    pub rs: MetricScore,
}

impl ScoreSet {
    pub fn get(&self, m: Metric) -> &MetricScore {
        match m {
            Metric::TF => &self.tf,
            Metric::MA => &self.ma,
            Metric::RC => &self.rc,
            Metric::RS => &self.rs,
        }
    }
}

pub fn score_all(a: &AgentResponse, role: &RoleDef, o: &Ontology) -> ScoreSet {
    ScoreSet { tf: tf_score(a, o), ma: ma_score(a, o), rc: rc_score(a, o), rs: rs_score(a, role, o) }
}
