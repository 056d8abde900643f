//! Output-side validation of agent responses against an ontology.
//!
//! Four independent clauses are checked, each universally over the mentions
//! extracted from the response:
//!
//! * **A** terminology: no extracted term is a near miss (one edit away) of
//!   an entity term or synonym without matching one exactly.
//! * **B** metrics: every cited metric value lies in its healthy range.
//! * **C** interactions: every described handoff or escalation between two
//!   roles is declared in the interaction layer.
//! * **D** governance: every cited regulatory framework is declared.
//!
//! A clause with nothing to check passes vacuously. Extraction is purely
//! lexical; the same extractors feed the response metrics in
//! [`crate::metrics`].

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ontology::{DomainOntology, Ontology};
use crate::text::{find_numbers, fold, one_edit_apart, phrase_key, sentence_spans, FoldedText};

#[derive(Debug, thiserror::Error)]
pub enum ComplianceError {
    #[error("response text must be nonempty")]
    EmptyResponse,
    #[error("malformed response: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitedMetric {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentResponse {
    pub text: String,
    #[serde(default)]
    pub declared_role: Option<String>,
    #[serde(default)]
    pub cited_metrics: Option<Vec<CitedMetric>>,
}

impl AgentResponse {
    pub fn new(text: impl Into<String>) -> Result<Self, ComplianceError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ComplianceError::EmptyResponse);
        }
        Ok(Self { text, declared_role: None, cited_metrics: None })
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.declared_role = Some(role.into());
        self
    }

    pub fn with_cited_metrics(mut self, metrics: Vec<CitedMetric>) -> Self {
        self.cited_metrics = Some(metrics);
        self
    }

    /// Accepts either a JSON response object or plain text.
    pub fn parse(doc: &str) -> Result<Self, ComplianceError> {
        let trimmed = doc.trim_start();
        let r = if trimmed.starts_with('{') {
            serde_json::from_str::<Self>(doc).map_err(|e| ComplianceError::Parse(e.to_string()))?
        } else {
            Self { text: doc.to_string(), declared_role: None, cited_metrics: None }
        };
        if r.text.trim().is_empty() {
            return Err(ComplianceError::EmptyResponse);
        }
        Ok(r)
    }
}

// ---------------------------------------------------------------- terms

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    /// Matches this entity term or one of its synonyms.
    Known { entity: String },
    /// One edit away from a lexicon entry without matching it.
    NearMiss { closest: String },
    /// Looks like a domain term but is not in the lexicon.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermMention {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TermKind,
}

impl TermMention {
    /// Identity used when counting distinct terms.
    pub fn key(&self) -> String {
        match &self.kind {
            TermKind::Known { entity } => fold(entity),
            _ => phrase_key(&self.text),
        }
    }
}

struct LexEntry {
    words: Vec<String>,
    joined: String,
    chars: usize,
    entity: String,
}

fn term_lexicon(d: &DomainOntology) -> Vec<LexEntry> {
    let mut out = Vec::new();
    for (term, e) in &d.entities {
        let spaced = term.contains('_').then(|| term.replace('_', " "));
        for form in std::iter::once(term).chain(spaced.as_ref()).chain(e.synonyms.iter()) {
            let words: Vec<String> = phrase_key(form).split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
            if words.is_empty() {
                continue;
            }
            let joined = words.join(" ");
            out.push(LexEntry { chars: joined.chars().count(), joined, words, entity: term.clone() });
        }
    }
    // longest phrases claim their tokens first
    out.sort_by(|a, b| b.words.len().cmp(&a.words.len()).then_with(|| a.joined.cmp(&b.joined)));
    out
}

const NEAR_MISS_MIN_LEN: usize = 4;
const PHRASE_STOPWORDS: &[&str] = &[
    "the", "a", "an", "our", "this", "that", "these", "we", "in", "for", "per", "and", "of", "to", "with", "on",
];

fn term_shaped(token: &str) -> bool {
    token.contains('_') || token.chars().filter(|c| c.is_uppercase()).count() >= 2
}

fn title_case(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(char::is_uppercase) && chars.clone().next().is_some() && chars.all(|c| c.is_lowercase())
}

fn nearest_entry<'a>(candidate: &str, lex: &'a [LexEntry], words: Option<usize>) -> Option<&'a LexEntry> {
    if candidate.chars().count() < NEAR_MISS_MIN_LEN {
        return None;
    }
    lex.iter()
        .filter(|e| words.is_none_or(|w| e.words.len() == w))
        .filter(|e| e.chars >= NEAR_MISS_MIN_LEN)
        .find(|e| one_edit_apart(candidate, &e.joined))
}

/// Extracts candidate domain terms from `text`.
///
/// Lexicon phrases are matched first (longest first). Remaining tokens that
/// look like identifiers (contain `_` or two or more capitals) and runs of two
/// or more Title-case words are candidates too; they are near misses when one
/// edit away from a lexicon entry, and unknown terms otherwise. Regulatory
/// identifiers and role ids are never terms.
pub fn extract_terms(text: &str, o: &Ontology) -> Vec<TermMention> {
    let ft = FoldedText::new(text);
    let toks = ft.tokens();
    let lex = term_lexicon(&o.domain);
    let mut claimed = vec![false; toks.len()];
    let mut out = Vec::new();

    let claim_span = |claimed: &mut Vec<bool>, start: usize, end: usize| {
        for (i, t) in toks.iter().enumerate() {
            if t.start < end && t.end > start {
                claimed[i] = true;
            }
        }
    };

    for e in &lex {
        for (first, len) in ft.find_phrase(&e.joined) {
            if claimed[first..first + len].iter().any(|c| *c) {
                continue;
            }
            claimed[first..first + len].iter_mut().for_each(|c| *c = true);
            let (start, end) = ft.span(first, len);
            out.push(TermMention {
                text: text[start..end].to_string(),
                start,
                end,
                kind: TermKind::Known { entity: e.entity.clone() },
            });
        }
    }

    for r in extract_regulatory_refs(text, &o.domain) {
        claim_span(&mut claimed, r.start, r.end);
    }
    for role in &o.roles {
        for (first, len) in ft.find_phrase(&role.id) {
            claimed[first..first + len].iter_mut().for_each(|c| *c = true);
        }
    }

    // Title-case phrases
    let mut i = 0;
    while i < toks.len() {
        if claimed[i] || !title_case(toks[i].text) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < toks.len()
            && !claimed[j]
            && title_case(toks[j].text)
            && text[toks[j - 1].end..toks[j].start].chars().all(char::is_whitespace)
        {
            j += 1;
        }
        let mut s = i;
        while s < j && PHRASE_STOPWORDS.contains(&ft.folded()[s].as_str()) {
            s += 1;
        }
        if j - s >= 2 {
            let (start, end) = ft.span(s, j - s);
            let joined = ft.folded()[s..j].join(" ");
            let kind = match nearest_entry(&joined, &lex, None) {
                Some(e) => TermKind::NearMiss { closest: e.entity.clone() },
                None => TermKind::Unknown,
            };
            claimed[s..j].iter_mut().for_each(|c| *c = true);
            out.push(TermMention { text: text[start..end].to_string(), start, end, kind });
        }
        i = j;
    }

    // lowercase multi-word near misses ("combined ration")
    for e in lex.iter().filter(|e| e.words.len() >= 2) {
        let n = e.words.len();
        if toks.len() < n {
            continue;
        }
        for first in 0..=toks.len() - n {
            if claimed[first..first + n].iter().any(|c| *c) {
                continue;
            }
            let words = &ft.folded()[first..first + n];
            let chars = words.iter().map(|w| w.chars().count()).sum::<usize>() + n - 1;
            if chars.abs_diff(e.chars) > 1 {
                continue;
            }
            let window = words.join(" ");
            if window.len() >= 2 * NEAR_MISS_MIN_LEN && one_edit_apart(&window, &e.joined) {
                claimed[first..first + n].iter_mut().for_each(|c| *c = true);
                let (start, end) = ft.span(first, n);
                out.push(TermMention {
                    text: text[start..end].to_string(),
                    start,
                    end,
                    kind: TermKind::NearMiss { closest: e.entity.clone() },
                });
            }
        }
    }

    // identifier-shaped single tokens
    for (i, t) in toks.iter().enumerate() {
        if claimed[i] || !term_shaped(t.text) {
            continue;
        }
        let folded = &ft.folded()[i];
        let kind = match nearest_entry(folded, &lex, None) {
            Some(e) => TermKind::NearMiss { closest: e.entity.clone() },
            None if t.text.contains('_') => TermKind::Unknown,
            None => continue,
        };
        out.push(TermMention { text: t.text.to_string(), start: t.start, end: t.end, kind });
    }

    out.sort_by_key(|m| m.start);
    out
}

// ---------------------------------------------------------------- regulation

static FRAMEWORK_SHAPES: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"\b(?:HIPAA|HITECH|GDPR|CCPA|SOX|GLBA|FERPA|FINRA|FATCA|OFAC|CFPB|NYDFS|ERISA|NAIC|DORA|PSD2|EMIR|BSA|AML|KYC)\b",
        r"\bPCI[- ]?DSS\b",
        r"\bSOC ?[123]\b",
        r"\bISO ?\d{4,5}\b",
        r"\bBasel ?(?:IV|III|II)\b",
        r"\b(?:MiFID|Solvency) ?II\b",
        r"\bIFRS ?\d{1,2}\b",
        r"\b(?:Circular|Decree|Decision|Law|TT|ND) (?:No\. ?)?\d{1,4}/\d{4}(?:/[A-Z][A-Z0-9-]*)?",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("framework pattern compiles"))
    .collect()
});

/// Lowercase alphanumerics only, so `PCI-DSS`, `PCI DSS` and `pcidss` agree.
pub fn normalize_framework(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegulatoryRef {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub normalized: String,
    /// The governance id this reference resolves to, if any.
    pub framework: Option<String>,
}

/// Regulatory identifiers: names declared in the governance layer plus
/// common framework shapes (acronyms, ISO/SOC/Basel/IFRS numbering,
/// circular and decree numbers).
pub fn extract_regulatory_refs(text: &str, d: &DomainOntology) -> Vec<RegulatoryRef> {
    let ft = FoldedText::new(text);
    let known: Vec<(String, &String)> = d.governance.keys().map(|k| (normalize_framework(k), k)).collect();
    let resolve = |norm: &str| known.iter().find(|(n, _)| n == norm).map(|(_, k)| (*k).clone());

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    let overlaps = |spans: &[(usize, usize)], s: usize, e: usize| spans.iter().any(|&(a, b)| s < b && e > a);

    let mut ids: Vec<&String> = d.governance.keys().collect();
    ids.sort_by_key(|k| std::cmp::Reverse(phrase_key(k).split(' ').count()));
    for id in ids {
        for (first, len) in ft.find_phrase(id) {
            let (s, e) = ft.span(first, len);
            if overlaps(&spans, s, e) {
                continue;
            }
            spans.push((s, e));
            out.push(RegulatoryRef {
                text: text[s..e].to_string(),
                start: s,
                end: e,
                normalized: normalize_framework(id),
                framework: Some(id.clone()),
            });
        }
    }
    for re in FRAMEWORK_SHAPES.iter() {
        for m in re.find_iter(text) {
            if overlaps(&spans, m.start(), m.end()) {
                continue;
            }
            spans.push((m.start(), m.end()));
            let normalized = normalize_framework(m.as_str());
            out.push(RegulatoryRef {
                text: m.as_str().to_string(),
                start: m.start(),
                end: m.end(),
                framework: resolve(&normalized),
                normalized,
            });
        }
    }
    out.sort_by_key(|r| r.start);
    out
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRef {
    /// The metric key when the name resolves, else the name as cited.
    pub name: String,
    pub value: f64,
    pub unit: Option<String>,
    pub span: Option<(usize, usize)>,
    pub known: bool,
}

fn metric_forms(d: &DomainOntology) -> Vec<(String, &String)> {
    let mut forms = Vec::new();
    for name in d.metrics.keys() {
        forms.push((name.clone(), name));
        if name.contains('_') {
            forms.push((name.replace('_', " "), name));
        }
        for (term, e) in &d.entities {
            if fold(term) == fold(name) {
                forms.extend(e.synonyms.iter().map(|s| (s.clone(), name)));
            }
        }
    }
    forms
}

/// Metric names mentioned anywhere in the text, in order of first mention.
pub fn mentioned_metrics(text: &str, d: &DomainOntology) -> Vec<String> {
    let ft = FoldedText::new(text);
    let mut hits: Vec<(usize, &String)> = metric_forms(d)
        .into_iter()
        .filter_map(|(form, name)| ft.find_phrase(&form).first().map(|(i, _)| (*i, name)))
        .collect();
    hits.sort();
    let mut seen = BTreeSet::new();
    hits.into_iter().filter(|(_, n)| seen.insert(*n)).map(|(_, n)| n.clone()).collect()
}

/// `(metric, value)` references: the explicit citation list when present,
/// otherwise each metric mention paired with the first number after it in
/// the same sentence, before the next mention.
pub fn extract_metric_refs(response: &AgentResponse, d: &DomainOntology) -> Vec<MetricRef> {
    if let Some(cited) = &response.cited_metrics {
        return cited
            .iter()
            .map(|c| {
                let key = d.metrics.keys().find(|k| fold(k) == fold(&c.name));
                MetricRef {
                    name: key.cloned().unwrap_or_else(|| c.name.clone()),
                    value: c.value,
                    unit: c.unit.clone(),
                    span: None,
                    known: key.is_some(),
                }
            })
            .collect();
    }

    let text = response.text.as_str();
    let ft = FoldedText::new(text);
    let forms = metric_forms(d);
    let mut mentions: Vec<(usize, usize, &String)> = Vec::new();
    for (form, name) in &forms {
        for (first, len) in ft.find_phrase(form) {
            let (s, e) = ft.span(first, len);
            mentions.push((s, e, name));
        }
    }
    mentions.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut dedup: Vec<(usize, usize, &String)> = Vec::new();
    for m in mentions {
        if dedup.last().is_none_or(|last| m.0 >= last.1) {
            dedup.push(m);
        }
    }
    let numbers: Vec<_> = find_numbers(text)
        .into_iter()
        .filter(|n| !text[..n.start].ends_with('/') && !text[n.end..].starts_with('/'))
        .filter(|n| !dedup.iter().any(|m| n.start < m.1 && n.end > m.0))
        .collect();

    let mut out = Vec::new();
    for (s_start, s_end) in sentence_spans(text) {
        enum Ev<'a> {
            Metric(usize, &'a String),
            Number(usize, f64),
        }
        let mut events: Vec<(usize, Ev)> = Vec::new();
        for (s, _, name) in dedup.iter().filter(|m| m.0 >= s_start && m.1 <= s_end) {
            events.push((*s, Ev::Metric(*s, name)));
        }
        for n in numbers.iter().filter(|n| n.start >= s_start && n.end <= s_end) {
            events.push((n.start, Ev::Number(n.end, n.value)));
        }
        events.sort_by_key(|(pos, _)| *pos);
        let mut pending: Option<(usize, &String)> = None;
        for (_, ev) in events {
            match ev {
                Ev::Metric(pos, name) => pending = Some((pos, name)),
                Ev::Number(ne, value) => {
                    if let Some((ms, name)) = pending.take() {
                        let unit = text[ne..].starts_with('%').then(|| "%".to_string());
                        let end = if unit.is_some() { ne + 1 } else { ne };
                        out.push(MetricRef { name: name.clone(), value, unit, span: Some((ms, end)), known: true });
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- interactions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Handoff,
    Escalation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleTransfer {
    pub from_role: String,
    pub to_role: String,
    pub kind: TransferKind,
    pub start: usize,
    pub end: usize,
}

const HANDOFF_CUES: &[&str] = &["hands off to", "hand off to", "handed off to", "handing off to"];
const ESCALATION_CUES: &[&str] = &["escalates to", "escalate to", "escalated to", "escalating to"];

/// Directed role pairs described as `<role> ... hands off to ... <role>` or
/// `<role> ... escalates to ... <role>` within one sentence.
pub fn extract_role_transfers(text: &str, o: &Ontology) -> Vec<RoleTransfer> {
    let ft = FoldedText::new(text);
    let mut roles: Vec<(usize, usize, &str)> = Vec::new();
    for r in &o.roles {
        let spaced = r.id.replace('_', " ");
        let mut forms = vec![r.id.as_str()];
        if spaced != r.id {
            forms.push(spaced.as_str());
        }
        for form in forms {
            for (first, len) in ft.find_phrase(form) {
                let (s, e) = ft.span(first, len);
                roles.push((s, e, r.id.as_str()));
            }
        }
    }
    roles.sort();

    let mut out = Vec::new();
    for (s_start, s_end) in sentence_spans(text) {
        let in_sentence: Vec<_> = roles.iter().filter(|r| r.0 >= s_start && r.1 <= s_end).collect();
        let cues = HANDOFF_CUES
            .iter()
            .map(|c| (c, TransferKind::Handoff))
            .chain(ESCALATION_CUES.iter().map(|c| (c, TransferKind::Escalation)));
        for (cue, kind) in cues {
            for (first, len) in ft.find_phrase(cue) {
                let (cs, ce) = ft.span(first, len);
                if cs < s_start || ce > s_end {
                    continue;
                }
                let from = in_sentence.iter().rev().find(|r| r.1 <= cs);
                let to = in_sentence.iter().find(|r| r.0 >= ce);
                if let (Some(f), Some(t)) = (from, to) {
                    out.push(RoleTransfer {
                        from_role: f.2.to_string(),
                        to_role: t.2.to_string(),
                        kind,
                        start: f.0,
                        end: t.1,
                    });
                }
            }
        }
    }
    out.sort_by_key(|t| (t.start, t.end));
    out
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Clause {
    A,
    B,
    C,
    D,
}

impl Clause {
    pub const ALL: [Clause; 4] = [Clause::A, Clause::B, Clause::C, Clause::D];

    pub fn name(self) -> &'static str {
        match self {
            Clause::A => "terminological_consistency",
            Clause::B => "metric_validity",
            Clause::C => "interaction_compliance",
            Clause::D => "governance_alignment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseViolation {
    pub offending: String,
    /// Byte offsets into the response text, when the mention came from text.
    pub span: Option<(usize, usize)>,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub clause: Clause,
    pub name: &'static str,
    pub passed: bool,
    /// Nothing was extracted for this clause.
    pub vacuous: bool,
    pub checked: usize,
    pub violations: Vec<ClauseViolation>,
}

impl ClauseResult {
    fn from_checks(clause: Clause, checked: usize, violations: Vec<ClauseViolation>) -> Self {
        Self { clause, name: clause.name(), passed: violations.is_empty(), vacuous: checked == 0, checked, violations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub clauses: Vec<ClauseResult>,
    pub overall: bool,
}

impl ComplianceReport {
    pub fn clause(&self, c: Clause) -> &ClauseResult {
        self.clauses.iter().find(|r| r.clause == c).expect("all clauses present")
    }

    pub fn failing(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.clause).collect()
    }
}

pub fn check_terminology(a: &AgentResponse, o: &Ontology) -> ClauseResult {
    let terms = extract_terms(&a.text, o);
    let violations = terms
        .iter()
        .filter_map(|t| match &t.kind {
            TermKind::NearMiss { closest } => Some(ClauseViolation {
                offending: t.text.clone(),
                span: Some((t.start, t.end)),
                expected: format!("{closest}: {}", o.domain.entities[closest].definition),
            }),
            _ => None,
        })
        .collect();
    ClauseResult::from_checks(Clause::A, terms.len(), violations)
}

pub fn check_metrics(a: &AgentResponse, d: &DomainOntology) -> ClauseResult {
    let refs = extract_metric_refs(a, d);
    let violations = refs
        .iter()
        .filter_map(|r| {
            let offending = format!("{} = {}", r.name, r.value);
            match d.metrics.get(&r.name) {
                Some(m) if m.healthy_range.contains(r.value) => None,
                Some(m) => Some(ClauseViolation {
                    offending,
                    span: r.span,
                    expected: format!(
                        "{} healthy_range [{}, {}] {}",
                        r.name, m.healthy_range.lower, m.healthy_range.upper, m.healthy_range.unit
                    ),
                }),
                None => Some(ClauseViolation { offending, span: r.span, expected: "UNKNOWN_METRIC".into() }),
            }
        })
        .collect();
    ClauseResult::from_checks(Clause::B, refs.len(), violations)
}

pub fn check_interactions(a: &AgentResponse, o: &Ontology) -> ClauseResult {
    let transfers = extract_role_transfers(&a.text, o);
    let i = &o.interaction;
    let violations = transfers
        .iter()
        .filter(|t| {
            let declared = i.handoffs.iter().any(|h| h.from_role == t.from_role && h.to_role == t.to_role);
            let escalation = t.kind == TransferKind::Escalation
                && i.escalation_paths.get(&t.from_role).is_some_and(|to| *to == t.to_role);
            !(declared || escalation)
        })
        .map(|t| ClauseViolation {
            offending: format!("{} -> {}", t.from_role, t.to_role),
            span: Some((t.start, t.end)),
            expected: {
                let allowed: Vec<String> = i
                    .handoffs
                    .iter()
                    .filter(|h| h.from_role == t.from_role)
                    .map(|h| h.to_role.clone())
                    .collect();
                if allowed.is_empty() {
                    format!("no handoff declared from {}", t.from_role)
                } else {
                    format!("{} hands off to {}", t.from_role, allowed.join(" or "))
                }
            },
        })
        .collect();
    ClauseResult::from_checks(Clause::C, transfers.len(), violations)
}

pub fn check_governance(a: &AgentResponse, d: &DomainOntology) -> ClauseResult {
    let refs = extract_regulatory_refs(&a.text, d);
    let declared: Vec<&str> = d.governance.keys().map(String::as_str).collect();
    let violations = refs
        .iter()
        .filter(|r| r.framework.is_none())
        .map(|r| ClauseViolation {
            offending: r.text.clone(),
            span: Some((r.start, r.end)),
            expected: format!("one of {}", declared.join(", ")),
        })
        .collect();
    ClauseResult::from_checks(Clause::D, refs.len(), violations)
}

/// Runs all four clauses; `overall` is their conjunction.
pub fn validate(a: &AgentResponse, o: &Ontology) -> ComplianceReport {
    let clauses = vec![
        check_terminology(a, o),
        check_metrics(a, &o.domain),
        check_interactions(a, o),
        check_governance(a, &o.domain),
    ];
    let overall = clauses.iter().all(|c| c.passed);
    ComplianceReport { clauses, overall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::saas;

    fn resp(text: &str) -> AgentResponse {
        AgentResponse::new(text).unwrap()
    }

    #[test]
    fn terminology_known_terms_pass() {
        let o = saas();
        let r = check_terminology(&resp("Our ARR grew while churn_rate stayed flat."), &o);
        assert!(r.passed);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn terminology_transposition_fails() {
        let o = saas();
        let text = "The chrun_rate worries us.";
        let r = check_terminology(&resp(text), &o);
        assert!(!r.passed);
        let v = &r.violations[0];
        assert_eq!(v.offending, "chrun_rate");
        assert_eq!(v.span, Some((4, 14)));
        assert!(v.expected.starts_with("churn_rate"));
    }

    #[test]
    fn terminology_vacuous() {
        let o = saas();
        let r = check_terminology(&resp("Everything is fine today."), &o);
        assert!(r.passed && r.vacuous);
    }

    #[test]
    fn terminology_plural_and_acronyms_are_not_flagged() {
        let o = saas();
        let r = check_terminology(&resp("Our API and CEO are aware; the customers are happy."), &o);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn title_case_near_miss() {
        let o = saas();
        let r = check_terminology(&resp("Annual Recuring Revenue is up."), &o);
        assert!(!r.passed);
        let r = check_terminology(&resp("Annual Recurring Revenue is up."), &o);
        assert!(r.passed);
    }

    #[test]
    fn metrics_in_and_out_of_range() {
        let o = saas();
        assert!(check_metrics(&resp("NPS is 45."), &o.domain).passed);
        let r = check_metrics(&resp("We see a churn_rate of 25% this quarter."), &o.domain);
        assert!(!r.passed);
        assert!(r.violations[0].expected.contains("[0, 10]"));
        let r = check_metrics(&resp("No numbers here."), &o.domain);
        assert!(r.passed && r.vacuous);
    }

    #[test]
    fn metric_pairing_rules() {
        let o = saas();
        let refs = extract_metric_refs(
            &resp("NPS is 45 and churn_rate is 4%. ARR rose. Net Promoter Score hit 50 by 2025."),
            &o.domain,
        );
        let pairs: Vec<(&str, f64)> = refs.iter().map(|r| (r.name.as_str(), r.value)).collect();
        assert_eq!(pairs, vec![("NPS", 45.0), ("churn_rate", 4.0), ("NPS", 50.0)]);
        assert_eq!(refs[1].unit.as_deref(), Some("%"));
    }

    #[test]
    fn explicit_citations_take_precedence() {
        let o = saas();
        let a = resp("NPS is 10.").with_cited_metrics(vec![
            CitedMetric { name: "nps".into(), value: 50.0, unit: None },
            CitedMetric { name: "ebitda".into(), value: 1.0, unit: None },
        ]);
        let refs = extract_metric_refs(&a, &o.domain);
        assert_eq!(refs[0].name, "NPS");
        assert!(refs[0].known);
        assert!(!refs[1].known);
        let r = check_metrics(&a, &o.domain);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].expected, "UNKNOWN_METRIC");
    }

    #[test]
    fn handoff_direction() {
        let o = saas();
        assert!(check_interactions(&resp("The ux_designer hands off to senior_developer once designs are final."), &o).passed);
        let r = check_interactions(&resp("senior_developer hands off to ux_designer."), &o);
        assert!(!r.passed);
        assert_eq!(r.violations[0].offending, "senior_developer -> ux_designer");
        let r = check_interactions(&resp("Nobody is mentioned here."), &o);
        assert!(r.passed && r.vacuous);
    }

    #[test]
    fn escalation_uses_escalation_paths() {
        let o = saas();
        assert!(check_interactions(&resp("If blocked, the ux designer escalates to the product manager."), &o).passed);
        assert!(!check_interactions(&resp("The engineering_manager escalates to ux_designer."), &o).passed);
    }

    #[test]
    fn governance_lexicon_and_shapes() {
        let o = saas();
        assert!(check_governance(&resp("We follow GDPR and SOC 2 controls."), &o.domain).passed);
        let r = check_governance(&resp("This complies with HIPAA."), &o.domain);
        assert!(!r.passed);
        assert_eq!(r.violations[0].offending, "HIPAA");
        assert!(check_governance(&resp("Plain text."), &o.domain).vacuous);
        let refs = extract_regulatory_refs("See Circular 11/2021 and PCI-DSS.", &o.domain);
        let texts: Vec<&str> = refs.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, vec!["Circular 11/2021", "PCI-DSS"]);
    }

    #[test]
    fn full_validation() {
        let o = saas();
        let good = "The product_manager hands off to ux_designer. NPS is 52 and churn_rate is 3%. We align with GDPR.";
        let report = validate(&resp(good), &o);
        assert!(report.overall, "{report:?}");
        let bad = good.replace("churn_rate is 3%", "churn_rate is 30%");
        let report = validate(&resp(&bad), &o);
        assert!(!report.overall);
        assert_eq!(report.failing(), vec![Clause::B]);
        let empty = validate(&resp("Thanks, noted."), &o);
        assert!(empty.overall);
        assert!(empty.clauses.iter().all(|c| c.vacuous));
    }

    #[test]
    fn parse_response_forms() {
        let a = AgentResponse::parse(r#"{"text": "NPS is 45", "declared_role": "product_manager"}"#).unwrap();
        assert_eq!(a.declared_role.as_deref(), Some("product_manager"));
        assert_eq!(AgentResponse::parse("plain words").unwrap().text, "plain words");
        assert!(AgentResponse::parse("   ").is_err());
        assert!(AgentResponse::new("").is_err());
    }
}
