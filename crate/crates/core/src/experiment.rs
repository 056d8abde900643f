//! Grounding-condition experiments: assemble prompts for conditions C1-C4,
//! run a pluggable generator, score responses and emit run records.
//!
//! Records are produced in task-major, condition-mid, repetition-minor order
//! regardless of how rows are scheduled. The generator seed for a row depends
//! on the run seed, task id and repetition only, so C3 and C4 (which share a
//! prompt) see identical responses.

use std::collections::BTreeMap;
use std::io;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compliance::{extract_regulatory_refs, AgentResponse};
use crate::context::{count_tokens, resolve_context, ContextError, ResolverConfig, DEFAULT_TOKEN_BUDGET};
use crate::metrics::{ma_score, rc_score, rs_score, tf_score, Metric};
use crate::ontology::{DomainOntology, Ontology};
use crate::text::{find_numbers, sentence_spans, stable_hash, word_tokens};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("missing fixture: {0}")]
    MissingFixture(String),
    #[error("invalid task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("no ontology loaded for industry `{0}`")]
    UnknownIndustry(String),
    #[error("repetitions must be at least 1")]
    InvalidReps,
    #[error("context resolution failed for task `{task}`: {source}")]
    Context { task: String, source: ContextError },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskCategory {
    Terminology,
    Metric,
    Regulatory,
    Role,
    CrossCutting,
}

impl TaskCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskCategory::Terminology => "terminology",
            TaskCategory::Metric => "metric",
            TaskCategory::Regulatory => "regulatory",
            TaskCategory::Role => "role",
            TaskCategory::CrossCutting => "cross-cutting",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Terminology, Self::Metric, Self::Regulatory, Self::Role, Self::CrossCutting]
            .into_iter()
            .find(|c| c.as_str() == s)
    }

    /// The metrics a task of this category is scored on.
    pub fn tested_metrics(self) -> Vec<Metric> {
        match self {
            TaskCategory::Terminology => vec![Metric::TF],
            TaskCategory::Metric => vec![Metric::MA],
            TaskCategory::Regulatory => vec![Metric::RC],
            TaskCategory::Role => vec![Metric::RS],
            TaskCategory::CrossCutting => Metric::ALL.to_vec(),
        }
    }
}

/// Ontology elements a task is about.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub governance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub id: String,
    pub industry: String,
    pub category: TaskCategory,
    pub prompt: String,
    pub role: String,
    /// Derived from the category when omitted.
    #[serde(default)]
    pub tested_metrics: Vec<Metric>,
    #[serde(default)]
    pub ground_truth: GroundTruth,
}

impl TaskDef {
    /// Fills in tested metrics and checks them against the category.
    pub fn normalized(mut self) -> Result<Self, ExperimentError> {
        let expected = self.category.tested_metrics();
        if self.tested_metrics.is_empty() {
            self.tested_metrics = expected;
        } else {
            let mut got = self.tested_metrics.clone();
            got.sort();
            got.dedup();
            if got != expected {
                return Err(self.invalid(format!(
                    "category {} tests {:?}, task declares {:?}",
                    self.category.as_str(),
                    expected,
                    self.tested_metrics
                )));
            }
            self.tested_metrics = got;
        }
        if self.prompt.trim().is_empty() {
            return Err(self.invalid("empty prompt".into()));
        }
        Ok(self)
    }

    /// Checks that the role and ground-truth references exist in `o`.
    pub fn check_against(&self, o: &Ontology) -> Result<(), ExperimentError> {
        if !o.has_role(&self.role) {
            return Err(self.invalid(format!("unknown role `{}`", self.role)));
        }
        let g = &self.ground_truth;
        if let Some(e) = g.entities.iter().find(|e| !o.domain.entities.contains_key(*e)) {
            return Err(self.invalid(format!("unknown entity `{e}`")));
        }
        if let Some(m) = g.metrics.iter().find(|m| !o.domain.metrics.contains_key(*m)) {
            return Err(self.invalid(format!("unknown metric `{m}`")));
        }
        if let Some(f) = g.governance.iter().find(|f| !o.domain.governance.contains_key(*f)) {
            return Err(self.invalid(format!("unknown framework `{f}`")));
        }
        Ok(())
    }

    pub fn tests(&self, m: Metric) -> bool {
        self.tested_metrics.contains(&m)
    }

    fn invalid(&self, reason: String) -> ExperimentError {
        ExperimentError::InvalidTask { id: self.id.clone(), reason }
    }
}

/// Contents of a tasks file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    #[serde(default)]
    pub base_prompt: Option<String>,
    /// Expected injected-token range for C3 prompts, per industry.
    #[serde(default)]
    pub c3_token_bands: BTreeMap<String, (usize, usize)>,
    pub tasks: Vec<TaskDef>,
}

/// Accepts either a bare task list or a [`TaskFile`] object.
pub fn load_tasks(doc: &str) -> Result<TaskFile, ExperimentError> {
    let parse_err = |e: serde_json::Error| ExperimentError::Parse(e.to_string());
    let mut file = if doc.trim_start().starts_with('[') {
        TaskFile { tasks: serde_json::from_str(doc).map_err(parse_err)?, ..TaskFile::default() }
    } else {
        serde_json::from_str::<TaskFile>(doc).map_err(parse_err)?
    };
    file.tasks = file.tasks.into_iter().map(TaskDef::normalized).collect::<Result<_, _>>()?;
    let mut seen = std::collections::BTreeSet::new();
    if let Some(t) = file.tasks.iter().find(|t| !seen.insert(t.id.as_str())) {
        return Err(ExperimentError::InvalidTask { id: t.id.clone(), reason: "duplicate id".into() });
    }
    Ok(file)
}

/// Flat reference paragraphs per industry for the C2 condition.
pub type ChunkSet = BTreeMap<String, Vec<String>>;

pub fn load_chunks(doc: &str) -> Result<ChunkSet, ExperimentError> {
    serde_json::from_str(doc).map_err(|e| ExperimentError::Parse(e.to_string()))
}

// ---------------------------------------------------------------- conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::C1, Condition::C2, Condition::C3, Condition::C4];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
            Condition::C4 => "C4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }

    /// Coupling maturity level; flat retrieval has none.
    pub fn level(self) -> Option<MaturityLevel> {
        match self {
            Condition::C1 => Some(MaturityLevel::L0),
            Condition::C2 => None,
            Condition::C3 => Some(MaturityLevel::L2),
            Condition::C4 => Some(MaturityLevel::L3),
        }
    }

    pub fn level_tag(self) -> &'static str {
        self.level().map_or("-", MaturityLevel::as_str)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaturityLevel {
    L0,
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl MaturityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            MaturityLevel::L0 => "L0",
            MaturityLevel::L1 => "L1",
            MaturityLevel::L2 => "L2",
            MaturityLevel::L3 => "L3",
            MaturityLevel::L4 => "L4",
            MaturityLevel::L5 => "L5",
        }
    }
}

pub const DEFAULT_BASE_PROMPT: &str = "You are an enterprise assistant. Answer the task for the stated role.";
pub const DEFAULT_JUDGE_THRESHOLD: f64 = 0.5;
pub const REFERENCE_HEADER: &str = "## REFERENCE MATERIAL";
pub const TASK_MARKER: &str = "Task: ";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub base_prompt: String,
    pub token_budget: usize,
    pub judge_threshold: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base_prompt: DEFAULT_BASE_PROMPT.to_string(),
            token_budget: DEFAULT_TOKEN_BUDGET,
            judge_threshold: DEFAULT_JUDGE_THRESHOLD,
            seed: 0,
        }
    }
}

/// Everything a run needs besides tasks and plug-ins.
#[derive(Debug, Clone, Default)]
pub struct ExperimentInputs {
    pub ontologies: BTreeMap<String, Ontology>,
    pub chunks: Option<ChunkSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    pub text: String,
    pub prompt_tokens: usize,
    /// Tokens of grounding material (chunks or ontology context).
    pub injected_tokens: usize,
}

pub fn assemble_condition(
    task: &TaskDef,
    condition: Condition,
    o: &Ontology,
    chunks: Option<&ChunkSet>,
    cfg: &ExperimentConfig,
) -> Result<AssembledPrompt, ExperimentError> {
    let task_line = format!("{TASK_MARKER}{}", task.prompt);
    let injected = match condition {
        Condition::C1 => None,
        Condition::C2 => {
            let paragraphs = chunks
                .and_then(|c| c.get(&task.industry))
                .filter(|p| !p.is_empty())
                .ok_or_else(|| ExperimentError::MissingFixture(format!("no flat chunks for `{}`", task.industry)))?;
            Some(format!("{REFERENCE_HEADER}\n{}", paragraphs.join("\n\n")))
        }
        Condition::C3 | Condition::C4 => {
            let rc = ResolverConfig::new(cfg.token_budget)
                .map_err(|source| ExperimentError::Context { task: task.id.clone(), source })?;
            let bundle = resolve_context(&task.prompt, None, &task.role, o, &rc)
                .map_err(|source| ExperimentError::Context { task: task.id.clone(), source })?;
            Some(bundle.text()).filter(|t| !t.is_empty())
        }
    };
    let injected_tokens = injected.as_deref().map_or(0, count_tokens);
    let text = match injected {
        Some(block) => format!("{}\n\n{block}\n\n{task_line}", cfg.base_prompt),
        None => format!("{}\n\n{task_line}", cfg.base_prompt),
    };
    Ok(AssembledPrompt { prompt_tokens: count_tokens(&text), injected_tokens, text })
}

// ---------------------------------------------------------------- generators

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("generator failed: {0}")]
pub struct GeneratorError(pub String);

/// `(prompt, seed) -> text`; must be deterministic.
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str, seed: u64) -> Result<String, GeneratorError>;
}

fn task_text(prompt: &str) -> &str {
    prompt.rsplit_once(TASK_MARKER).map_or(prompt, |(_, t)| t).trim()
}

/// Restates the task inside a fixed template; ignores context and seed.
#[derive(Debug, Clone, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn id(&self) -> &str {
        "echo"
    }

    fn generate(&self, prompt: &str, _seed: u64) -> Result<String, GeneratorError> {
        Ok(format!("Acknowledged. Regarding the request \"{}\", a detailed answer follows.", task_text(prompt)))
    }
}

/// Emits whatever vocabulary it can find in the prompt.
///
/// With structured ontology context it cites entity terms, in-range metric
/// values, declared frameworks, role tags and declared handoffs. With only
/// prose it picks identifier-like tokens (sometimes mistyped), reuses nearby
/// numbers or invents them, and may cite an arbitrary framework.
#[derive(Debug, Clone, Default)]
pub struct LexiconGenerator;

const GENERIC_FRAMEWORKS: &[&str] = &["ISO 9001", "SOX", "GDPR", "HIPAA", "PCI-DSS", "Basel III"];
const GENERIC_DECISIONS: &[&str] = &["strategic", "data-driven", "risk-averse", "iterative", "systematic"];
const STYLE_PHRASES: &[(&str, &str)] = &[
    ("executive", "The business impact is a growth priority for this decision."),
    ("technical", "The implementation touches architecture, API latency and deploy code."),
    ("compliance-oriented", "Compliance, audit and control policy apply to this regulation."),
];

#[derive(Debug, Default)]
struct StructuredContext {
    entities: Vec<String>,
    metrics: Vec<(String, f64, f64)>,
    governance: Vec<String>,
    decision_patterns: Vec<String>,
    style: Option<String>,
    handoffs: Vec<(String, String)>,
}

impl StructuredContext {
    fn parse(prompt: &str) -> Self {
        let mut s = Self::default();
        for line in prompt.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix("entity ") {
                if let Some((term, _)) = rest.split_once(':') {
                    s.entities.push(term.trim().to_string());
                }
            } else if let Some(rest) = line.strip_prefix("metric ") {
                let parsed = rest.split_once(": healthy_range [").and_then(|(name, tail)| {
                    let (range, _) = tail.split_once(']')?;
                    let (lo, hi) = range.split_once(',')?;
                    Some((name.trim().to_string(), lo.trim().parse().ok()?, hi.trim().parse().ok()?))
                });
                s.metrics.extend(parsed);
            } else if let Some(rest) = line.strip_prefix("governance ") {
                if let Some((id, _)) = rest.split_once(':') {
                    s.governance.push(id.trim().to_string());
                }
            } else if let Some(rest) = line.strip_prefix("decision_patterns: ") {
                s.decision_patterns = rest.split(", ").filter(|t| *t != "none").map(String::from).collect();
            } else if let Some(rest) = line.strip_prefix("communication_style: ") {
                s.style = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("handoff ") {
                if let Some((pair, _)) = rest.split_once(':') {
                    if let Some((from, to)) = pair.split_once(" -> ") {
                        s.handoffs.push((from.trim().to_string(), to.trim().to_string()));
                    }
                }
            }
        }
        s
    }

    fn is_grounded(&self) -> bool {
        !(self.entities.is_empty() && self.metrics.is_empty() && self.governance.is_empty())
    }
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn transpose_typo(term: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = term.chars().collect();
    if chars.len() < 4 {
        return term.to_string();
    }
    let i = rng.random_range(1..chars.len() - 2);
    let mut out = chars.clone();
    out.swap(i, i + 1);
    if out == chars {
        return term.to_string();
    }
    out.into_iter().collect()
}

fn identifier_like(token: &str) -> bool {
    token.len() >= 3
        && token.chars().next().is_some_and(char::is_alphabetic)
        && (token.contains('_') || token.chars().filter(|c| c.is_uppercase()).count() >= 2)
}

impl LexiconGenerator {
    fn grounded(&self, ctx: &StructuredContext, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut out = Vec::new();
        for term in ctx.entities.choose_multiple(rng, 3) {
            out.push(format!("We track {term} closely."));
        }
        for (name, lo, hi) in &ctx.metrics {
            let v = round1(lo + (hi - lo) * rng.random_range(0.2..0.8));
            out.push(format!("Currently {name} is {v}."));
        }
        for id in ctx.governance.choose_multiple(rng, 2) {
            out.push(format!("This stays aligned with {id}."));
        }
        if !ctx.decision_patterns.is_empty() {
            out.push(format!("Our approach is {}.", ctx.decision_patterns.join(" and ").replace('-', " ")));
        }
        if let Some(style) = &ctx.style {
            if let Some((_, phrase)) = STYLE_PHRASES.iter().find(|(s, _)| s == style) {
                out.push((*phrase).to_string());
            }
        }
        if let Some((from, to)) = ctx.handoffs.first() {
            out.push(format!("The {from} hands off to {to} when ready."));
        }
        out
    }

    fn prose(&self, prompt: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
        let body = prompt.split_once("\n\n").map_or(prompt, |(_, b)| b);
        let mut terms: Vec<&str> = Vec::new();
        for t in word_tokens(body) {
            if identifier_like(t.text) && !terms.contains(&t.text) {
                terms.push(t.text);
            }
        }
        let numbers = find_numbers(body);
        let sentences = sentence_spans(body);
        let mut out = Vec::new();
        for term in terms.choose_multiple(rng, 3) {
            let shown = if rng.random_bool(0.25) { transpose_typo(term, rng) } else { term.to_string() };
            // a number following the term in the same sentence, if any
            let at = body.find(*term).unwrap_or(0);
            let sentence_end = sentences.iter().find(|(s, e)| *s <= at && at < *e).map_or(body.len(), |s| s.1);
            let nearby = numbers.iter().find(|n| n.start > at && n.end <= sentence_end).map(|n| n.value);
            match nearby {
                Some(v) => out.push(format!("Here {shown} is {}.", round1(v * rng.random_range(0.9..1.1)))),
                None if rng.random_bool(0.5) => out.push(format!("Here {shown} is {}.", rng.random_range(0..100))),
                None => out.push(format!("We watch {shown} closely.")),
            }
        }
        let empty = DomainOntology { verticals: vec![], entities: BTreeMap::new(), metrics: BTreeMap::new(), governance: BTreeMap::new() };
        let mut cited: Vec<String> = extract_regulatory_refs(body, &empty).into_iter().map(|r| r.text).collect();
        cited.dedup();
        for c in cited.choose_multiple(rng, 2) {
            out.push(format!("This follows {c}."));
        }
        if rng.random_bool(0.5) {
            let f = GENERIC_FRAMEWORKS.choose(rng).expect("nonempty");
            out.push(format!("This is consistent with {f}."));
        }
        let decision = GENERIC_DECISIONS.choose(rng).expect("nonempty");
        out.push(format!("Our approach is {}.", decision.replace('-', " ")));
        let (_, phrase) = STYLE_PHRASES.choose(rng).expect("nonempty");
        out.push((*phrase).to_string());
        out
    }
}

impl Generator for LexiconGenerator {
    fn id(&self) -> &str {
        "lexicon"
    }

    fn generate(&self, prompt: &str, seed: u64) -> Result<String, GeneratorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = StructuredContext::parse(prompt);
        let mut sentences = if ctx.is_grounded() { self.grounded(&ctx, &mut rng) } else { self.prose(prompt, &mut rng) };
        if sentences.is_empty() {
            sentences.push(format!("Regarding \"{}\", no further detail is available.", task_text(prompt)));
        }
        Ok(sentences.join(" "))
    }
}

/// Row seed from the run seed, task id and repetition.
pub fn row_seed(seed: u64, task_id: &str, repetition: u32) -> u64 {
    stable_hash(format!("{seed}\u{1f}{task_id}\u{1f}{repetition}").as_bytes())
}

// ---------------------------------------------------------------- scoring

/// Scores for the metrics a task tests; `None` for untested metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TaskScores {
    pub tf: Option<f64>,
    pub ma: Option<f64>,
    pub rc: Option<f64>,
    pub rs: Option<f64>,
}

impl TaskScores {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::TF => self.tf,
            Metric::MA => self.ma,
            Metric::RC => self.rc,
            Metric::RS => self.rs,
        }
    }

    fn set(&mut self, m: Metric, v: f64) {
        let slot = match m {
            Metric::TF => &mut self.tf,
            Metric::MA => &mut self.ma,
            Metric::RC => &mut self.rc,
            Metric::RS => &mut self.rs,
        };
        *slot = Some(v);
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, response: &AgentResponse, task: &TaskDef, o: &Ontology) -> TaskScores;
}

/// Scores tested metrics with the symbolic response metrics.
#[derive(Debug, Clone, Default)]
pub struct OntologyScorer;

impl Scorer for OntologyScorer {
    fn score(&self, response: &AgentResponse, task: &TaskDef, o: &Ontology) -> TaskScores {
        let mut s = TaskScores::default();
        for &m in &task.tested_metrics {
            let v = match m {
                Metric::TF => tf_score(response, o).value,
                Metric::MA => ma_score(response, o).value,
                Metric::RC => rc_score(response, o).value,
                Metric::RS => match o.role(&task.role) {
                    Some(r) => rs_score(response, r, o).value,
                    None => continue,
                },
            };
            s.set(m, v);
        }
        s
    }
}

/// Flags a response when any tested metric falls below `threshold`.
pub fn judge_flag(scores: &TaskScores, task: &TaskDef, threshold: f64) -> bool {
    task.tested_metrics.iter().any(|&m| scores.get(m).is_some_and(|v| v < threshold))
}

// ---------------------------------------------------------------- records

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub task_id: String,
    pub industry: String,
    pub category: TaskCategory,
    pub condition: Condition,
    pub level: String,
    pub repetition: u32,
    pub generator: String,
    pub prompt_tokens: usize,
    pub injected_tokens: usize,
    #[serde(skip)]
    pub response: String,
    pub scores: TaskScores,
    pub judge_flag: Option<bool>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn score(&self, m: Metric) -> Option<f64> {
        self.scores.get(m)
    }
}

pub const CSV_COLUMNS: [&str; 15] = [
    "task_id",
    "industry",
    "category",
    "condition",
    "level",
    "repetition",
    "generator",
    "prompt_tokens",
    "injected_tokens",
    "tf",
    "ma",
    "rc",
    "rs",
    "judge_flag",
    "error",
];

/// Runs every (task, condition, repetition) cell. Repetitions are numbered
/// from 1. Generator failures become rows with an error message and no
/// scores; assembly problems abort the run before any generation.
pub fn run_experiment(
    tasks: &[TaskDef],
    conditions: &[Condition],
    reps: u32,
    generator: &dyn Generator,
    scorer: &dyn Scorer,
    inputs: &ExperimentInputs,
    cfg: &ExperimentConfig,
) -> Result<Vec<RunRecord>, ExperimentError> {
    if reps == 0 {
        return Err(ExperimentError::InvalidReps);
    }
    let mut prompts = Vec::with_capacity(tasks.len() * conditions.len());
    for task in tasks {
        let o = inputs.ontologies.get(&task.industry).ok_or_else(|| ExperimentError::UnknownIndustry(task.industry.clone()))?;
        task.check_against(o)?;
        for &c in conditions {
            prompts.push(assemble_condition(task, c, o, inputs.chunks.as_ref(), cfg)?);
        }
    }

    let cells: Vec<(usize, usize, u32)> = (0..tasks.len())
        .flat_map(|t| (0..conditions.len()).flat_map(move |c| (1..=reps).map(move |r| (t, c, r))))
        .collect();

    let records = cells
        .par_iter()
        .map(|&(t, c, rep)| {
            let task = &tasks[t];
            let condition = conditions[c];
            let prompt = &prompts[t * conditions.len() + c];
            let o = &inputs.ontologies[&task.industry];
            let mut record = RunRecord {
                task_id: task.id.clone(),
                industry: task.industry.clone(),
                category: task.category,
                condition,
                level: condition.level_tag().to_string(),
                repetition: rep,
                generator: generator.id().to_string(),
                prompt_tokens: prompt.prompt_tokens,
                injected_tokens: prompt.injected_tokens,
                response: String::new(),
                scores: TaskScores::default(),
                judge_flag: None,
                error: None,
            };
            let generated = generator
                .generate(&prompt.text, row_seed(cfg.seed, &task.id, rep))
                .and_then(|text| AgentResponse::new(text).map_err(|e| GeneratorError(e.to_string())));
            match generated {
                Ok(response) => {
                    let mut response = response.with_role(task.role.clone());
                    record.scores = scorer.score(&response, task, o);
                    if condition == Condition::C4 {
                        record.judge_flag = Some(judge_flag(&record.scores, task, cfg.judge_threshold));
                    }
                    record.response = std::mem::take(&mut response.text);
                }
                Err(e) => record.error = Some(e.0),
            }
            record
        })
        .collect();
    Ok(records)
}

fn fmt_score(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn write_runs_csv<W: io::Write>(records: &[RunRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.task_id.clone(),
            r.industry.clone(),
            r.category.as_str().to_string(),
            r.condition.as_str().to_string(),
            r.level.clone(),
            r.repetition.to_string(),
            r.generator.clone(),
            r.prompt_tokens.to_string(),
            r.injected_tokens.to_string(),
            fmt_score(r.scores.tf),
            fmt_score(r.scores.ma),
            fmt_score(r.scores.rc),
            fmt_score(r.scores.rs),
            r.judge_flag.map(|f| f.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn runs_csv_string(records: &[RunRecord]) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_runs_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| ExperimentError::Parse(e.to_string()))
}

/// Reads run records back; response text is not part of the CSV and comes
/// back empty.
pub fn read_runs_csv<R: io::Read>(input: R) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(ExperimentError::Parse(format!("unexpected header: {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |field: &str| ExperimentError::Parse(format!("row {}: bad `{field}`", line + 2));
        let num = |i: usize, field: &str| row[i].parse::<usize>().map_err(|_| bad(field));
        let score = |i: usize, field: &str| -> Result<Option<f64>, ExperimentError> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                row[i].parse().map(Some).map_err(|_| bad(field))
            }
        };
        out.push(RunRecord {
            task_id: row[0].to_string(),
            industry: row[1].to_string(),
            category: TaskCategory::parse(&row[2]).ok_or_else(|| bad("category"))?,
            condition: Condition::parse(&row[3]).ok_or_else(|| bad("condition"))?,
            level: row[4].to_string(),
            repetition: row[5].parse().map_err(|_| bad("repetition"))?,
            generator: row[6].to_string(),
            prompt_tokens: num(7, "prompt_tokens")?,
            injected_tokens: num(8, "injected_tokens")?,
            response: String::new(),
            scores: TaskScores {
                tf: score(9, "tf")?,
                ma: score(10, "ma")?,
                rc: score(11, "rc")?,
                rs: score(12, "rs")?,
            },
            judge_flag: match &row[13] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad("judge_flag")),
            },
            error: Some(row[14].to_string()).filter(|e| !e.is_empty()),
        });
    }
    Ok(out)
}
