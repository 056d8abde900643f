//! `ontoground` command-line surface.
//!
//! Exit codes: 0 success, 1 validation or compliance findings, 2 usage or
//! input error. Settings resolve as flags, then the TOML file named by
//! `ONTOGROUND_CONFIG`, then built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use ontoground_core::compliance::{validate as check_response, AgentResponse};
use ontoground_core::context::{resolve_context, ContextError, ResolverConfig, DEFAULT_TOKEN_BUDGET};
use ontoground_core::discovery::{DiscoveryQuery, GovernancePolicy, ScoringWeights, SkillRegistry};
use ontoground_core::experiment::{
    load_chunks, load_tasks, read_runs_csv, run_experiment, write_runs_csv, Condition, EchoGenerator, ExperimentConfig,
    ExperimentInputs, Generator, LexiconGenerator, OntologyScorer, DEFAULT_JUDGE_THRESHOLD,
};
use ontoground_core::metrics::Metric;
use ontoground_core::ontology::{load_blueprint, load_overlay, validate_ontology, Ontology};
use ontoground_core::stats::{stats_report, ReportConfig, StatsReport, DEFAULT_ENTROPY_BINS};

pub const CONFIG_ENV: &str = "ONTOGROUND_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Findings = 1,
    Usage = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "ontoground", version, about = "Ontology grounding engine for enterprise agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an industry blueprint.
    Validate {
        blueprint: PathBuf,
        /// Write the validation report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolve role-scoped context for a query.
    Resolve {
        blueprint: PathBuf,
        #[arg(long)]
        role: String,
        #[arg(long)]
        query: String,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Write the bundle metadata (sections, counts, truncation) as JSON.
        #[arg(long, visible_alias = "out")]
        sidecar: Option<PathBuf>,
    },
    /// Rank skills for a query under governance thresholds.
    Discover {
        skills: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "")]
        query: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "capability")]
        capabilities: Vec<String>,
        #[arg(long)]
        role: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an agent response against a blueprint.
    Check {
        blueprint: PathBuf,
        response: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run conditions over a task set and emit run records as CSV.
    Experiment {
        tasks: PathBuf,
        /// Blueprint file or directory of blueprints; repeatable.
        #[arg(long = "blueprint", required = true)]
        blueprints: Vec<PathBuf>,
        #[arg(long)]
        chunks: Option<PathBuf>,
        /// Comma-separated, e.g. C1,C3.
        #[arg(long)]
        conditions: Option<String>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// `lexicon` or `echo`.
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        judge_threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Friedman, post-hoc and entropy statistics over a run-record CSV.
    Stats {
        runs: PathBuf,
        /// Restrict to these metrics (tf, ma, rc, rs); repeatable.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Values read from the file named by [`CONFIG_ENV`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub resolve: ResolveConfig,
    #[serde(default)]
    pub discover: DiscoverConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub stats: StatsConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveConfig {
    pub budget: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverConfig {
    pub k: Option<usize>,
    pub weights: Option<[f64; 4]>,
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub conditions: Option<Vec<String>>,
    pub reps: Option<u32>,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub budget: Option<usize>,
    pub judge_threshold: Option<f64>,
    pub base_prompt: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    pub bins: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    fn from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

const DEFAULT_K: usize = 10;
const DEFAULT_REPS: u32 = 3;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

/// Parses `args` (including the program name) and runs the command. The
/// config file comes from [`CONFIG_ENV`].
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let status = if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Success };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(rendered.as_bytes()) } else { out.write_all(rendered.as_bytes()) };
            return status;
        }
    };
    let result = Config::from_env().and_then(|cfg| dispatch(cli.command, &cfg, out, err));
    match result {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            ExitStatus::Usage
        }
    }
}

fn dispatch(cmd: Command, cfg: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus> {
    match cmd {
        Command::Validate { blueprint, out: json } => cmd_validate(&blueprint, json.as_deref(), out),
        Command::Resolve { blueprint, role, query, budget, overlay, sidecar } => {
            let budget = budget.or(cfg.resolve.budget).unwrap_or(DEFAULT_TOKEN_BUDGET);
            cmd_resolve(&blueprint, &role, &query, budget, overlay.as_deref(), sidecar.as_deref(), out, err)
        }
        Command::Discover { skills, policy, domain, query, k, capabilities, role, out: json } => {
            let args = DiscoverArgs {
                policy: policy.or_else(|| cfg.discover.policy.clone()),
                domain,
                query,
                k: k.or(cfg.discover.k).unwrap_or(DEFAULT_K),
                weights: cfg.discover.weights,
                capabilities,
                role,
            };
            cmd_discover(&skills, &args, json.as_deref(), out, err)
        }
        Command::Check { blueprint, response, out: json } => cmd_check(&blueprint, &response, json.as_deref(), out),
        Command::Experiment {
            tasks,
            blueprints,
            chunks,
            conditions,
            reps,
            seed,
            generator,
            budget,
            judge_threshold,
            out: csv_out,
        } => {
            let e = &cfg.experiment;
            let conditions = match conditions {
                Some(s) => parse_conditions(s.split(','))?,
                None => match &e.conditions {
                    Some(list) => parse_conditions(list.iter().map(String::as_str))?,
                    None => Condition::ALL.to_vec(),
                },
            };
            let args = ExperimentArgs {
                blueprints,
                chunks,
                conditions,
                reps: reps.or(e.reps).unwrap_or(DEFAULT_REPS),
                generator: generator.or_else(|| e.generator.clone()).unwrap_or_else(|| "lexicon".into()),
                config: ExperimentConfig {
                    base_prompt: e.base_prompt.clone().unwrap_or_else(|| ExperimentConfig::default().base_prompt),
                    token_budget: budget.or(e.budget).unwrap_or(DEFAULT_TOKEN_BUDGET),
                    judge_threshold: judge_threshold.or(e.judge_threshold).unwrap_or(DEFAULT_JUDGE_THRESHOLD),
                    seed: seed.or(e.seed).unwrap_or(0),
                },
            };
            cmd_experiment(&tasks, &args, csv_out.as_deref(), out, err)
        }
        Command::Stats { runs, metrics, bins, out: json } => {
            let metrics = if metrics.is_empty() {
                Metric::ALL.to_vec()
            } else {
                metrics
                    .iter()
                    .map(|m| Metric::parse(m).ok_or_else(|| anyhow!("unknown metric `{m}`")))
                    .collect::<Result<_>>()?
            };
            let report_cfg = ReportConfig {
                metrics,
                entropy_bins: bins.or(cfg.stats.bins).unwrap_or(DEFAULT_ENTROPY_BINS),
                ..ReportConfig::default()
            };
            cmd_stats(&runs, &report_cfg, json.as_deref(), out)
        }
    }
}

fn parse_conditions<'a>(items: impl Iterator<Item = &'a str>) -> Result<Vec<Condition>> {
    let list: Vec<Condition> = items
        .filter(|s| !s.trim().is_empty())
        .map(|s| Condition::parse(s).ok_or_else(|| anyhow!("unknown condition `{s}`")))
        .collect::<Result<_>>()?;
    if list.is_empty() {
        bail!("no conditions given");
    }
    Ok(list)
}

// ---------------------------------------------------------------- validate

fn cmd_validate(path: &Path, json: Option<&Path>, out: &mut dyn Write) -> Result<ExitStatus> {
    let text = read(path)?;
    let report = match serde_json::from_str::<Ontology>(&text) {
        Ok(o) => validate_ontology(&o),
        Err(e) if e.is_data() => {
            writeln!(out, "SCHEMA_MISMATCH $: {e}")?;
            if let Some(p) = json {
                write_json(p, &serde_json::json!({ "violations": [{ "code": "SCHEMA_MISMATCH", "location": "$", "message": e.to_string() }] }))?;
            }
            return Ok(ExitStatus::Findings);
        }
        Err(e) => bail!("{} is not valid JSON: {e}", path.display()),
    };
    if let Some(p) = json {
        write_json(p, &report)?;
    }
    if report.is_empty() {
        writeln!(out, "ok: {}", path.display())?;
        return Ok(ExitStatus::Success);
    }
    for v in &report.violations {
        writeln!(out, "{} {}: {}", v.code.as_str(), v.location, v.message)?;
    }
    Ok(ExitStatus::Findings)
}

// ---------------------------------------------------------------- resolve

fn load_ontology(path: &Path) -> Result<Ontology> {
    load_blueprint(&read(path)?).with_context(|| format!("invalid blueprint {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_resolve(
    blueprint: &Path,
    role: &str,
    query: &str,
    budget: usize,
    overlay: Option<&Path>,
    sidecar: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus> {
    let o = load_ontology(blueprint)?;
    let overlay = match overlay {
        Some(p) => Some(load_overlay(&read(p)?).with_context(|| format!("invalid overlay {}", p.display()))?),
        None => None,
    };
    let cfg = ResolverConfig::new(budget)?;
    let bundle = match resolve_context(query, overlay.as_ref(), role, &o, &cfg) {
        Ok(b) => b,
        Err(ContextError::UnknownRole(r)) => bail!("unknown role `{r}` in {}", o.industry_id),
        Err(e) => return Err(e.into()),
    };
    let text = bundle.text();
    if !text.is_empty() {
        writeln!(out, "{text}")?;
    }
    writeln!(
        err,
        "tokens: {}/{}; dropped: {}",
        bundle.token_count,
        bundle.token_budget,
        bundle.truncation_report.total()
    )?;
    if let Some(p) = sidecar {
        write_file(p, &(bundle.sidecar_json() + "\n"))?;
    }
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------- discover

struct DiscoverArgs {
    policy: Option<PathBuf>,
    domain: String,
    query: String,
    k: usize,
    weights: Option<[f64; 4]>,
    capabilities: Vec<String>,
    role: Option<String>,
}

fn cmd_discover(
    skills: &Path,
    args: &DiscoverArgs,
    json: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus> {
    let registry = SkillRegistry::from_json(&read(skills)?).with_context(|| format!("invalid skills {}", skills.display()))?;
    let policy = match &args.policy {
        Some(p) => GovernancePolicy::from_json(&read(p)?).with_context(|| format!("invalid policy {}", p.display()))?,
        None => GovernancePolicy::default(),
    };
    let weights = match args.weights {
        Some([a, b, c, d]) => ScoringWeights::new(a, b, c, d)?,
        None => ScoringWeights::default(),
    };
    let mut query = DiscoveryQuery::new(args.query.clone(), args.domain.clone(), args.k)?
        .with_capabilities(args.capabilities.iter().cloned());
    if let Some(r) = &args.role {
        query = query.with_role(r.clone());
    }
    let snapshot = registry.snapshot();
    let started = Instant::now();
    let ranked = snapshot.discover(&query, &policy, &weights);
    let elapsed = started.elapsed();
    for (i, r) in ranked.iter().enumerate() {
        writeln!(out, "{:>3}  {:.4}  {}  {}", i + 1, r.score, r.id, r.name)?;
    }
    writeln!(
        err,
        "ranked {} of {} skills in {:.3} ms",
        ranked.len(),
        snapshot.len(),
        elapsed.as_secs_f64() * 1e3
    )?;
    if let Some(p) = json {
        write_json(p, &ranked)?;
    }
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------- check

fn cmd_check(blueprint: &Path, response: &Path, json: Option<&Path>, out: &mut dyn Write) -> Result<ExitStatus> {
    let o = load_ontology(blueprint)?;
    let a = AgentResponse::parse(&read(response)?).with_context(|| format!("invalid response {}", response.display()))?;
    let report = check_response(&a, &o);
    for c in &report.clauses {
        let verdict = match (c.passed, c.vacuous) {
            (true, true) => "pass (vacuous)",
            (true, false) => "pass",
            (false, _) => "FAIL",
        };
        writeln!(out, "{:?} {}: {verdict}, {} checked", c.clause, c.name, c.checked)?;
        for v in &c.violations {
            let span = v.span.map(|(s, e)| format!(" [{s}..{e}]")).unwrap_or_default();
            writeln!(out, "    {}{span}; expected {}", v.offending, v.expected)?;
        }
    }
    writeln!(out, "overall: {}", if report.overall { "pass" } else { "FAIL" })?;
    if let Some(p) = json {
        write_json(p, &report)?;
    }
    Ok(if report.overall { ExitStatus::Success } else { ExitStatus::Findings })
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
    blueprints: Vec<PathBuf>,
    chunks: Option<PathBuf>,
    conditions: Vec<Condition>,
    reps: u32,
    generator: String,
    config: ExperimentConfig,
}

fn blueprint_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn cmd_experiment(
    tasks: &Path,
    args: &ExperimentArgs,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus> {
    let mut task_file = load_tasks(&read(tasks)?).with_context(|| format!("invalid tasks {}", tasks.display()))?;
    let mut inputs = ExperimentInputs::default();
    for f in blueprint_files(&args.blueprints)? {
        let o = load_ontology(&f)?;
        inputs.ontologies.insert(o.industry_id.clone(), o);
    }
    if let Some(c) = &args.chunks {
        inputs.chunks = Some(load_chunks(&read(c)?).with_context(|| format!("invalid chunks {}", c.display()))?);
    }
    let mut cfg = args.config.clone();
    if let Some(base) = task_file.base_prompt.take() {
        if cfg.base_prompt == ExperimentConfig::default().base_prompt {
            cfg.base_prompt = base;
        }
    }
    let generator: Box<dyn Generator> = match args.generator.as_str() {
        "lexicon" => Box::new(LexiconGenerator),
        "echo" => Box::new(EchoGenerator),
        other => bail!("unknown generator `{other}` (expected lexicon or echo)"),
    };
    let records =
        run_experiment(&task_file.tasks, &args.conditions, args.reps, generator.as_ref(), &OntologyScorer, &inputs, &cfg)?;
    match csv_out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
            write_runs_csv(&records, std::io::BufWriter::new(f))?;
        }
        None => write_runs_csv(&records, &mut *out)?,
    }
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    writeln!(err, "wrote {} run records ({} generator errors)", records.len(), errors)?;
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------- stats

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|v| format!("{v:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn render_stats(report: &StatsReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let pairs: Vec<String> = report
        .friedman
        .first()
        .map(|r| r.posthoc.iter().map(|p| format!("{}-{}", p.a, p.b)).collect())
        .unwrap_or_default();
    let _ = write!(s, "{:<6} {:>3} {:>2} {:>9} {:>3} {:>8} {:>6}", "metric", "n", "k", "chi2", "df", "p", "W");
    for p in &pairs {
        let _ = write!(s, " {p:>8}");
    }
    s.push('\n');
    for r in &report.friedman {
        let _ = write!(
            s,
            "{:<6} {:>3} {:>2} {:>9} {:>3} {:>8} {:>6}",
            r.metric.as_str().to_uppercase(),
            r.n,
            r.k,
            fmt_opt(r.chi2, 3),
            fmt_opt(r.df, 0),
            fmt_opt(r.p, 4),
            fmt_opt(r.w, 3)
        );
        for p in &r.posthoc {
            let _ = write!(s, " {:>8}", fmt_opt(p.p_corrected, 4));
        }
        if let Some(note) = &r.note {
            let _ = write!(s, "  ({note})");
        }
        s.push('\n');
    }
    if !report.entropy.is_empty() {
        let _ = writeln!(s, "\nentropy ({} bins)  H(C1)   H(C3)   dH", report.entropy_bins);
        for e in &report.entropy {
            let _ = writeln!(s, "{:<18} {:>6.4}  {:>6.4}  {:>+7.4}", e.metric.as_str().to_uppercase(), e.h_c1, e.h_c3, e.delta);
        }
    }
    if let Some(t) = &report.entropy_sign_test {
        let _ = writeln!(s, "entropy reductions: {} of {}, one-tailed p = {:.4}", t.successes, t.trials, t.p_one_tailed);
    }
    s
}

fn cmd_stats(runs: &Path, cfg: &ReportConfig, json: Option<&Path>, out: &mut dyn Write) -> Result<ExitStatus> {
    let f = fs::File::open(runs).with_context(|| format!("cannot read {}", runs.display()))?;
    let records = read_runs_csv(std::io::BufReader::new(f)).with_context(|| format!("invalid run records {}", runs.display()))?;
    let report = stats_report(&records, cfg)?;
    out.write_all(render_stats(&report).as_bytes())?;
    if let Some(p) = json {
        write_json(p, &report)?;
    }
    Ok(ExitStatus::Success)
}
