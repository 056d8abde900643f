//! Nonparametric statistics for condition comparisons: Friedman with
//! Kendall's W, Wilcoxon signed-rank with Bonferroni correction, histogram
//! entropy and the exact binomial sign test.
//!
//! Special functions are implemented here: the log-gamma function (Lanczos)
//! and the regularized incomplete gamma functions, from which the chi-square
//! and normal tails follow.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::experiment::{Condition, RunRecord};
use crate::metrics::Metric;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need at least {min} nonzero differences, got {got}")]
    TooFewPairs { got: usize, min: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("bin count must be at least 2")]
    InvalidBins,
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("successes {successes} exceed trials {trials}")]
    InvalidCounts { successes: u64, trials: u64 },
}

// ---------------------------------------------------------------- special functions

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

/// Upper tail of the standard normal distribution.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------- ranks

/// 1-based ranks with ties receiving the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let mean = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = mean;
        }
        i = j;
    }
    ranks
}

/// Sizes of tie groups (only groups larger than one).
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            out.push(j - i);
        }
        i = j;
    }
    out
}

// ---------------------------------------------------------------- matrix and results

/// Subjects (rows) by conditions (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    rows: Vec<Vec<f64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let row_labels = (1..=n).map(|i| i.to_string()).collect();
        let col_labels = (1..=k).map(|j| format!("C{j}")).collect();
        Self::with_labels(rows, row_labels, col_labels)
    }

    pub fn with_labels(
        rows: Vec<Vec<f64>>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self, StatsError> {
        let n = rows.len();
        let k = col_labels.len();
        if n < 2 || k < 2 {
            return Err(StatsError::InvalidShape(format!("need n >= 2 and k >= 2, got {n} x {k}")));
        }
        if row_labels.len() != n {
            return Err(StatsError::InvalidShape("row label count differs from row count".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(StatsError::InvalidShape(format!("row {i} has {} cells, expected {k}", rows[i].len())));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::DegenerateInput("non-finite cell".into()));
        }
        Ok(Self { rows, row_labels, col_labels })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.col_labels.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ChiSquare,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
    pub effect_size: Option<f64>,
    pub corrected_p: Option<f64>,
    pub method: Method,
    /// Subjects, or nonzero pairs for Wilcoxon.
    pub n: usize,
}

// ---------------------------------------------------------------- tests

/// Friedman rank test with mean-rank ties and the usual tie correction.
///
/// When every row is constant the correction denominator vanishes; there
/// is no evidence of any difference and the result is χ² = 0, p = 1.
pub fn friedman(m: &ScoreMatrix) -> Result<TestResult, StatsError> {
    let (n, k) = (m.n(), m.k());
    let (nf, kf) = (n as f64, k as f64);
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in m.rows() {
        for (j, r) in average_ranks(row).into_iter().enumerate() {
            rank_sums[j] += r;
        }
        tie_term += tie_sizes(row).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_term / (nf * (kf * kf * kf - kf));
    let df = kf - 1.0;
    let chi2 = if correction <= 0.0 { 0.0 } else { (raw / correction).max(0.0) };
    Ok(TestResult {
        statistic: chi2,
        df: Some(df),
        p_value: chi2_sf(chi2, df),
        effect_size: Some(kendalls_w(chi2, n, k)),
        corrected_p: None,
        method: Method::ChiSquare,
        n,
    })
}

/// Kendall's coefficient of concordance from a Friedman statistic.
pub fn kendalls_w(chi2: f64, n: usize, k: usize) -> f64 {
    if n == 0 || k < 2 {
        return 0.0;
    }
    (chi2 / (n as f64 * (k as f64 - 1.0))).clamp(0.0, 1.0)
}

pub const WILCOXON_MIN_PAIRS: usize = 5;
/// Largest nonzero-pair count for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied absolute differences get mean
/// ranks. The statistic is `min(W+, W-)`. Up to [`WILCOXON_EXACT_MAX`]
/// nonzero pairs the p-value comes from the exact permutation distribution
/// of the (tied) ranks; above that from the normal approximation with
/// continuity and tie corrections.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidShape(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateInput("non-finite difference".into()));
    }
    let n = d.len();
    if n < WILCOXON_MIN_PAIRS {
        return Err(StatsError::TooFewPairs { got: n, min: WILCOXON_MIN_PAIRS });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p, method) = if n <= WILCOXON_EXACT_MAX {
        (exact_signed_rank_p(&ranks, w_plus), Method::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let ties: f64 = tie_sizes(&abs).iter().map(|&t| (t * t * t - t) as f64).sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        ((2.0 * normal_sf(z)).min(1.0), Method::NormalApprox)
    };
    Ok(TestResult { statistic, df: None, p_value: p, effect_size: None, corrected_p: None, method, n })
}

/// Two-sided exact p for the positive-rank sum `w_plus` given the ranks,
/// via a subset-sum count over doubled ranks.
fn exact_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let obs = (w_plus * 2.0).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: f64 = counts[..=obs].iter().sum();
    let upper: f64 = counts[obs..].iter().sum();
    (2.0 * lower.min(upper) / all).min(1.0)
}

/// Multiplies each p-value by the family size `m`, capping at 1.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

pub const DEFAULT_ENTROPY_BINS: usize = 10;

/// Shannon entropy in bits of a histogram of `scores` over `bins`
/// equal-width bins on [0, 1]. A score of exactly 1 falls in the last bin.
pub fn shannon_entropy(scores: &[f64], bins: usize) -> Result<f64, StatsError> {
    if bins < 2 {
        return Err(StatsError::InvalidBins);
    }
    if scores.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut hist = vec![0usize; bins];
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(StatsError::OutOfRange(s));
        }
        hist[((s * bins as f64).floor() as usize).min(bins - 1)] += 1;
    }
    let n = scores.len() as f64;
    let h = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Row `n` of Pascal's triangle; every entry fits in a u128 for n <= 127.
fn pascal_row(n: u64) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(1);
        next.extend(row.windows(2).map(|w| w[0] + w[1]));
        next.push(1);
        row = next;
    }
    row
}

/// Exact `P(X >= successes)` for `X ~ Binomial(trials, 1/2)` as a fraction
/// `(numerator, 2^trials)`. Available for up to 127 trials.
pub fn binomial_tail_fraction(successes: u64, trials: u64) -> Option<(u128, u128)> {
    if trials > 127 || successes > trials {
        return None;
    }
    let num = pascal_row(trials)[successes as usize..].iter().sum();
    Some((num, 1u128 << trials))
}

/// One-tailed sign test: `P(X >= successes)` under a fair coin.
pub fn binomial_sign_test(successes: u64, trials: u64) -> Result<f64, StatsError> {
    if successes > trials {
        return Err(StatsError::InvalidCounts { successes, trials });
    }
    if let Some((num, den)) = binomial_tail_fraction(successes, trials) {
        return Ok(num as f64 / den as f64);
    }
    let nf = trials as f64;
    let ln_half = nf * 0.5f64.ln();
    let log_terms: Vec<f64> = (successes..=trials)
        .map(|i| {
            let i = i as f64;
            ln_gamma(nf + 1.0) - ln_gamma(i + 1.0) - ln_gamma(nf - i + 1.0) + ln_half
        })
        .collect();
    let top = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|l| (l - top).exp()).sum();
    Ok((top + sum.ln()).exp().min(1.0))
}

// ---------------------------------------------------------------- run-record report

pub const DEFAULT_POSTHOC_PAIRS: [(Condition, Condition); 3] =
    [(Condition::C1, Condition::C3), (Condition::C2, Condition::C3), (Condition::C3, Condition::C4)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub metrics: Vec<Metric>,
    pub posthoc_pairs: Vec<(Condition, Condition)>,
    pub entropy_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            posthoc_pairs: DEFAULT_POSTHOC_PAIRS.to_vec(),
            entropy_bins: DEFAULT_ENTROPY_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostHoc {
    pub a: Condition,
    pub b: Condition,
    pub statistic: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_corrected: Option<f64>,
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanRow {
    pub metric: Metric,
    pub n: usize,
    pub k: usize,
    pub conditions: Vec<Condition>,
    pub chi2: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub w: Option<f64>,
    pub posthoc: Vec<PostHoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRow {
    pub metric: Metric,
    pub h_c1: f64,
    pub h_c3: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignTest {
    pub successes: u64,
    pub trials: u64,
    pub p_one_tailed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub friedman: Vec<FriedmanRow>,
    pub entropy_bins: usize,
    pub entropy: Vec<EntropyRow>,
    /// Entropy reductions (C1 to C3) counted across metrics.
    pub entropy_sign_test: Option<SignTest>,
    pub wilcoxon_exact_max: usize,
}

/// Builds the tasks × conditions matrix for one metric: scores are averaged
/// over repetitions and only tasks scored under every present condition are
/// kept. Error rows and blank cells are ignored.
pub fn task_matrix(records: &[RunRecord], metric: Metric) -> (Vec<String>, Vec<Condition>, Vec<Vec<f64>>) {
    let mut cells: BTreeMap<&str, BTreeMap<Condition, (f64, usize)>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if r.error.is_some() {
            continue;
        }
        let Some(v) = r.score(metric) else { continue };
        if !cells.contains_key(r.task_id.as_str()) {
            order.push(&r.task_id);
        }
        let e = cells.entry(&r.task_id).or_default().entry(r.condition).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let mut conditions: Vec<Condition> = cells.values().flat_map(|m| m.keys().copied()).collect();
    conditions.sort();
    conditions.dedup();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for task in order {
        let m = &cells[task];
        if conditions.iter().all(|c| m.contains_key(c)) {
            labels.push(task.to_string());
            rows.push(conditions.iter().map(|c| m[c].0 / m[c].1 as f64).collect());
        }
    }
    (labels, conditions, rows)
}

fn run_scores(records: &[RunRecord], metric: Metric, condition: Condition) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.error.is_none() && r.condition == condition)
        .filter_map(|r| r.score(metric))
        .collect()
}

fn friedman_row(records: &[RunRecord], metric: Metric, cfg: &ReportConfig) -> FriedmanRow {
    let (labels, conditions, rows) = task_matrix(records, metric);
    let mut row = FriedmanRow {
        metric,
        n: rows.len(),
        k: conditions.len(),
        conditions: conditions.clone(),
        chi2: None,
        df: None,
        p: None,
        w: None,
        posthoc: Vec::new(),
        note: None,
    };
    let col_labels = conditions.iter().map(|c| c.as_str().to_string()).collect();
    let matrix = match ScoreMatrix::with_labels(rows, labels, col_labels) {
        Ok(m) => m,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    match friedman(&matrix) {
        Ok(t) => {
            row.chi2 = Some(t.statistic);
            row.df = t.df;
            row.p = Some(t.p_value);
            row.w = t.effect_size;
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    let family = cfg.posthoc_pairs.len();
    for &(a, b) in &cfg.posthoc_pairs {
        let mut ph = PostHoc { a, b, statistic: None, p_raw: None, p_corrected: None, method: None, note: None };
        match (conditions.iter().position(|c| *c == a), conditions.iter().position(|c| *c == b)) {
            (Some(i), Some(j)) => match wilcoxon_signed_rank(&matrix.column(i), &matrix.column(j)) {
                Ok(t) => {
                    ph.statistic = Some(t.statistic);
                    ph.p_raw = Some(t.p_value);
                    ph.p_corrected = bonferroni(&[t.p_value], family).first().copied();
                    ph.method = Some(t.method);
                }
                Err(e) => ph.note = Some(e.to_string()),
            },
            _ => ph.note = Some("condition not present".into()),
        }
        row.posthoc.push(ph);
    }
    row
}

pub fn stats_report(records: &[RunRecord], cfg: &ReportConfig) -> Result<StatsReport, StatsError> {
    if cfg.entropy_bins < 2 {
        return Err(StatsError::InvalidBins);
    }
    let friedman = cfg.metrics.iter().map(|&m| friedman_row(records, m, cfg)).collect();
    let mut entropy = Vec::new();
    for &m in &cfg.metrics {
        let c1 = run_scores(records, m, Condition::C1);
        let c3 = run_scores(records, m, Condition::C3);
        if c1.is_empty() || c3.is_empty() {
            continue;
        }
        let h_c1 = shannon_entropy(&c1, cfg.entropy_bins)?;
        let h_c3 = shannon_entropy(&c3, cfg.entropy_bins)?;
        entropy.push(EntropyRow { metric: m, h_c1, h_c3, delta: h_c3 - h_c1 });
    }
    let entropy_sign_test = if entropy.is_empty() {
        None
    } else {
        let successes = entropy.iter().filter(|e| e.delta < 0.0).count() as u64;
        let trials = entropy.len() as u64;
        Some(SignTest { successes, trials, p_one_tailed: binomial_sign_test(successes, trials)? })
    };
    Ok(StatsReport {
        friedman,
        entropy_bins: cfg.entropy_bins,
        entropy,
        entropy_sign_test,
        wilcoxon_exact_max: WILCOXON_EXACT_MAX,
    })
}
