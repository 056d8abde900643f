//! Brute-force reference implementations written from the definitions,
//! sharing no code with the library beyond its data types.

use std::collections::BTreeSet;

use ontoground_core::context::RawContext;
use ontoground_core::discovery::SkillRecord;

/// Mean rank of `v[i]` within `v`: one plus the count of smaller values
/// plus half the count of other equal values.
pub fn rank_by_counting(v: &[f64], i: usize) -> f64 {
    let less = v.iter().filter(|x| **x < v[i]).count() as f64;
    let equal = v.iter().filter(|x| **x == v[i]).count() as f64;
    less + (equal + 1.0) / 2.0
}

/// Tie-corrected Friedman statistic.
pub fn friedman_chi2(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let kf = k as f64;
    let mut sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in rows {
        for (j, s) in sums.iter_mut().enumerate() {
            *s += rank_by_counting(row, j);
        }
        let mut seen: Vec<f64> = Vec::new();
        for x in row {
            if !seen.contains(x) {
                seen.push(*x);
                let t = row.iter().filter(|y| *y == x).count() as f64;
                ties += t * t * t - t;
            }
        }
    }
    // sum of squared deviations of rank sums from their mean n(k+1)/2
    let mean = n * (kf + 1.0) / 2.0;
    let ss: f64 = sums.iter().map(|s| (s - mean) * (s - mean)).sum();
    let denom = n * kf * (kf + 1.0) / 12.0 - ties / (12.0 * (kf - 1.0));
    if denom <= 0.0 { 0.0 } else { ss / denom }
}

/// Two-sided exact signed-rank p by enumerating all 2^n sign vectors.
pub fn signed_rank_p_enumerated(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = (0..abs.len()).map(|i| rank_by_counting(&abs, i)).collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        // ranks are multiples of 1/2, so a quarter-unit margin is exact
        if w <= observed + 0.25 {
            le += 1;
        }
        if w >= observed - 0.25 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

fn words(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Thresholds for the oracle: exact or nearest ancestor entry, else default.
pub fn oracle_threshold(thresholds: &[(String, f64)], default: f64, vertical: &str) -> f64 {
    let segs: Vec<&str> = vertical.split('.').collect();
    for len in (1..=segs.len()).rev() {
        let prefix = segs[..len].join(".");
        if let Some((_, t)) = thresholds.iter().find(|(p, _)| *p == prefix) {
            return *t;
        }
    }
    default
}

pub struct OracleQuery<'a> {
    pub text: &'a str,
    pub domain: &'a str,
    pub capabilities: &'a [String],
    pub role: Option<&'a str>,
    pub k: usize,
}

/// Full scan: eligibility by the strictest tag threshold, score every skill,
/// sort by descending score then id.
pub fn discover_exhaustive(
    skills: &[SkillRecord],
    thresholds: &[(String, f64)],
    default: f64,
    q: &OracleQuery<'_>,
) -> Vec<(String, f64)> {
    let qw = words(q.text);
    let wanted: BTreeSet<&String> = q.capabilities.iter().collect();
    let mut scored: Vec<(String, f64)> = skills
        .iter()
        .filter(|s| {
            let need = s.domain_paths.iter().map(|p| oracle_threshold(thresholds, default, p)).fold(0.0, f64::max);
            s.quality >= need
        })
        .map(|s| {
            let doc: BTreeSet<String> = words(&s.name).union(&words(&s.description)).cloned().collect();
            let lexical = if qw.is_empty() { 0.0 } else { qw.intersection(&doc).count() as f64 / qw.len() as f64 };
            let domain = s
                .domain_paths
                .iter()
                .map(|p| {
                    if p == q.domain {
                        1.0
                    } else if q.domain.starts_with(&format!("{p}.")) {
                        0.5
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            let capability = if wanted.is_empty() {
                0.0
            } else {
                wanted.iter().filter(|c| s.capabilities.contains(c)).count() as f64 / wanted.len() as f64
            };
            let role = if q.role.is_some_and(|r| s.roles.iter().any(|x| x == r)) { 1.0 } else { 0.0 };
            (s.id.clone(), 0.4 * lexical + 0.3 * domain + 0.2 * capability + 0.1 * role)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(q.k);
    scored
}

const HEADERS: [&str; 3] = ["## ROLE CONTEXT", "## DOMAIN CONTEXT", "## INTERACTION CONTEXT"];

fn rendered_tokens(layers: [&[String]; 3], kept: [usize; 3]) -> usize {
    let mut text = String::new();
    for l in 0..3 {
        if kept[l] == 0 {
            continue;
        }
        text.push_str(HEADERS[l]);
        for item in &layers[l][..kept[l]] {
            text.push('\n');
            text.push_str(item);
        }
        text.push_str("\n\n");
    }
    text.split_whitespace().count()
}

/// Largest priority-respecting prefix selection that fits, compared
/// lexicographically as (role kept, domain kept, interaction kept); `None`
/// when not even one ROLE item fits.
pub fn optimize_brute(raw: &RawContext, budget: usize) -> Option<[usize; 3]> {
    let layers = [raw.role.as_slice(), raw.domain.as_slice(), raw.interaction.as_slice()];
    let full = [layers[0].len(), layers[1].len(), layers[2].len()];
    let mut best: Option<[usize; 3]> = None;
    for r in 0..=full[0] {
        for d in 0..=full[1] {
            for i in 0..=full[2] {
                let monotone = (i == 0 || d == full[1]) && ((d == 0 && i == 0) || r == full[0]);
                let nonempty = r >= 1 || full[0] == 0;
                if monotone && nonempty && rendered_tokens(layers, [r, d, i]) <= budget {
                    let cand = [r, d, i];
                    if best.is_none_or(|b| cand > b) {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    best
}
