//! Dot-separated vertical hierarchy paths such as `fintech.payments.card_networks`.

use super::OntologyError;

/// Verticals deeper than this are rejected.
pub const MAX_VERTICAL_DEPTH: usize = 6;

/// Splits a vertical path into its segments, rejecting empty segments and
/// paths deeper than [`MAX_VERTICAL_DEPTH`].
pub fn segments(path: &str) -> Result<Vec<&str>, OntologyError> {
    let segs: Vec<&str> = path.split('.').collect();
    if segs.iter().any(|s| s.trim().is_empty()) {
        return Err(OntologyError::Format {
            path: path.to_string(),
            reason: "empty segment".into(),
        });
    }
    if segs.len() > MAX_VERTICAL_DEPTH {
        return Err(OntologyError::Format {
            path: path.to_string(),
            reason: format!("depth {} exceeds {MAX_VERTICAL_DEPTH}", segs.len()),
        });
    }
    Ok(segs)
}

/// All strict dot-prefixes of `path`, shortest first.
pub fn ancestors(path: &str) -> Result<Vec<String>, OntologyError> {
    let segs = segments(path)?;
    Ok((1..segs.len()).map(|n| segs[..n].join(".")).collect())
}

/// True iff `candidate` is a strict dot-prefix of `path`.
pub fn is_ancestor(candidate: &str, path: &str) -> bool {
    path.len() > candidate.len()
        && path.starts_with(candidate)
        && path.as_bytes()[candidate.len()] == b'.'
        && !candidate.is_empty()
}

pub fn parent(path: &str) -> Option<&str> {
    path.rfind('.').map(|i| &path[..i])
}

pub fn leaf(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

pub fn depth(path: &str) -> usize {
    path.split('.').count()
}
