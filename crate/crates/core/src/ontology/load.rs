use super::validate::{validate_ontology, ErrorKind, ValidationReport};
use super::{Ontology, OntologyError};

/// Parses and cross-validates a JSON blueprint.
pub fn load_blueprint(document: &str) -> Result<Ontology, OntologyError> {
    let ontology: Ontology =
        serde_json::from_str(document).map_err(|e| OntologyError::Schema(e.to_string()))?;
    if ontology.roles.is_empty() {
        return Err(OntologyError::Schema("`roles` must define at least one role".into()));
    }
    let report = validate_ontology(&ontology);
    if let Some(err) = report_to_error(&report) {
        return Err(err);
    }
    Ok(ontology)
}

/// Serializes an ontology back into blueprint form.
pub fn to_blueprint_string(o: &Ontology) -> String {
    serde_json::to_string_pretty(o).expect("ontology serialization is infallible")
}

/// Collapses a report into the most severe error kind present, listing every
/// violation of that kind.
pub(crate) fn report_to_error(report: &ValidationReport) -> Option<OntologyError> {
    let kind = report.violations.iter().map(|v| v.code.kind()).min()?;
    let msg = report
        .violations
        .iter()
        .filter(|v| v.code.kind() == kind)
        .map(|v| format!("{} at {}: {}", v.code.as_str(), v.location, v.message))
        .collect::<Vec<_>>()
        .join("; ");
    Some(match kind {
        ErrorKind::Schema => OntologyError::Schema(msg),
        ErrorKind::Reference => OntologyError::Reference(msg),
        ErrorKind::Hierarchy => OntologyError::Hierarchy(msg),
    })
}
