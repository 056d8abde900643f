//! Blueprints shared by unit tests.

use crate::ontology::{load_blueprint, Ontology};

pub const SAAS_JSON: &str = include_str!("../../../fixtures/blueprints/saas.json");

pub fn saas() -> Ontology {
    load_blueprint(SAAS_JSON).expect("saas fixture loads")
}
