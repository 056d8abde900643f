#![allow(dead_code)]

use std::path::PathBuf;

use ontoground_core::ontology::{load_blueprint, Ontology};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn blueprint(name: &str) -> Ontology {
    load_blueprint(&read_fixture(&format!("blueprints/{name}.json"))).unwrap()
}

pub const INDUSTRIES: [&str; 6] = ["saas", "fintech", "insurance", "healthcare", "banking_vn", "insurance_vn"];

pub mod oracles;
