//! IEEE test systems bundled with the crate (MATPOWER format).

use crate::network::{parse_case, CaseError, PowerNetwork};
use std::path::Path;

const CASE14: &str = include_str!("../data/case14.m");
const CASE30: &str = include_str!("../data/case30.m");
const CASE118: &str = include_str!("../data/case118.m");

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 3] = ["case14", "case30", "case118"];

/// Raw text of a bundled case.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    match name {
        "case14" => Some(CASE14),
        "case30" => Some(CASE30),
        "case118" => Some(CASE118),
        _ => None,
    }
}

/// Parses a bundled case by name.
pub fn bundled(name: &str) -> Result<PowerNetwork, CaseError> {
    let text = bundled_text(name)
        .ok_or_else(|| CaseError::semantic(name, "no bundled case with this name"))?;
    parse_case(text)
}

/// Loads a bundled case by name, or a case file from disk: per-unit JSON
/// when the extension is `.json`, MATPOWER otherwise.
pub fn load(name_or_path: &str) -> Result<PowerNetwork, CaseError> {
    if let Some(text) = bundled_text(name_or_path) {
        return parse_case(text);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::semantic(name_or_path, format!("cannot read case: {e}")))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return PowerNetwork::from_json(&text);
    }
    parse_case(&text)
}
