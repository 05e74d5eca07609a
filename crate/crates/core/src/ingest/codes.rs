use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeSystem {
    Atc,
    Icd10Cm,
    Icd10Pcs,
}

/// Normalizes a code: uppercase, whitespace and dots removed, then checks
/// the length and alphabet rules of its system.
pub fn validate_code(code: &str, system: CodeSystem) -> Result<String, IngestError> {
    let norm: String = code
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '.')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    let invalid = || IngestError::InvalidCode { code: code.to_string(), system };
    if norm.is_empty() || !norm.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(invalid());
    }
    let first_alpha = norm.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
    let ok = match system {
        CodeSystem::Atc => (3..=7).contains(&norm.len()) && first_alpha,
        CodeSystem::Icd10Cm => (3..=7).contains(&norm.len()) && first_alpha,
        CodeSystem::Icd10Pcs => norm.len() == 7,
    };
    if ok {
        Ok(norm)
    } else {
        Err(invalid())
    }
}
