//! Hierarchical code encodings for diagnoses, drugs and procedures.

use super::vocab::TokenClass;
use super::TokenizerError;

/// ICD-10-CM: stem (chars 1-3), optional part (chars 4-5), optional suffix (6+).
pub fn encode_icd10cm(code: &str) -> Result<Vec<(String, TokenClass)>, TokenizerError> {
    if code.len() < 3 || !code.is_ascii() {
        return Err(TokenizerError::InvalidCode(code.to_string()));
    }
    let mut out = vec![(format!("ICD_{}", &code[..3]), TokenClass::CodeStem)];
    if code.len() > 3 {
        let end = code.len().min(5);
        out.push((format!("ICD_4-5_{}", &code[3..end]), TokenClass::CodePart));
    }
    if code.len() > 5 {
        out.push((format!("ICD_SUFFIX_{}", &code[5..]), TokenClass::CodeSuffix));
    }
    Ok(out)
}

/// ATC: stem (chars 1-3), optional 4th character, optional suffix (5+).
pub fn encode_atc(code: &str) -> Result<Vec<(String, TokenClass)>, TokenizerError> {
    if code.len() < 3 || code.len() > 7 || !code.is_ascii() {
        return Err(TokenizerError::InvalidCode(code.to_string()));
    }
    let mut out = vec![(format!("ATC_{}", &code[..3]), TokenClass::CodeStem)];
    if code.len() > 3 {
        out.push((format!("ATC_4_{}", &code[3..4]), TokenClass::CodePart));
    }
    if code.len() > 4 {
        out.push((format!("ATC_SUFFIX_{}", &code[4..]), TokenClass::CodeSuffix));
    }
    Ok(out)
}

/// ICD-10-PCS: one position-tagged token per character.
pub fn encode_icd10pcs(code: &str) -> Result<Vec<(String, TokenClass)>, TokenizerError> {
    if code.len() != 7 || !code.is_ascii() {
        return Err(TokenizerError::InvalidCode(code.to_string()));
    }
    Ok(code
        .chars()
        .enumerate()
        .map(|(i, c)| {
            let class = if i == 0 { TokenClass::CodeStem } else { TokenClass::CodePart };
            (format!("PCS{}_{}", i + 1, c), class)
        })
        .collect())
}
