use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenizerError;

pub type TokenId = u32;

const VOCAB_FORMAT: &str = "ethos-vocab";
const VOCAB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Static,
    Quantile,
    TimeInterval,
    Event,
    CodeStem,
    CodePart,
    CodeSuffix,
    SofaMarker,
    DrgClass,
    EndOfTimeline,
    Special,
}

/// Names of tokens that exist in every vocabulary.
pub mod names {
    pub const END_OF_TIMELINE: &str = "TIMELINE_END";
    pub const DEATH: &str = "DEATH";
    pub const ED_START: &str = "ED_ADMISSION_START";
    pub const ED_END: &str = "ED_ADMISSION_END";
    pub const INPATIENT_START: &str = "INPATIENT_ADMISSION_START";
    pub const INPATIENT_END: &str = "INPATIENT_ADMISSION_END";
    pub const ICU_START: &str = "ICU_STAY_START";
    pub const ICU_END: &str = "ICU_STAY_END";
    pub const BLOOD_PRESSURE: &str = "BLOOD_PRESSURE";
    pub const SOFA: &str = "SOFA";
    pub const UNKNOWN_ICD: &str = "UNKNOWN_ICD";
    pub const UNKNOWN_ATC: &str = "UNKNOWN_ATC";
    pub const UNKNOWN_PCS: &str = "UNKNOWN_PCS";
    pub const UNKNOWN_DRG: &str = "UNKNOWN_DRG";
    pub const BMI_UNKNOWN: &str = "BMI_UNKNOWN";
    pub const TYPE_UNKNOWN: &str = "TYPE_UNKNOWN";
    pub const INSURANCE_UNKNOWN: &str = "INSURANCE_UNKNOWN";
    pub const DISCHARGED_UNKNOWN: &str = "DISCHARGED_UNKNOWN";
    pub const ICU_TYPE_UNKNOWN: &str = "ICU_TYPE_UNKNOWN";
    pub const TRANSFER_UNKNOWN: &str = "TRANSFER_UNKNOWN";

    pub fn quantile(q: u8) -> String {
        format!("_Q{q}")
    }

    pub fn bmi(q: u8) -> String {
        format!("BMI_Q{q}")
    }
}

/// Bidirectional token/id map with a class tag per token. Ids are dense
/// from zero in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    classes: Vec<TokenClass>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: String,
    version: u32,
    tokens: Vec<VocabEntry>,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    id: TokenId,
    token: String,
    class: TokenClass,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a token, returning the existing id if already present.
    pub fn insert(&mut self, token: &str, class: TokenClass) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.classes.push(class);
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of a token that must exist (well-known tokens).
    pub fn expect_id(&self, token: &str) -> Result<TokenId, TokenizerError> {
        self.id(token)
            .ok_or_else(|| TokenizerError::MissingToken(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn class(&self, id: TokenId) -> Option<TokenClass> {
        self.classes.get(id as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids_of_class(&self, class: TokenClass) -> Vec<TokenId> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i as TokenId)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str, TokenClass)> {
        self.tokens
            .iter()
            .zip(&self.classes)
            .enumerate()
            .map(|(i, (t, &c))| (i as TokenId, t.as_str(), c))
    }

    pub fn class_histogram(&self, ids: &[TokenId]) -> HashMap<TokenClass, usize> {
        let mut h = HashMap::new();
        for &id in ids {
            if let Some(c) = self.class(id) {
                *h.entry(c).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            format: VOCAB_FORMAT.to_string(),
            version: VOCAB_VERSION,
            tokens: self
                .iter()
                .map(|(id, token, class)| VocabEntry { id, token: token.to_string(), class })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenizerError> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.format != VOCAB_FORMAT || file.version != VOCAB_VERSION {
            return Err(TokenizerError::Format(format!(
                "unsupported vocabulary {} v{}",
                file.format, file.version
            )));
        }
        let mut vocab = Vocabulary::new();
        for (expected, entry) in file.tokens.iter().enumerate() {
            if entry.id as usize != expected {
                return Err(TokenizerError::Format(format!(
                    "vocabulary ids must be dense; found {} at position {expected}",
                    entry.id
                )));
            }
            if vocab.id(&entry.token).is_some() {
                return Err(TokenizerError::Format(format!("duplicate token {}", entry.token)));
            }
            vocab.insert(&entry.token, entry.class);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_is_idempotent_and_dense() {
        let mut v = Vocabulary::new();
        assert_eq!(v.insert("A", TokenClass::Event), 0);
        assert_eq!(v.insert("B", TokenClass::Quantile), 1);
        assert_eq!(v.insert("A", TokenClass::Event), 0);
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(1), Some("B"));
        assert_eq!(v.class(1), Some(TokenClass::Quantile));
        assert_eq!(v.ids_of_class(TokenClass::Event), vec![0]);
    }

    #[test]
    fn json_round_trip() {
        let mut v = Vocabulary::new();
        v.insert("_Q1", TokenClass::Quantile);
        v.insert("ICD_R41", TokenClass::CodeStem);
        v.insert("45_50 years", TokenClass::Static);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_sparse_ids() {
        let text = r#"{"format":"ethos-vocab","version":1,"tokens":[{"id":1,"token":"A","class":"event"}]}"#;
        assert!(Vocabulary::from_json(text).is_err());
    }
}
