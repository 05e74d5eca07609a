//! Turning event streams into patient health timelines.

pub mod codes;
pub mod corpus;
pub mod interval;
pub mod pht;
pub mod quantile;
pub mod statics;
pub mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{select_top_labs, EventKind, PatientId, PatientRecord};

pub use codes::{encode_atc, encode_icd10cm, encode_icd10pcs};
pub use corpus::{build_corpus, load_timestamped, save_timestamps, Corpus, CorpusEntry};
pub use interval::TimeIntervalScheme;
pub use pht::{build_pht, make_context_window, PatientTimeline, PhtStats, TimelineAnchor, HEADER_LEN};
pub use quantile::{fit_quantiles, QuantileBinner};
pub use statics::{encode_age_bucket, encode_sofa};
pub use vocab::{names, TokenClass, TokenId, Vocabulary};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("token {0:?} is not in the vocabulary")]
    MissingToken(String),
    #[error("categories without numeric values: {0:?}")]
    EmptyCategories(Vec<String>),
    #[error("no quantile bins for category {0:?}")]
    UnknownCategory(String),
    #[error("invalid code {0:?}")]
    InvalidCode(String),
    #[error("position {position} out of range for body of length {len}")]
    OutOfRange { position: usize, len: usize },
    #[error("context length {0} leaves no room after the 6 static tokens")]
    ContextTooShort(usize),
    #[error("patient {0} has no encodable events")]
    EmptyTimeline(PatientId),
}

/// Binner categories for numeric payloads that are not lab tests.
pub mod categories {
    pub const ED_LOS: &str = "ED_LOS";
    pub const INPATIENT_LOS: &str = "INPATIENT_LOS";
    pub const ICU_LOS: &str = "ICU_LOS";
    pub const BP_SYSTOLIC: &str = "BP_SYSTOLIC";
    pub const BP_DIASTOLIC: &str = "BP_DIASTOLIC";
    pub const BMI: &str = "BMI";
}

/// Lab tokens keep the source label verbatim, e.g. `LAB_Albumin_g/dL`.
pub fn lab_token(category: &str) -> String {
    format!("LAB_{category}")
}

pub fn omr_token(name: &str) -> String {
    format!("OMR_{}", categorical(name))
}

pub fn drg_token(code: &str) -> String {
    format!("DRG_{code}")
}

/// Uppercased category with runs of non-alphanumerics collapsed to `_`.
pub fn categorical(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_uppercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn prefixed(prefix: &str, raw: &str) -> Option<String> {
    let c = categorical(raw);
    (!c.is_empty()).then(|| format!("{prefix}{c}"))
}

/// One slot of an event's token expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    /// A token that must exist in every vocabulary.
    Fixed(&'static str),
    /// A data-derived token; unseen ones become `fallback`, or drop the
    /// event when there is no fallback.
    Data { token: String, class: TokenClass, fallback: Option<&'static str> },
    Quantile { category: String, value: f64 },
    SofaQuantile(u8),
    /// Stem first; an unseen stem collapses the code to `unknown`, unseen
    /// parts are dropped.
    Code { tokens: Vec<(String, TokenClass)>, unknown: &'static str },
    Drg(Option<String>),
}

/// Token expansion of one event, before vocabulary lookup.
pub fn event_pieces(kind: &EventKind) -> Result<Vec<Piece>, TokenizerError> {
    use categories as cat;
    let cat_piece = |prefix: &str, raw: &str, fallback: &'static str| match prefixed(prefix, raw) {
        Some(token) => Piece::Data { token, class: TokenClass::Event, fallback: Some(fallback) },
        None => Piece::Fixed(fallback),
    };
    let q = |category: &str, value: f64| Piece::Quantile { category: category.to_string(), value };
    Ok(match kind {
        EventKind::EdAdmit => vec![Piece::Fixed(names::ED_START)],
        EventKind::EdDischarge { los_days } => {
            vec![Piece::Fixed(names::ED_END), q(cat::ED_LOS, *los_days)]
        }
        EventKind::InpatientAdmit { admission_type, insurance } => vec![
            Piece::Fixed(names::INPATIENT_START),
            cat_piece("TYPE_", admission_type, names::TYPE_UNKNOWN),
            cat_piece("INSURANCE_", insurance, names::INSURANCE_UNKNOWN),
        ],
        EventKind::InpatientDischarge { los_days, destination } => vec![
            Piece::Fixed(names::INPATIENT_END),
            q(cat::INPATIENT_LOS, *los_days),
            cat_piece("DISCHARGED_", destination, names::DISCHARGED_UNKNOWN),
        ],
        EventKind::Drg { code } => vec![Piece::Drg(code.clone())],
        EventKind::IcuAdmit { icu_type } => vec![
            Piece::Fixed(names::ICU_START),
            match icu_type.trim() {
                "" => Piece::Fixed(names::ICU_TYPE_UNKNOWN),
                t => Piece::Data {
                    token: format!("ICU_TYPE_{t}"),
                    class: TokenClass::Event,
                    fallback: Some(names::ICU_TYPE_UNKNOWN),
                },
            },
        ],
        EventKind::Sofa { score } => {
            let (quantile, _) =
                encode_sofa(*score).ok_or_else(|| TokenizerError::Format(format!("SOFA {score}")))?;
            vec![Piece::Fixed(names::SOFA), Piece::SofaQuantile(quantile)]
        }
        EventKind::IcuDischarge { los_days } => {
            vec![Piece::Fixed(names::ICU_END), q(cat::ICU_LOS, *los_days)]
        }
        EventKind::Transfer { careunit } => {
            vec![cat_piece("TRANSFER_", careunit, names::TRANSFER_UNKNOWN)]
        }
        EventKind::Lab { category, value } => {
            let token = lab_token(category);
            vec![
                Piece::Data { token: token.clone(), class: TokenClass::Event, fallback: None },
                q(&token, *value),
            ]
        }
        EventKind::OmrMeasure { name, value } => {
            let token = omr_token(name);
            vec![
                Piece::Data { token: token.clone(), class: TokenClass::Event, fallback: None },
                q(&token, *value),
            ]
        }
        EventKind::BloodPressure { systolic, diastolic } => vec![
            Piece::Fixed(names::BLOOD_PRESSURE),
            q(cat::BP_SYSTOLIC, *systolic),
            q(cat::BP_DIASTOLIC, *diastolic),
        ],
        EventKind::MedAdministered { atc } | EventKind::MedPrescribed { atc } => {
            vec![Piece::Code { tokens: encode_atc(atc)?, unknown: names::UNKNOWN_ATC }]
        }
        EventKind::Diagnosis { icd } => {
            vec![Piece::Code { tokens: encode_icd10cm(icd)?, unknown: names::UNKNOWN_ICD }]
        }
        EventKind::Procedure { pcs } => {
            vec![Piece::Code { tokens: encode_icd10pcs(pcs)?, unknown: names::UNKNOWN_PCS }]
        }
        EventKind::Death => vec![Piece::Fixed(names::DEATH)],
    })
}

/// Numeric observations an event contributes to quantile fitting.
pub fn numeric_observations(kind: &EventKind) -> Vec<(String, f64)> {
    match event_pieces(kind) {
        Ok(pieces) => pieces
            .into_iter()
            .filter_map(|p| match p {
                Piece::Quantile { category, value } => Some((category, value)),
                _ => None,
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Tokens present in every vocabulary, in id order.
pub fn fixed_tokens(scheme: &TimeIntervalScheme, n_age_buckets: usize) -> Vec<(String, TokenClass)> {
    use statics::{Marital, Race, Sex};
    let mut out: Vec<(String, TokenClass)> = vec![(names::END_OF_TIMELINE.into(), TokenClass::EndOfTimeline)];
    for t in [
        names::DEATH,
        names::ED_START,
        names::ED_END,
        names::INPATIENT_START,
        names::INPATIENT_END,
        names::ICU_START,
        names::ICU_END,
        names::BLOOD_PRESSURE,
        names::TYPE_UNKNOWN,
        names::INSURANCE_UNKNOWN,
        names::DISCHARGED_UNKNOWN,
        names::ICU_TYPE_UNKNOWN,
        names::TRANSFER_UNKNOWN,
    ] {
        out.push((t.into(), TokenClass::Event));
    }
    out.push((names::SOFA.into(), TokenClass::SofaMarker));
    for t in [names::UNKNOWN_ICD, names::UNKNOWN_ATC, names::UNKNOWN_PCS] {
        out.push((t.into(), TokenClass::CodeStem));
    }
    out.push((names::UNKNOWN_DRG.into(), TokenClass::DrgClass));
    for q in 1..=quantile::N_QUANTILES as u8 {
        out.push((names::quantile(q), TokenClass::Quantile));
    }
    for b in scheme.buckets() {
        out.push((b.name.clone(), TokenClass::TimeInterval));
    }
    for s in Sex::ALL {
        out.push((s.token().into(), TokenClass::Static));
    }
    for r in Race::ALL {
        out.push((r.token().into(), TokenClass::Static));
    }
    for m in Marital::ALL {
        out.push((m.token().into(), TokenClass::Static));
    }
    for q in 1..=quantile::N_QUANTILES as u8 {
        out.push((names::bmi(q), TokenClass::Static));
    }
    out.push((names::BMI_UNKNOWN.into(), TokenClass::Static));
    for i in 0..n_age_buckets.max(1) {
        out.push((statics::bucket_label(i), TokenClass::Static));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub n_age_buckets: usize,
    /// Keep only the `k` most frequent lab categories of the training split.
    pub top_labs: Option<usize>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { n_age_buckets: statics::DEFAULT_AGE_BUCKETS, top_labs: Some(200) }
    }
}

/// Fitted vocabulary, quantile bins and interval scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    pub vocab: Vocabulary,
    pub binner: QuantileBinner,
    pub scheme: TimeIntervalScheme,
    pub config: TokenizerConfig,
    /// Lab categories kept by the top-k selection.
    pub lab_categories: BTreeSet<String>,
    pub lab_coverage: f64,
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    format: String,
    version: u32,
    config: TokenizerConfig,
    scheme: TimeIntervalScheme,
    lab_categories: BTreeSet<String>,
    lab_coverage: f64,
}

const TOKENIZER_FORMAT: &str = "ethos-tokenizer";
const TOKENIZER_VERSION: u32 = 1;

pub const VOCAB_FILE: &str = "vocab.json";
pub const BINNER_FILE: &str = "binner.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";

impl Tokenizer {
    /// Fits quantile bins and the vocabulary on training records only.
    pub fn fit<'a, I>(train: I, config: TokenizerConfig) -> Result<Tokenizer, TokenizerError>
    where
        I: IntoIterator<Item = &'a PatientRecord> + Clone,
    {
        let scheme = TimeIntervalScheme::standard();
        let top = select_top_labs(train.clone(), config.top_labs.unwrap_or(usize::MAX));
        let keep_event = |kind: &EventKind| match kind {
            EventKind::Lab { category, .. } => top.categories.contains(category),
            _ => true,
        };

        let mut fitter = quantile::QuantileFitter::new();
        for record in train.clone() {
            if let Some(bmi) = record.statics.bmi {
                fitter.observe(categories::BMI, bmi);
            }
            for e in record.events.iter().filter(|e| keep_event(&e.kind)) {
                for (category, value) in numeric_observations(&e.kind) {
                    fitter.observe(&category, value);
                }
            }
        }
        let binner = fitter.fit()?;

        let mut vocab = Vocabulary::new();
        for (t, c) in fixed_tokens(&scheme, config.n_age_buckets) {
            vocab.insert(&t, c);
        }
        let mut data: BTreeMap<String, TokenClass> = BTreeMap::new();
        for record in train {
            for e in record.events.iter().filter(|e| keep_event(&e.kind)) {
                let Ok(pieces) = event_pieces(&e.kind) else { continue };
                for p in pieces {
                    match p {
                        Piece::Data { token, class, .. } => {
                            data.entry(token).or_insert(class);
                        }
                        Piece::Code { tokens, .. } => {
                            for (t, c) in tokens {
                                data.entry(t).or_insert(c);
                            }
                        }
                        Piece::Drg(Some(code)) => {
                            data.entry(drg_token(&code)).or_insert(TokenClass::DrgClass);
                        }
                        _ => {}
                    }
                }
            }
        }
        for (t, c) in data {
            vocab.insert(&t, c);
        }
        Ok(Tokenizer {
            vocab,
            binner,
            scheme,
            config,
            lab_categories: top.categories,
            lab_coverage: top.coverage,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), TokenizerError> {
        fs::create_dir_all(dir)?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        self.binner.save(&dir.join(BINNER_FILE))?;
        let file = TokenizerFile {
            format: TOKENIZER_FORMAT.into(),
            version: TOKENIZER_VERSION,
            config: self.config.clone(),
            scheme: self.scheme.clone(),
            lab_categories: self.lab_categories.clone(),
            lab_coverage: self.lab_coverage,
        };
        fs::write(dir.join(TOKENIZER_FILE), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Tokenizer, TokenizerError> {
        let file: TokenizerFile =
            serde_json::from_str(&fs::read_to_string(dir.join(TOKENIZER_FILE))?)?;
        if file.format != TOKENIZER_FORMAT || file.version != TOKENIZER_VERSION {
            return Err(TokenizerError::Format(format!(
                "unsupported tokenizer {} v{}",
                file.format, file.version
            )));
        }
        Ok(Tokenizer {
            vocab: Vocabulary::load(&dir.join(VOCAB_FILE))?,
            binner: QuantileBinner::load(&dir.join(BINNER_FILE))?,
            scheme: file.scheme,
            config: file.config,
            lab_categories: file.lab_categories,
            lab_coverage: file.lab_coverage,
        })
    }

    pub fn build_pht(&self, record: &PatientRecord) -> Result<(PatientTimeline, PhtStats), TokenizerError> {
        build_pht(record, &self.binner, &self.vocab, &self.scheme, self.config.n_age_buckets)
    }

    pub fn id(&self, token: &str) -> Result<TokenId, TokenizerError> {
        self.vocab.expect_id(token)
    }

    /// Representative duration in days of an interval token, if `id` is one.
    pub fn interval_days(&self, id: TokenId) -> Option<f64> {
        let name = self.vocab.token(id)?;
        self.scheme.index_of(name).map(|i| self.scheme.bucket(i).representative_days())
    }

    /// Per-token representative durations in days (zero for non-interval tokens).
    pub fn interval_table(&self) -> Vec<f64> {
        (0..self.vocab.len() as TokenId).map(|id| self.interval_days(id).unwrap_or(0.0)).collect()
    }

    /// Quantile number for `_Qk` tokens.
    pub fn quantile_of(&self, id: TokenId) -> Option<u8> {
        if self.vocab.class(id)? != TokenClass::Quantile {
            return None;
        }
        self.vocab.token(id)?.strip_prefix("_Q")?.parse().ok()
    }

    /// Ids of `_Q1`..`_Q10` in order.
    pub fn quantile_ids(&self) -> Vec<TokenId> {
        (1..=quantile::N_QUANTILES as u8)
            .map(|q| self.vocab.expect_id(&names::quantile(q)).expect("fixed token"))
            .collect()
    }

    /// Tokens of the static header for a patient at a given age and
    /// calendar offset.
    pub fn header_tokens(
        &self,
        statics: &crate::ingest::StaticInfo,
        age: f64,
        year_offset: f64,
    ) -> Result<[TokenId; 6], TokenizerError> {
        pht::header_ids(statics, age, year_offset, &self.binner, &self.vocab, self.config.n_age_buckets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_names() {
        assert_eq!(categorical("Medicare"), "MEDICARE");
        assert_eq!(categorical(" EW EMER. "), "EW_EMER");
        assert_eq!(categorical("Med/Surg"), "MED_SURG");
        assert_eq!(categorical(""), "");
    }

    #[test]
    fn blood_pressure_is_three_pieces() {
        let p = event_pieces(&EventKind::BloodPressure { systolic: 120.0, diastolic: 80.0 }).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[0], Piece::Fixed(names::BLOOD_PRESSURE));
    }

    #[test]
    fn fixed_tokens_are_unique() {
        let t = fixed_tokens(&TimeIntervalScheme::standard(), 20);
        let set: BTreeSet<_> = t.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(set.len(), t.len());
        assert_eq!(t[0].0, names::END_OF_TIMELINE);
    }
}
