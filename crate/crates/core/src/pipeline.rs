//! Cohort → tokenizer → corpora, shared by the command line and tests.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ingest::{Cohort, PatientId};
use crate::split::{mix64, Split};
use crate::tokenizer::{
    build_corpus, load_timestamped, names, save_timestamps, Corpus, PatientTimeline, PhtStats, Tokenizer,
    TokenizerConfig, TokenizerError,
};

pub const PHT_STATS_FILE: &str = "pht_stats.json";

const VALIDATION_SALT: u64 = 0x7a1_1d47e;
/// Percentage of training patients held back for validation loss.
pub const VALIDATION_PERCENT: u64 = 5;

pub fn is_validation(patient_id: PatientId) -> bool {
    mix64(patient_id ^ VALIDATION_SALT) % 100 < VALIDATION_PERCENT
}

/// Tokenizer fitted on the training split plus every patient's timeline.
pub struct Prepared {
    pub tokenizer: Tokenizer,
    pub timelines: BTreeMap<PatientId, PatientTimeline>,
    pub stats: PhtStats,
}

impl Prepared {
    pub fn build(cohort: &Cohort, config: TokenizerConfig) -> Result<Prepared, TokenizerError> {
        let train = cohort.patients.values().filter(|r| Split::Train.contains(r.patient_id));
        let tokenizer = Tokenizer::fit(train, config)?;
        let mut timelines = BTreeMap::new();
        let mut stats = PhtStats::default();
        for record in cohort.records() {
            let (pht, s) = tokenizer.build_pht(record)?;
            stats.merge(&s);
            timelines.insert(record.patient_id, pht);
        }
        Ok(Prepared { tokenizer, timelines, stats })
    }

    /// Writes tokenizer files, the full corpus, body timestamps and stats.
    pub fn save(&self, dir: &Path) -> Result<(), TokenizerError> {
        self.tokenizer.save(dir)?;
        let phts: Vec<PatientTimeline> = self.timelines.values().cloned().collect();
        let eot = self.tokenizer.id(names::END_OF_TIMELINE)?;
        build_corpus(&phts, eot).save(dir)?;
        save_timestamps(dir, &phts)?;
        std::fs::write(dir.join(PHT_STATS_FILE), serde_json::to_string_pretty(&self.stats)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Prepared, TokenizerError> {
        let tokenizer = Tokenizer::load(dir)?;
        let corpus = Corpus::load(dir)?;
        if let Some(bad) = corpus.tokens.iter().find(|&&t| t as usize >= tokenizer.vocab.len()) {
            return Err(TokenizerError::Format(format!("corpus token {bad} outside the vocabulary")));
        }
        let timelines = load_timestamped(dir, &corpus)?.into_iter().map(|p| (p.patient_id, p)).collect();
        let stats = serde_json::from_str(&std::fs::read_to_string(dir.join(PHT_STATS_FILE))?)?;
        Ok(Prepared { tokenizer, timelines, stats })
    }

    pub fn split_timelines(&self, split: Split) -> impl Iterator<Item = &PatientTimeline> {
        self.timelines.values().filter(move |p| split.contains(p.patient_id))
    }

    fn corpus_where(&self, keep: impl Fn(PatientId) -> bool) -> Corpus {
        let eot = self.tokenizer.id(names::END_OF_TIMELINE).expect("fixed token");
        let phts: Vec<PatientTimeline> =
            self.timelines.values().filter(|p| keep(p.patient_id)).map(|p| p.clone().strip()).collect();
        build_corpus(&phts, eot)
    }

    /// Training patients outside the validation slice.
    pub fn train_corpus(&self) -> Corpus {
        self.corpus_where(|id| Split::Train.contains(id) && !is_validation(id))
    }

    pub fn validation_corpus(&self) -> Corpus {
        self.corpus_where(|id| Split::Train.contains(id) && is_validation(id))
    }

    pub fn split_corpus(&self, split: Split) -> Corpus {
        self.corpus_where(|id| split.contains(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::load_tables;
    use crate::synth::{gen_cohort, SynthConfig};

    #[test]
    fn save_load_round_trip() {
        let raw = tempfile::tempdir().unwrap();
        gen_cohort(&SynthConfig { n_patients: 60, ..Default::default() }, raw.path()).unwrap();
        let prep = Prepared::build(&load_tables(raw.path()).unwrap(), TokenizerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        prep.save(dir.path()).unwrap();
        let back = Prepared::load(dir.path()).unwrap();
        assert_eq!(back.tokenizer, prep.tokenizer);
        assert_eq!(back.timelines, prep.timelines);
        assert_eq!(back.stats, prep.stats);
        assert_eq!(back.train_corpus(), prep.train_corpus());
        let full = Corpus::load(dir.path()).unwrap();
        assert_eq!(full.select(|id| Split::Test.contains(id)), prep.split_corpus(Split::Test));
    }
}
