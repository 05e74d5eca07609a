//! A small generative world of hospital admissions with known parameters.
//!
//! One informative lab drawn at each emergency visit sets the admission's
//! mortality risk; everything else (codes, routine labs, gaps) is noise with
//! fixed distributions. Because the world is fully specified, every
//! next-token probability and every task target has an exact value, which
//! [`oracle::MarkovOracle`] and [`analytic`] expose.

pub mod analytic;
pub mod generate;
pub mod oracle;
pub mod world;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analytic::{analytic_task_probability, bayes_auc, AnalyticTask};
pub use generate::{gen_cohort, GenerationManifest};
pub use oracle::{MarkovOracle, OracleError, OracleState};
pub use world::World;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosDistribution {
    /// Mean ICU length of stay in days.
    pub mean_days: f64,
    /// Probability that an ICU step takes the long (1-3 day) gap rather than
    /// the short (6-12 hour) one.
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Mean number of admissions per patient, ignoring deaths.
    pub admission_rate: f64,
    /// Mortality of an admission with an average informative lab.
    pub base_mortality: f64,
    /// Log-odds shift of mortality per step of the informative lab level.
    pub lab_effect: f64,
    pub readmit_30d_prob: f64,
    pub los_distribution: LosDistribution,
    /// Primary diagnosis stem → DRG class.
    pub drg_rule: BTreeMap<String, String>,
    pub seed: u64,
    /// Per ward step probability that the admission ends (death or discharge).
    pub ward_termination_prob: f64,
    /// Per ward step probability of an ICU stay.
    pub icu_prob: f64,
    pub n_routine_labs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let drg_rule = [
            ("A41", "871"),
            ("I21", "280"),
            ("I50", "291"),
            ("J18", "193"),
            ("K59", "392"),
            ("N17", "683"),
            ("R41", "948"),
            ("S72", "481"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        SynthConfig {
            n_patients: 2000,
            admission_rate: 2.0,
            base_mortality: 0.2,
            lab_effect: 0.8,
            readmit_30d_prob: 0.3,
            los_distribution: LosDistribution { mean_days: 3.0, dispersion: 0.2 },
            drg_rule,
            seed: 7,
            ward_termination_prob: 0.3,
            icu_prob: 0.1,
            n_routine_labs: 12,
        }
    }
}

/// Number of informative lab levels; levels are 1..=LAB_LEVELS, uniform.
pub const LAB_LEVELS: u8 = 10;
pub const MEAN_LAB_LEVEL: f64 = 5.5;

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        for (name, p) in [
            ("base_mortality", self.base_mortality),
            ("readmit_30d_prob", self.readmit_30d_prob),
            ("ward_termination_prob", self.ward_termination_prob),
            ("icu_prob", self.icu_prob),
            ("los_distribution.dispersion", self.los_distribution.dispersion),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.base_mortality > 0.0 && self.base_mortality < 1.0) {
            return bad("base_mortality must lie strictly between 0 and 1".into());
        }
        if !self.lab_effect.is_finite() {
            return bad("lab_effect must be finite".into());
        }
        if !(self.admission_rate >= 1.0) {
            return bad("admission_rate must be at least 1".into());
        }
        if self.ward_termination_prob <= 0.0 {
            return bad("ward_termination_prob must be positive".into());
        }
        if self.icu_prob > self.ward_termination_prob {
            return bad("icu_prob may not exceed ward_termination_prob".into());
        }
        if self.icu_prob + self.ward_termination_prob > 1.0 {
            return bad("icu_prob + ward_termination_prob exceeds 1".into());
        }
        let step = world::icu_mean_step_days(self.los_distribution.dispersion);
        if !(self.los_distribution.mean_days >= step) {
            return bad(format!(
                "los_distribution.mean_days must be at least the mean ICU step ({step:.4} days)"
            ));
        }
        if self.drg_rule.is_empty() {
            return bad("drg_rule is empty".into());
        }
        for (stem, class) in &self.drg_rule {
            let ok = stem.len() == 3
                && stem.chars().next().is_some_and(|c| c.is_ascii_uppercase())
                && stem.chars().all(|c| c.is_ascii_alphanumeric());
            if !ok {
                return bad(format!("drg_rule stem {stem:?} is not a 3-character ICD-10-CM stem"));
            }
            if class.is_empty() || !class.chars().all(|c| c.is_ascii_digit()) || class.starts_with('0') {
                return bad(format!("drg_rule class {class:?} must be a number"));
            }
        }
        if self.n_routine_labs == 0 || self.n_routine_labs > world::ROUTINE_LABS.len() {
            return bad(format!("n_routine_labs must be in 1..={}", world::ROUTINE_LABS.len()));
        }
        Ok(())
    }

    /// Mortality of an admission whose informative lab sits at `level`.
    pub fn mortality(&self, level: u8) -> f64 {
        logistic(logit(self.base_mortality) + self.lab_effect * (level as f64 - MEAN_LAB_LEVEL))
    }

    /// Per-exit hazard of an ICU step so that the stay has the configured
    /// mean length.
    pub fn icu_exit_prob(&self) -> f64 {
        world::icu_mean_step_days(self.los_distribution.dispersion) / self.los_distribution.mean_days
    }

    /// Death probability when a ward step terminates, chosen so that the
    /// overall in-admission mortality equals `mortality(level)` once ICU
    /// deaths are accounted for.
    pub fn ward_death_prob(&self, level: u8) -> f64 {
        let m = self.mortality(level);
        (m - self.icu_prob / self.ward_termination_prob * m * (1.0 - m)).clamp(0.0, 1.0)
    }

    /// Probability of a later (beyond 30 days) admission given no 30-day
    /// readmission, tuned to the configured admission rate.
    pub fn later_admission_prob(&self) -> f64 {
        let r = self.readmit_30d_prob;
        if r >= 1.0 {
            return 0.0;
        }
        ((1.0 - 1.0 / self.admission_rate - r) / (1.0 - r)).clamp(0.0, 1.0)
    }
}
