//! Fixed distributions of the synthetic world. The generator samples from
//! these tables and the oracle reads the same tables back as probabilities.

use rand::Rng;

/// Gap after the emergency registration, before the informative lab.
pub const ED_FIRST_GAPS: &[(&str, f64)] = &[("_15m-1h", 0.5), ("_1h-2h", 0.5)];
/// Gap from the informative lab to the inpatient admission.
pub const ED_SECOND_GAPS: &[(&str, f64)] = &[("_1h-2h", 0.5), ("_2h-6h", 0.5)];
/// Gap from the inpatient admission to the end of the emergency visit.
pub const ED_CLOSE_GAP: &str = "_5m-15m";
pub const WARD_GAPS: &[(&str, f64)] = &[
    ("_15m-1h", 0.2),
    ("_1h-2h", 0.2),
    ("_2h-6h", 0.3),
    ("_6h-12h", 0.2),
    ("_12h-1d", 0.1),
];
pub const ICU_SHORT_GAP: &str = "_6h-12h";
pub const ICU_LONG_GAP: &str = "_1d-3d";
const ICU_SHORT_DAYS: f64 = 0.375;
const ICU_LONG_DAYS: f64 = 2.0;
/// All of these stay under 30 days.
pub const READMIT_GAPS: &[(&str, f64)] =
    &[("_1d-3d", 0.25), ("_3d-1w", 0.25), ("_1w-2w", 0.25), ("_2w-1mt", 0.25)];
/// All of these exceed 30 days.
pub const LATER_GAPS: &[(&str, f64)] = &[("_1mt-3mt", 1.0 / 3.0), ("_3mt-6mt", 1.0 / 3.0), ("_=6mt", 1.0 / 3.0)];
pub const SIX_MONTH_TOKEN: &str = "_=6mt";
/// Probability that a run of six-month tokens grows by one more.
pub const SIX_MONTH_REPEAT: f64 = 0.5;

pub const ADMISSION_TYPES: &[(&str, f64)] = &[("EW EMER.", 0.6), ("URGENT", 0.25), ("OBSERVATION ADMIT", 0.15)];
pub const INSURANCES: &[(&str, f64)] = &[("Medicare", 0.5), ("Medicaid", 0.2), ("Other", 0.3)];
pub const DESTINATIONS: &[(&str, f64)] =
    &[("HOME", 0.55), ("HOME HEALTH CARE", 0.25), ("SKILLED NURSING FACILITY", 0.2)];
pub const ICU_TYPES: &[(&str, f64)] = &[
    ("Medical Intensive Care Unit (MICU)", 0.4),
    ("Surgical Intensive Care Unit (SICU)", 0.3),
    ("Coronary Care Unit (CCU)", 0.3),
];
pub const TRANSFER_UNITS: &[(&str, f64)] =
    &[("Med/Surg", 0.4), ("Medicine", 0.3), ("Cardiology", 0.2), ("Neurology", 0.1)];

pub const SEXES: &[(&str, f64)] = &[("F", 0.5), ("M", 0.5)];
pub const RACES: &[(&str, f64)] = &[
    ("WHITE", 0.6),
    ("BLACK/AFRICAN AMERICAN", 0.15),
    ("HISPANIC/LATINO - PUERTO RICAN", 0.08),
    ("ASIAN - CHINESE", 0.05),
    ("OTHER", 0.05),
    ("UNKNOWN", 0.07),
];
pub const MARITAL: &[(&str, f64)] =
    &[("MARRIED", 0.45), ("SINGLE", 0.3), ("WIDOWED", 0.12), ("DIVORCED", 0.08), ("", 0.05)];

/// The lab whose level drives mortality; value = 0.5 · level.
pub const INFORMATIVE_LAB: (&str, &str) = ("Lactate", "mmol/L");

pub fn informative_value(level: u8) -> f64 {
    0.5 * level as f64
}

/// Routine lab: value = base + step · k with k ~ Binomial(trials, 0.5).
#[derive(Debug, Clone, Copy)]
pub struct RoutineLab {
    pub label: &'static str,
    pub uom: &'static str,
    pub base: f64,
    pub step: f64,
    pub trials: u64,
}

impl RoutineLab {
    pub fn value(&self, k: u64) -> f64 {
        self.base + self.step * k as f64
    }

    /// Category as the loader builds it from label and unit.
    pub fn category(&self) -> String {
        if self.uom.is_empty() {
            self.label.to_string()
        } else {
            format!("{}_{}", self.label, self.uom)
        }
    }
}

const fn lab(label: &'static str, uom: &'static str, base: f64, step: f64, trials: u64) -> RoutineLab {
    RoutineLab { label, uom, base, step, trials }
}

pub const ROUTINE_LABS: &[RoutineLab] = &[
    lab("Sodium", "mEq/L", 130.0, 1.0, 12),
    lab("Potassium", "mEq/L", 3.0, 0.1, 20),
    lab("Chloride", "mEq/L", 95.0, 1.0, 12),
    lab("Bicarbonate", "mEq/L", 18.0, 1.0, 10),
    lab("Creatinine", "mg/dL", 0.5, 0.1, 15),
    lab("Urea Nitrogen", "mg/dL", 8.0, 2.0, 12),
    lab("Glucose", "mg/dL", 80.0, 5.0, 16),
    lab("Hemoglobin", "g/dL", 9.0, 0.5, 12),
    lab("Hematocrit", "%", 28.0, 1.0, 16),
    lab("Platelet Count", "K/uL", 120.0, 20.0, 12),
    lab("White Blood Cells", "K/uL", 4.0, 0.5, 16),
    lab("Magnesium", "mg/dL", 1.5, 0.1, 10),
    lab("Phosphate", "mg/dL", 2.5, 0.2, 10),
    lab("Calcium, Total", "mg/dL", 8.0, 0.2, 10),
    lab("Anion Gap", "mEq/L", 8.0, 1.0, 10),
    lab("Albumin", "g/dL", 2.5, 0.1, 15),
    lab("INR(PT)", "", 0.9, 0.1, 8),
    lab("PTT", "sec", 25.0, 2.0, 10),
    lab("Bilirubin, Total", "mg/dL", 0.2, 0.1, 12),
    lab("Alanine Aminotransferase (ALT)", "IU/L", 10.0, 5.0, 12),
];

/// Relative frequency of routine lab `i` (Zipf with exponent 1).
pub fn routine_lab_weight(i: usize) -> f64 {
    1.0 / (i + 1) as f64
}

/// Kind of a routine (non-terminal) event inside an admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routine {
    Lab,
    Medication,
    BloodPressure,
    Transfer,
    Procedure,
}

pub const ROUTINE_MIX: &[(Routine, f64)] = &[
    (Routine::Lab, 0.4),
    (Routine::Medication, 0.25),
    (Routine::BloodPressure, 0.15),
    (Routine::Transfer, 0.1),
    (Routine::Procedure, 0.1),
];

pub const MEDICATIONS: &[(&str, f64)] = &[
    ("A06AD04", 0.2),
    ("B01AB01", 0.2),
    ("N02BE01", 0.2),
    ("J01CR05", 0.15),
    ("C03CA01", 0.15),
    ("A02BC02", 0.1),
];
/// Fraction of medications recorded as administrations (the rest as
/// prescriptions).
pub const ADMINISTERED_SHARE: f64 = 0.5;
/// Chance of an extra not-given medication row, which produces no event.
pub const NOT_GIVEN_ROW: f64 = 0.05;

pub const PROCEDURES: &[(&str, f64)] = &[
    ("0016070", 0.2),
    ("02HV33Z", 0.2),
    ("0BH17EZ", 0.2),
    ("5A1955Z", 0.2),
    ("3E0G76Z", 0.2),
];

pub const SECONDARY_DIAGNOSES: &[(&str, f64)] = &[
    ("E119", 1.0 / 6.0),
    ("I10", 1.0 / 6.0),
    ("E785", 1.0 / 6.0),
    ("Z8673", 1.0 / 6.0),
    ("M545", 1.0 / 6.0),
    ("R531", 1.0 / 6.0),
];
/// Probability of one more secondary diagnosis after each coded diagnosis.
pub const SECONDARY_CONTINUE: f64 = 0.5;

const PRIMARY_CODES: &[(&str, &str)] = &[
    ("A41", "A419"),
    ("I21", "I214"),
    ("I50", "I5023"),
    ("J18", "J189"),
    ("K59", "K5900"),
    ("N17", "N179"),
    ("R41", "R4182"),
    ("S72", "S72001A"),
];

/// Full code recorded for a primary diagnosis stem.
pub fn primary_code(stem: &str) -> String {
    PRIMARY_CODES
        .iter()
        .find(|(s, _)| *s == stem)
        .map_or_else(|| format!("{stem}9"), |(_, c)| c.to_string())
}

/// Blood pressure: base + step · Binomial(trials, 0.5) per component.
pub const SYSTOLIC: (f64, f64, u64) = (100.0, 5.0, 8);
pub const DIASTOLIC: (f64, f64, u64) = (60.0, 5.0, 6);

pub const BMI_BASE: f64 = 18.0;
pub const BMI_STEP: f64 = 0.5;
pub const BMI_TRIALS: u64 = 30;

pub const SOFA_TRIALS: u64 = 23;

/// Success probability of the SOFA binomial at informative level `level`.
pub fn sofa_p(level: u8) -> f64 {
    0.05 + 0.04 * (level as f64 - 1.0)
}

/// Mean days of one ICU step for a given long-gap probability.
pub fn icu_mean_step_days(dispersion: f64) -> f64 {
    (1.0 - dispersion) * ICU_SHORT_DAYS + dispersion * ICU_LONG_DAYS
}

pub const MAX_ADMISSIONS: usize = 50;

/// Draws an item from a table of (item, probability) pairs.
pub fn pick<T: Copy, R: Rng>(rng: &mut R, table: &[(T, f64)]) -> T {
    let total: f64 = table.iter().map(|(_, p)| p).sum();
    let mut u = rng.gen::<f64>() * total;
    for (item, p) in table {
        if u < *p {
            return *item;
        }
        u -= p;
    }
    table.last().expect("non-empty table").0
}

/// Binomial draw as a sum of Bernoulli trials.
pub fn binomial<R: Rng>(rng: &mut R, trials: u64, p: f64) -> u64 {
    (0..trials).filter(|_| rng.gen::<f64>() < p).count() as u64
}

/// Parameters derived from the config in one place.
#[derive(Debug, Clone)]
pub struct World {
    pub config: super::SynthConfig,
    pub icu_exit: f64,
    pub later_admission: f64,
    /// `(category, weight)` for the routine labs in use.
    pub routine_labs: Vec<(RoutineLab, f64)>,
    /// `(stem, full code, DRG class)` for each primary diagnosis.
    pub primaries: Vec<(String, String, String)>,
}

impl World {
    pub fn new(config: &super::SynthConfig) -> Result<World, super::SynthError> {
        config.validate()?;
        let n = config.n_routine_labs;
        let total: f64 = (0..n).map(routine_lab_weight).sum();
        Ok(World {
            config: config.clone(),
            icu_exit: config.icu_exit_prob(),
            later_admission: config.later_admission_prob(),
            routine_labs: (0..n).map(|i| (ROUTINE_LABS[i], routine_lab_weight(i) / total)).collect(),
            primaries: config
                .drg_rule
                .iter()
                .map(|(stem, class)| (stem.clone(), primary_code(stem), class.clone()))
                .collect(),
        })
    }

    pub fn icu_gaps(&self) -> [(&'static str, f64); 2] {
        let d = self.config.los_distribution.dispersion;
        [(ICU_SHORT_GAP, 1.0 - d), (ICU_LONG_GAP, d)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_are_distributions() {
        for t in [
            ED_FIRST_GAPS,
            ED_SECOND_GAPS,
            WARD_GAPS,
            READMIT_GAPS,
            LATER_GAPS,
            ADMISSION_TYPES,
            INSURANCES,
            DESTINATIONS,
            ICU_TYPES,
            TRANSFER_UNITS,
            SEXES,
            RACES,
            MARITAL,
            MEDICATIONS,
            PROCEDURES,
            SECONDARY_DIAGNOSES,
        ] {
            let s: f64 = t.iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let s: f64 = ROUTINE_MIX.iter().map(|(_, p)| p).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn icu_step_means() {
        assert!((icu_mean_step_days(0.2) - 0.7).abs() < 1e-12);
        assert_eq!(primary_code("R41"), "R4182");
        assert_eq!(primary_code("Z99"), "Z999");
    }
}
