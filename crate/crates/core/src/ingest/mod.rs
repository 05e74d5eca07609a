//! Reading MIMIC-shaped CSV tables into per-patient event streams.
//!
//! Every timestamp is the patient's age in fractional years. Calendar time
//! survives only as the start-year offset in [`StaticInfo`].

pub mod codes;
pub mod labs;
pub mod load;
pub mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::statics::{Marital, Race, Sex};

pub use codes::{validate_code, CodeSystem};
pub use labs::{retain_labs, select_top_labs, TopLabs};
pub use load::load_tables;

pub type PatientId = u64;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("required table {0} is missing")]
    MissingTable(String),
    #[error("table {table} is missing column {column}")]
    MissingColumn { table: String, column: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {table}: {source}")]
    Csv {
        table: String,
        #[source]
        source: csv::Error,
    },
    #[error("invalid code {code:?} for {system:?}")]
    InvalidCode { code: String, system: CodeSystem },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticInfo {
    pub sex: Sex,
    pub race: Race,
    pub marital: Marital,
    pub bmi: Option<f64>,
    /// Age at the first event of the timeline.
    pub age_at_start: f64,
    /// Years since 1970-01-01 at the first event.
    pub start_year_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    EdAdmit,
    EdDischarge { los_days: f64 },
    InpatientAdmit { admission_type: String, insurance: String },
    InpatientDischarge { los_days: f64, destination: String },
    IcuAdmit { icu_type: String },
    IcuDischarge { los_days: f64 },
    Transfer { careunit: String },
    Lab { category: String, value: f64 },
    BloodPressure { systolic: f64, diastolic: f64 },
    MedAdministered { atc: String },
    MedPrescribed { atc: String },
    Diagnosis { icd: String },
    Procedure { pcs: String },
    Sofa { score: u8 },
    Drg { code: Option<String> },
    Death,
    OmrMeasure { name: String, value: f64 },
}

impl EventKind {
    pub const NAMES: [&'static str; 17] = [
        "ed_admit",
        "ed_discharge",
        "inpatient_admit",
        "inpatient_discharge",
        "icu_admit",
        "icu_discharge",
        "transfer",
        "lab",
        "blood_pressure",
        "med_administered",
        "med_prescribed",
        "diagnosis",
        "procedure",
        "sofa",
        "drg",
        "death",
        "omr_measure",
    ];

    pub fn name(&self) -> &'static str {
        Self::NAMES[self.ordinal()]
    }

    fn ordinal(&self) -> usize {
        match self {
            EventKind::EdAdmit => 0,
            EventKind::EdDischarge { .. } => 1,
            EventKind::InpatientAdmit { .. } => 2,
            EventKind::InpatientDischarge { .. } => 3,
            EventKind::IcuAdmit { .. } => 4,
            EventKind::IcuDischarge { .. } => 5,
            EventKind::Transfer { .. } => 6,
            EventKind::Lab { .. } => 7,
            EventKind::BloodPressure { .. } => 8,
            EventKind::MedAdministered { .. } => 9,
            EventKind::MedPrescribed { .. } => 10,
            EventKind::Diagnosis { .. } => 11,
            EventKind::Procedure { .. } => 12,
            EventKind::Sofa { .. } => 13,
            EventKind::Drg { .. } => 14,
            EventKind::Death => 15,
            EventKind::OmrMeasure { .. } => 16,
        }
    }

    /// Tie-break rank for events sharing a timestamp: openings first, then
    /// contents, then closings, then death.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::EdAdmit => 0,
            EventKind::InpatientAdmit { .. } => 1,
            EventKind::IcuAdmit { .. } => 2,
            EventKind::Sofa { .. } => 3,
            EventKind::Transfer { .. } => 4,
            EventKind::Lab { .. } => 5,
            EventKind::BloodPressure { .. } => 6,
            EventKind::OmrMeasure { .. } => 7,
            EventKind::MedPrescribed { .. } => 8,
            EventKind::MedAdministered { .. } => 9,
            EventKind::Diagnosis { .. } => 10,
            EventKind::Procedure { .. } => 11,
            EventKind::IcuDischarge { .. } => 12,
            EventKind::EdDischarge { .. } => 13,
            EventKind::InpatientDischarge { .. } => 14,
            EventKind::Drg { .. } => 15,
            EventKind::Death => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub patient_id: PatientId,
    /// Age in fractional years.
    pub timestamp: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: PatientId,
    pub statics: StaticInfo,
    pub events: Vec<RawEvent>,
}

/// Per-table row accounting: `rows_used + Σ dropped = rows_total`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub present: bool,
    pub rows_total: usize,
    pub rows_used: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl TableReport {
    pub fn drop_row(&mut self, reason: &str) {
        *self.dropped.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn rows_dropped(&self) -> usize {
        self.dropped.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub tables: BTreeMap<String, TableReport>,
    /// Patients present in patients.csv but without any usable event.
    pub patients_without_events: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub patients: BTreeMap<PatientId, PatientRecord>,
    pub report: IngestReport,
}

impl Cohort {
    pub fn event_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            EventKind::NAMES.iter().map(|n| (n.to_string(), 0)).collect();
        for record in self.patients.values() {
            for e in &record.events {
                *counts.get_mut(e.kind.name()).expect("known kind") += 1;
            }
        }
        counts
    }

    pub fn records(&self) -> impl Iterator<Item = &PatientRecord> {
        self.patients.values()
    }
}
