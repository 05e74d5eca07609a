//! Column layout of every input table. The synthetic generator writes these
//! headers verbatim, so both sides agree by construction.

pub struct TableSchema {
    pub name: &'static str,
    pub file: &'static str,
    pub columns: &'static [&'static str],
    pub required: bool,
}

pub const PATIENTS: TableSchema = TableSchema {
    name: "patients",
    file: "patients.csv",
    columns: &["subject_id", "gender", "anchor_age", "anchor_year", "dod"],
    required: true,
};

pub const ADMISSIONS: TableSchema = TableSchema {
    name: "admissions",
    file: "admissions.csv",
    columns: &[
        "subject_id",
        "hadm_id",
        "admittime",
        "dischtime",
        "deathtime",
        "admission_type",
        "insurance",
        "marital_status",
        "race",
        "discharge_location",
        "edregtime",
        "edouttime",
        "hospital_expire_flag",
    ],
    required: true,
};

pub const ICUSTAYS: TableSchema = TableSchema {
    name: "icustays",
    file: "icustays.csv",
    columns: &["subject_id", "hadm_id", "stay_id", "first_careunit", "intime", "outtime"],
    required: false,
};

pub const LABEVENTS: TableSchema = TableSchema {
    name: "labevents",
    file: "labevents.csv",
    columns: &["subject_id", "hadm_id", "itemid", "label", "charttime", "valuenum", "valueuom"],
    required: false,
};

pub const PRESCRIPTIONS: TableSchema = TableSchema {
    name: "prescriptions",
    file: "prescriptions.csv",
    columns: &["subject_id", "hadm_id", "starttime", "atc_code"],
    required: false,
};

pub const EMAR: TableSchema = TableSchema {
    name: "emar",
    file: "emar.csv",
    columns: &["subject_id", "hadm_id", "charttime", "atc_code", "event_txt"],
    required: false,
};

pub const DIAGNOSES: TableSchema = TableSchema {
    name: "diagnoses",
    file: "diagnoses.csv",
    columns: &["subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"],
    required: false,
};

pub const PROCEDURES: TableSchema = TableSchema {
    name: "procedures",
    file: "procedures.csv",
    columns: &["subject_id", "hadm_id", "seq_num", "chartdate", "icd_code", "icd_version"],
    required: false,
};

pub const OMR: TableSchema = TableSchema {
    name: "omr",
    file: "omr.csv",
    columns: &["subject_id", "chartdate", "result_name", "result_value"],
    required: false,
};

pub const TRANSFERS: TableSchema = TableSchema {
    name: "transfers",
    file: "transfers.csv",
    columns: &["subject_id", "hadm_id", "transfer_id", "eventtype", "careunit", "intime", "outtime"],
    required: false,
};

pub const DRGCODES: TableSchema = TableSchema {
    name: "drgcodes",
    file: "drgcodes.csv",
    columns: &["subject_id", "hadm_id", "drg_type", "drg_code", "description"],
    required: false,
};

pub const SOFA: TableSchema = TableSchema {
    name: "sofa",
    file: "sofa.csv",
    columns: &["subject_id", "stay_id", "sofa"],
    required: false,
};

pub const ALL_TABLES: [&TableSchema; 12] = [
    &PATIENTS,
    &ADMISSIONS,
    &ICUSTAYS,
    &LABEVENTS,
    &PRESCRIPTIONS,
    &EMAR,
    &DIAGNOSES,
    &PROCEDURES,
    &OMR,
    &TRANSFERS,
    &DRGCODES,
    &SOFA,
];

pub const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// `result_name` prefixes in the omr table with special handling.
pub const OMR_BLOOD_PRESSURE: &str = "Blood Pressure";
pub const OMR_BMI: &str = "BMI";
/// emar rows with this `event_txt` become administrations; others are skipped.
pub const EMAR_ADMINISTERED: &str = "Administered";
pub const TRANSFER_EVENTTYPE: &str = "transfer";
/// Preferred DRG grouping in drgcodes.
pub const DRG_TYPE: &str = "HCFA";
