//! Writes a synthetic cohort as MIMIC-shaped CSV tables plus ground-truth
//! label files and a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::{self, Routine, World};
use super::{SynthConfig, SynthError, LAB_LEVELS};
use crate::ingest::schema::{self, TableSchema, DATETIME_FORMAT, DATE_FORMAT};
use crate::split::derive_seed;
use crate::tokenizer::TimeIntervalScheme;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_MORTALITY: &str = "labels_mortality.csv";
pub const LABELS_ICU_MORTALITY: &str = "labels_icu_mortality.csv";
pub const LABELS_READMISSION: &str = "labels_readmission.csv";
pub const LABELS_ICU_LOS: &str = "labels_icu_los.csv";
pub const LABELS_SOFA: &str = "labels_sofa.csv";
pub const LABELS_DRG: &str = "labels_drg.csv";

pub const FIRST_SUBJECT_ID: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub config: SynthConfig,
    pub n_patients: usize,
    pub n_admissions: usize,
    pub n_icu_stays: usize,
    pub n_deaths: usize,
    /// Events the loader should produce, keyed by event kind name.
    pub event_counts: BTreeMap<String, usize>,
    pub tables: Vec<String>,
    pub labels: Vec<String>,
}

impl GenerationManifest {
    pub fn load(dir: &Path) -> Result<GenerationManifest, SynthError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalityLabel {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub admission_index: usize,
    pub lab_level: u8,
    pub true_probability: f64,
    pub outcome: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcuLabel {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub stay_id: u64,
    pub icu_index: usize,
    pub lab_level: u8,
    pub true_probability: f64,
    pub outcome: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcuLosLabel {
    pub subject_id: u64,
    pub stay_id: u64,
    pub icu_index: usize,
    pub expected_days: f64,
    pub los_days: f64,
    pub died: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SofaLabel {
    pub subject_id: u64,
    pub stay_id: u64,
    pub icu_index: usize,
    pub lab_level: u8,
    pub sofa: u8,
    pub expected_sofa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrgLabel {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub admission_index: usize,
    pub primary_code: String,
    pub drg: String,
}

/// Reads one of the label files.
pub fn read_labels<T: serde::de::DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, SynthError> {
    let mut r = csv::Reader::from_path(dir.join(file))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(SynthError::from)
}

struct Tables {
    writers: Vec<csv::Writer<File>>,
}

impl Tables {
    fn create(dir: &Path) -> Result<Tables, SynthError> {
        let mut writers = Vec::new();
        for t in schema::ALL_TABLES {
            let mut w = csv::Writer::from_path(dir.join(t.file))?;
            w.write_record(t.columns)?;
            writers.push(w);
        }
        Ok(Tables { writers })
    }

    fn row(&mut self, table: &TableSchema, fields: &[String]) -> Result<(), SynthError> {
        let i = schema::ALL_TABLES
            .iter()
            .position(|t| t.name == table.name)
            .expect("table in schema list");
        debug_assert_eq!(fields.len(), table.columns.len());
        self.writers[i].write_record(fields)?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SynthError> {
        for w in &mut self.writers {
            w.flush().map_err(|source| SynthError::Io { path: "table".into(), source })?;
        }
        Ok(())
    }
}

struct Labels {
    mortality: csv::Writer<File>,
    icu_mortality: csv::Writer<File>,
    readmission: csv::Writer<File>,
    icu_los: csv::Writer<File>,
    sofa: csv::Writer<File>,
    drg: csv::Writer<File>,
}

fn fmt_time(t: NaiveDateTime) -> String {
    t.format(DATETIME_FORMAT).to_string()
}

/// Exact seconds represented by an interval token.
fn gap_seconds(scheme: &TimeIntervalScheme, name: &str) -> i64 {
    let b = scheme.bucket(scheme.index_of(name).expect("world uses scheme buckets"));
    let s = b.representative_minutes * 60.0;
    debug_assert_eq!(s.fract(), 0.0);
    s as i64
}

struct PatientSim<'a> {
    world: &'a World,
    scheme: &'a TimeIntervalScheme,
    rng: ChaCha8Rng,
    subject: u64,
    t: NaiveDateTime,
    counts: &'a mut BTreeMap<String, usize>,
    tables: &'a mut Tables,
    hadm: u64,
    proc_seq: usize,
}

impl PatientSim<'_> {
    fn count(&mut self, kind: &str) {
        *self.counts.entry(kind.to_string()).or_insert(0) += 1;
    }

    fn advance(&mut self, gap: &str) {
        self.t += Duration::seconds(gap_seconds(self.scheme, gap));
    }

    fn s(&self) -> String {
        self.subject.to_string()
    }

    fn routine(&mut self) -> Result<(), SynthError> {
        let now = fmt_time(self.t);
        let hadm = self.hadm.to_string();
        match world::pick(&mut self.rng, world::ROUTINE_MIX) {
            Routine::Lab => {
                let labs: Vec<(usize, f64)> =
                    self.world.routine_labs.iter().enumerate().map(|(i, (_, w))| (i, *w)).collect();
                let lab = self.world.routine_labs[world::pick(&mut self.rng, &labs)].0;
                let k = world::binomial(&mut self.rng, lab.trials, 0.5);
                let itemid = 51000 + world::ROUTINE_LABS.iter().position(|l| l.label == lab.label).unwrap_or(0);
                self.tables.row(
                    &schema::LABEVENTS,
                    &[self.s(), hadm, itemid.to_string(), lab.label.into(), now, lab.value(k).to_string(), lab.uom.into()],
                )?;
                self.count("lab");
            }
            Routine::Medication => {
                let atc = world::pick(&mut self.rng, world::MEDICATIONS);
                if self.rng.gen::<f64>() < world::ADMINISTERED_SHARE {
                    self.tables.row(
                        &schema::EMAR,
                        &[self.s(), hadm.clone(), now.clone(), atc.into(), schema::EMAR_ADMINISTERED.into()],
                    )?;
                    self.count("med_administered");
                } else {
                    self.tables.row(&schema::PRESCRIPTIONS, &[self.s(), hadm.clone(), now.clone(), atc.into()])?;
                    self.count("med_prescribed");
                }
                if self.rng.gen::<f64>() < world::NOT_GIVEN_ROW {
                    self.tables.row(&schema::EMAR, &[self.s(), hadm, now, atc.into(), "Not Given".into()])?;
                }
            }
            Routine::BloodPressure => {
                let (sb, ss, sn) = world::SYSTOLIC;
                let (db, ds, dn) = world::DIASTOLIC;
                let sys = sb + ss * world::binomial(&mut self.rng, sn, 0.5) as f64;
                let dia = db + ds * world::binomial(&mut self.rng, dn, 0.5) as f64;
                self.tables.row(
                    &schema::OMR,
                    &[self.s(), now, schema::OMR_BLOOD_PRESSURE.into(), format!("{sys}/{dia}")],
                )?;
                self.count("blood_pressure");
            }
            Routine::Transfer => {
                let unit = world::pick(&mut self.rng, world::TRANSFER_UNITS);
                let id = self.hadm * 1000 + self.proc_seq as u64 + 500;
                self.proc_seq += 1;
                self.tables.row(
                    &schema::TRANSFERS,
                    &[self.s(), hadm, id.to_string(), schema::TRANSFER_EVENTTYPE.into(), unit.into(), now, String::new()],
                )?;
                self.count("transfer");
            }
            Routine::Procedure => {
                let code = world::pick(&mut self.rng, world::PROCEDURES);
                self.proc_seq += 1;
                self.tables.row(
                    &schema::PROCEDURES,
                    &[self.s(), hadm, self.proc_seq.to_string(), now, code.into(), "10".into()],
                )?;
                self.count("procedure");
            }
        }
        Ok(())
    }
}

/// Generates the cohort into `out_dir` (created if needed).
pub fn gen_cohort(config: &SynthConfig, out_dir: &Path) -> Result<GenerationManifest, SynthError> {
    let world = World::new(config)?;
    let io = |source| SynthError::Io { path: out_dir.display().to_string(), source };
    fs::create_dir_all(out_dir).map_err(io)?;
    let scheme = TimeIntervalScheme::standard();
    let mut tables = Tables::create(out_dir)?;
    let w = |f: &str| csv::Writer::from_path(out_dir.join(f));
    let mut labels = Labels {
        mortality: w(LABELS_MORTALITY)?,
        icu_mortality: w(LABELS_ICU_MORTALITY)?,
        readmission: w(LABELS_READMISSION)?,
        icu_los: w(LABELS_ICU_LOS)?,
        sofa: w(LABELS_SOFA)?,
        drg: w(LABELS_DRG)?,
    };
    let mut counts: BTreeMap<String, usize> =
        crate::ingest::EventKind::NAMES.iter().map(|n| (n.to_string(), 0)).collect();
    let (mut n_admissions, mut n_icu, mut n_deaths) = (0, 0, 0);

    for idx in 0..config.n_patients {
        let subject = FIRST_SUBJECT_ID + idx as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[idx as u64]));
        let gender = world::pick(&mut rng, world::SEXES);
        let anchor_age: u32 = rng.gen_range(20..=80);
        let anchor_year: i32 = rng.gen_range(2008..=2016);
        let race = world::pick(&mut rng, world::RACES);
        let marital = world::pick(&mut rng, world::MARITAL);
        let start = NaiveDate::from_ymd_opt(anchor_year, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid date")
            + Duration::seconds(rng.gen_range(0..364 * 86_400));
        let bmi = world::BMI_BASE + world::BMI_STEP * world::binomial(&mut rng, world::BMI_TRIALS, 0.5) as f64;
        tables.row(
            &schema::OMR,
            &[subject.to_string(), start.format(DATE_FORMAT).to_string(), "BMI (kg/m2)".into(), bmi.to_string()],
        )?;

        let mut sim = PatientSim {
            world: &world,
            scheme: &scheme,
            rng,
            subject,
            t: start,
            counts: &mut counts,
            tables: &mut tables,
            hadm: 0,
            proc_seq: 0,
        };
        let mut dod: Option<NaiveDateTime> = None;
        let mut icu_index = 0usize;

        for k in 0..world::MAX_ADMISSIONS {
            n_admissions += 1;
            let hadm = 20_000_000 + idx as u64 * 100 + k as u64;
            sim.hadm = hadm;
            sim.proc_seq = 0;
            let level: u8 = sim.rng.gen_range(1..=LAB_LEVELS);

            let ed_reg = sim.t;
            sim.count("ed_admit");
            let g = world::pick(&mut sim.rng, world::ED_FIRST_GAPS);
            sim.advance(g);
            let (label, uom) = world::INFORMATIVE_LAB;
            sim.tables.row(
                &schema::LABEVENTS,
                &[
                    sim.s(),
                    hadm.to_string(),
                    "50813".into(),
                    label.into(),
                    fmt_time(sim.t),
                    world::informative_value(level).to_string(),
                    uom.into(),
                ],
            )?;
            sim.count("lab");
            let g = world::pick(&mut sim.rng, world::ED_SECOND_GAPS);
            sim.advance(g);
            let admit = sim.t;
            sim.count("inpatient_admit");
            let admission_type = world::pick(&mut sim.rng, world::ADMISSION_TYPES);
            let insurance = world::pick(&mut sim.rng, world::INSURANCES);

            let p = sim.rng.gen_range(0..world.primaries.len());
            let (_, primary, drg) = world.primaries[p].clone();
            let mut codes = vec![primary.clone()];
            while sim.rng.gen::<f64>() < world::SECONDARY_CONTINUE {
                codes.push(world::pick(&mut sim.rng, world::SECONDARY_DIAGNOSES).to_string());
            }
            for (seq, code) in codes.iter().enumerate() {
                sim.tables.row(
                    &schema::DIAGNOSES,
                    &[sim.s(), hadm.to_string(), (seq + 1).to_string(), code.clone(), "10".into()],
                )?;
                sim.count("diagnosis");
            }
            sim.advance(world::ED_CLOSE_GAP);
            let ed_out = sim.t;
            sim.count("ed_discharge");

            // ward and ICU steps until the admission ends
            let died = loop {
                let g = world::pick(&mut sim.rng, world::WARD_GAPS);
                sim.advance(g);
                let u = sim.rng.gen::<f64>();
                let term = config.ward_termination_prob;
                if u < term {
                    break sim.rng.gen::<f64>() < config.ward_death_prob(level);
                } else if u < term + config.icu_prob {
                    n_icu += 1;
                    let stay = 30_000_000 + idx as u64 * 1000 + icu_index as u64;
                    let intime = sim.t;
                    let unit = world::pick(&mut sim.rng, world::ICU_TYPES);
                    let sofa = world::binomial(&mut sim.rng, world::SOFA_TRIALS, world::sofa_p(level)) as u8;
                    sim.count("icu_admit");
                    sim.count("sofa");
                    sim.tables.row(&schema::SOFA, &[sim.s(), stay.to_string(), sofa.to_string()])?;
                    let icu_died = loop {
                        let g = world::pick(&mut sim.rng, &world.icu_gaps());
                        sim.advance(g);
                        if sim.rng.gen::<f64>() < world.icu_exit {
                            break sim.rng.gen::<f64>() < config.mortality(level);
                        }
                        sim.routine()?;
                    };
                    let los = (sim.t - intime).num_seconds() as f64 / 86_400.0;
                    sim.tables.row(
                        &schema::ICUSTAYS,
                        &[sim.s(), hadm.to_string(), stay.to_string(), unit.into(), fmt_time(intime), fmt_time(sim.t)],
                    )?;
                    let base = IcuLabel {
                        subject_id: subject,
                        hadm_id: hadm,
                        stay_id: stay,
                        icu_index,
                        lab_level: level,
                        true_probability: config.mortality(level),
                        outcome: icu_died as u8,
                    };
                    labels.icu_mortality.serialize(&base)?;
                    labels.icu_los.serialize(IcuLosLabel {
                        subject_id: subject,
                        stay_id: stay,
                        icu_index,
                        expected_days: config.los_distribution.mean_days,
                        los_days: los,
                        died: icu_died as u8,
                    })?;
                    labels.sofa.serialize(SofaLabel {
                        subject_id: subject,
                        stay_id: stay,
                        icu_index,
                        lab_level: level,
                        sofa,
                        expected_sofa: world::SOFA_TRIALS as f64 * world::sofa_p(level),
                    })?;
                    icu_index += 1;
                    if icu_died {
                        break true;
                    }
                    sim.count("icu_discharge");
                } else {
                    sim.routine()?;
                }
            };

            let end = sim.t;
            let destination = if died { "DIED" } else { world::pick(&mut sim.rng, world::DESTINATIONS) };
            sim.tables.row(
                &schema::ADMISSIONS,
                &[
                    sim.s(),
                    hadm.to_string(),
                    fmt_time(admit),
                    fmt_time(end),
                    if died { fmt_time(end) } else { String::new() },
                    admission_type.into(),
                    insurance.into(),
                    marital.into(),
                    race.into(),
                    destination.into(),
                    fmt_time(ed_reg),
                    fmt_time(ed_out),
                    (died as u8).to_string(),
                ],
            )?;
            labels.mortality.serialize(MortalityLabel {
                subject_id: subject,
                hadm_id: hadm,
                admission_index: k,
                lab_level: level,
                true_probability: config.mortality(level),
                outcome: died as u8,
            })?;
            if died {
                sim.count("death");
                n_deaths += 1;
                dod = Some(end);
                break;
            }
            sim.count("inpatient_discharge");
            sim.count("drg");
            sim.tables.row(
                &schema::DRGCODES,
                &[sim.s(), hadm.to_string(), schema::DRG_TYPE.into(), drg.clone(), String::new()],
            )?;
            labels.drg.serialize(DrgLabel {
                subject_id: subject,
                hadm_id: hadm,
                admission_index: k,
                primary_code: primary.clone(),
                drg: drg.clone(),
            })?;

            let u = sim.rng.gen::<f64>();
            let r = config.readmit_30d_prob;
            let last = k + 1 == world::MAX_ADMISSIONS;
            let readmitted = u < r && !last;
            labels.readmission.serialize(MortalityLabel {
                subject_id: subject,
                hadm_id: hadm,
                admission_index: k,
                lab_level: level,
                true_probability: r,
                outcome: readmitted as u8,
            })?;
            if last {
                break;
            }
            if readmitted {
                let g = world::pick(&mut sim.rng, world::READMIT_GAPS);
                sim.advance(g);
            } else if u < r + (1.0 - r) * world.later_admission {
                let g = world::pick(&mut sim.rng, world::LATER_GAPS);
                sim.advance(g);
                if g == world::SIX_MONTH_TOKEN {
                    while sim.rng.gen::<f64>() < world::SIX_MONTH_REPEAT {
                        sim.advance(g);
                    }
                }
            } else {
                break;
            }
        }

        tables.row(
            &schema::PATIENTS,
            &[
                subject.to_string(),
                gender.into(),
                anchor_age.to_string(),
                anchor_year.to_string(),
                dod.map(|d| d.format(DATE_FORMAT).to_string()).unwrap_or_default(),
            ],
        )?;
    }

    tables.flush()?;
    for wr in [
        &mut labels.mortality,
        &mut labels.icu_mortality,
        &mut labels.readmission,
        &mut labels.icu_los,
        &mut labels.sofa,
        &mut labels.drg,
    ] {
        wr.flush().map_err(io)?;
    }

    let manifest = GenerationManifest {
        config: config.clone(),
        n_patients: config.n_patients,
        n_admissions,
        n_icu_stays: n_icu,
        n_deaths,
        event_counts: counts,
        tables: schema::ALL_TABLES.iter().map(|t| t.file.to_string()).collect(),
        labels: [
            LABELS_MORTALITY,
            LABELS_ICU_MORTALITY,
            LABELS_READMISSION,
            LABELS_ICU_LOS,
            LABELS_SOFA,
            LABELS_DRG,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?).map_err(io)?;
    Ok(manifest)
}
