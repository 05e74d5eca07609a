use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use super::codes::{validate_code, CodeSystem};
use super::schema::{self, TableSchema};
use super::{
    Cohort, EventKind, IngestError, IngestReport, PatientId, PatientRecord, RawEvent, StaticInfo,
    TableReport,
};
use crate::tokenizer::interval::DAYS_PER_YEAR;
use crate::tokenizer::statics::{Marital, Race, Sex};

const SECONDS_PER_DAY: f64 = 86_400.0;

struct Row<'a> {
    record: &'a csv::StringRecord,
    schema: &'a TableSchema,
    index: &'a [usize],
}

impl Row<'_> {
    fn get(&self, column: &str) -> &str {
        let pos = self
            .schema
            .columns
            .iter()
            .position(|c| *c == column)
            .expect("column belongs to schema");
        self.record.get(self.index[pos]).map(str::trim).unwrap_or("")
    }
}

type RowResult = Result<(), &'static str>;

/// Streams every row of a table through `f`. `f` returns the drop reason
/// for rows it cannot use.
fn for_each_row<F>(
    dir: &Path,
    schema: &TableSchema,
    report: &mut IngestReport,
    mut f: F,
) -> Result<(), IngestError>
where
    F: FnMut(&Row) -> RowResult,
{
    let table_report = report.tables.entry(schema.name.to_string()).or_default();
    let path = dir.join(schema.file);
    if !path.exists() {
        if schema.required {
            return Err(IngestError::MissingTable(schema.name.to_string()));
        }
        return Ok(());
    }
    table_report.present = true;
    let file = File::open(&path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    if file.metadata().map(|m| m.len() == 0).unwrap_or(false) {
        return Ok(());
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let csv_err = |source| IngestError::Csv { table: schema.name.to_string(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = Vec::with_capacity(schema.columns.len());
    for column in schema.columns {
        match headers.iter().position(|h| h.trim() == *column) {
            Some(i) => index.push(i),
            None => {
                return Err(IngestError::MissingColumn {
                    table: schema.name.to_string(),
                    column: column.to_string(),
                })
            }
        }
    }
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                table_report.rows_total += 1;
                let row = Row { record: &record, schema, index: &index };
                match f(&row) {
                    Ok(()) => table_report.rows_used += 1,
                    Err(reason) => table_report.drop_row(reason),
                }
            }
            Err(e) if e.is_io_error() => return Err(csv_err(e)),
            Err(_) => {
                table_report.rows_total += 1;
                table_report.drop_row("malformed");
            }
        }
    }
    Ok(())
}

pub fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, schema::DATETIME_FORMAT)
        .ok()
        .or_else(|| NaiveDate::parse_from_str(s, schema::DATE_FORMAT).ok()?.and_hms_opt(0, 0, 0))
}

fn days_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_seconds() as f64 / SECONDS_PER_DAY
}

struct PatientInfo {
    sex: Sex,
    anchor_age: f64,
    anchor_start: NaiveDateTime,
    anchor_year: i32,
    dod: Option<NaiveDateTime>,
}

impl PatientInfo {
    fn age_at(&self, t: NaiveDateTime) -> f64 {
        self.anchor_age + days_between(self.anchor_start, t) / DAYS_PER_YEAR
    }
}

struct AdmissionInfo {
    subject_id: PatientId,
    admittime: NaiveDateTime,
    discharge: Option<NaiveDateTime>,
    /// Time of in-hospital death, if the patient died during this admission.
    death: Option<NaiveDateTime>,
}

struct Loader {
    patients: BTreeMap<PatientId, PatientInfo>,
    admissions: HashMap<u64, AdmissionInfo>,
    /// stay_id → (subject, intime)
    stays: HashMap<u64, (PatientId, NaiveDateTime)>,
    events: BTreeMap<PatientId, Vec<RawEvent>>,
    race: BTreeMap<PatientId, (NaiveDateTime, Race)>,
    marital: BTreeMap<PatientId, (NaiveDateTime, Marital)>,
    bmi: BTreeMap<PatientId, (NaiveDateTime, f64)>,
    deaths: BTreeMap<PatientId, NaiveDateTime>,
}

impl Loader {
    fn push(&mut self, subject: PatientId, t: NaiveDateTime, kind: EventKind) -> RowResult {
        let info = self.patients.get(&subject).ok_or("unknown_subject")?;
        let timestamp = info.age_at(t);
        if !(timestamp >= 0.0) {
            return Err("negative_age");
        }
        self.events.entry(subject).or_default().push(RawEvent {
            patient_id: subject,
            timestamp,
            kind,
        });
        Ok(())
    }

    fn subject(&self, row: &Row) -> Result<PatientId, &'static str> {
        let id: PatientId = row.get("subject_id").parse().map_err(|_| "bad_id")?;
        if self.patients.contains_key(&id) {
            Ok(id)
        } else {
            Err("unknown_subject")
        }
    }
}

fn time(row: &Row, column: &str) -> Result<NaiveDateTime, &'static str> {
    parse_time(row.get(column)).ok_or("bad_time")
}

fn opt_time(row: &Row, column: &str) -> Result<Option<NaiveDateTime>, &'static str> {
    let s = row.get(column);
    if s.is_empty() {
        Ok(None)
    } else {
        parse_time(s).map(Some).ok_or("bad_time")
    }
}

fn number(row: &Row, column: &str) -> Result<f64, &'static str> {
    row.get(column).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or("bad_value")
}

fn record_earliest<T>(map: &mut BTreeMap<PatientId, (NaiveDateTime, T)>, id: PatientId, t: NaiveDateTime, v: T) {
    match map.get(&id) {
        Some((prev, _)) if *prev <= t => {}
        _ => {
            map.insert(id, (t, v));
        }
    }
}

/// Reads every table in `dir` into per-patient chronological event streams.
///
/// Events sharing a timestamp are ordered by [`EventKind::priority`], and the
/// sort is stable so rows keep file order within one priority.
pub fn load_tables(dir: &Path) -> Result<Cohort, IngestError> {
    let mut report = IngestReport::default();
    let mut l = Loader {
        patients: BTreeMap::new(),
        admissions: HashMap::new(),
        stays: HashMap::new(),
        events: BTreeMap::new(),
        race: BTreeMap::new(),
        marital: BTreeMap::new(),
        bmi: BTreeMap::new(),
        deaths: BTreeMap::new(),
    };

    for_each_row(dir, &schema::PATIENTS, &mut report, |row| {
        let id: PatientId = row.get("subject_id").parse().map_err(|_| "bad_id")?;
        let sex = Sex::parse(row.get("gender")).ok_or("bad_value")?;
        let anchor_age = number(row, "anchor_age")?;
        let anchor_year: i32 = row.get("anchor_year").parse().map_err(|_| "bad_value")?;
        let anchor_start = NaiveDate::from_ymd_opt(anchor_year, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .ok_or("bad_value")?;
        let dod = opt_time(row, "dod")?;
        if l.patients.contains_key(&id) {
            return Err("duplicate");
        }
        l.patients.insert(id, PatientInfo { sex, anchor_age, anchor_start, anchor_year, dod });
        Ok(())
    })?;

    for_each_row(dir, &schema::ADMISSIONS, &mut report, |row| {
        let subject = l.subject(row)?;
        let hadm: u64 = row.get("hadm_id").parse().map_err(|_| "bad_id")?;
        if l.admissions.contains_key(&hadm) {
            return Err("duplicate");
        }
        let admit = time(row, "admittime")?;
        let disch = opt_time(row, "dischtime")?;
        let deathtime = opt_time(row, "deathtime")?;
        let expired = row.get("hospital_expire_flag") == "1" || deathtime.is_some();
        let death = if expired { Some(deathtime.or(disch).ok_or("bad_time")?) } else { None };
        let disch = if death.is_none() { Some(disch.ok_or("bad_time")?) } else { None };
        let ed = match (opt_time(row, "edregtime")?, opt_time(row, "edouttime")?) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };

        let age = l.patients[&subject].age_at(admit.min(ed.map_or(admit, |e| e.0)));
        if !(age >= 0.0) {
            return Err("negative_age");
        }
        if let Some((reg, out)) = ed {
            l.push(subject, reg, EventKind::EdAdmit)?;
            l.push(subject, out, EventKind::EdDischarge { los_days: days_between(reg, out) })?;
        }
        l.push(
            subject,
            admit,
            EventKind::InpatientAdmit {
                admission_type: row.get("admission_type").to_string(),
                insurance: row.get("insurance").to_string(),
            },
        )?;
        if let Some(d) = disch {
            l.push(
                subject,
                d,
                EventKind::InpatientDischarge {
                    los_days: days_between(admit, d),
                    destination: row.get("discharge_location").to_string(),
                },
            )?;
        }
        if let Some(d) = death {
            record_earliest_time(&mut l.deaths, subject, d);
        }
        let race = row.get("race");
        if !race.is_empty() {
            record_earliest(&mut l.race, subject, admit, Race::parse(race));
        }
        let marital = row.get("marital_status");
        if !marital.is_empty() {
            record_earliest(&mut l.marital, subject, admit, Marital::parse(marital));
        }
        l.admissions.insert(hadm, AdmissionInfo { subject_id: subject, admittime: admit, discharge: disch, death });
        Ok(())
    })?;

    for_each_row(dir, &schema::ICUSTAYS, &mut report, |row| {
        let subject = l.subject(row)?;
        let hadm: u64 = row.get("hadm_id").parse().map_err(|_| "bad_id")?;
        let stay: u64 = row.get("stay_id").parse().map_err(|_| "bad_id")?;
        let adm = l.admissions.get(&hadm).ok_or("unknown_admission")?;
        if adm.subject_id != subject {
            return Err("unknown_admission");
        }
        if l.stays.contains_key(&stay) {
            return Err("duplicate");
        }
        let intime = time(row, "intime")?;
        let outtime = opt_time(row, "outtime")?;
        let died_in_stay = match (adm.death, outtime) {
            (Some(d), Some(out)) => d <= out,
            (Some(_), None) => true,
            _ => false,
        };
        let outtime = if died_in_stay { None } else { Some(outtime.ok_or("bad_time")?) };
        l.push(subject, intime, EventKind::IcuAdmit { icu_type: row.get("first_careunit").to_string() })?;
        if let Some(out) = outtime {
            l.push(subject, out, EventKind::IcuDischarge { los_days: days_between(intime, out) })?;
        }
        l.stays.insert(stay, (subject, intime));
        Ok(())
    })?;

    let mut sofa_seen = std::collections::HashSet::new();
    for_each_row(dir, &schema::SOFA, &mut report, |row| {
        let subject = l.subject(row)?;
        let stay: u64 = row.get("stay_id").parse().map_err(|_| "bad_id")?;
        let &(owner, intime) = l.stays.get(&stay).ok_or("unknown_stay")?;
        if owner != subject {
            return Err("unknown_stay");
        }
        let score: u8 = row.get("sofa").parse().map_err(|_| "bad_value")?;
        if score > crate::tokenizer::statics::SOFA_MAX {
            return Err("bad_value");
        }
        if !sofa_seen.insert(stay) {
            return Err("duplicate");
        }
        l.push(subject, intime, EventKind::Sofa { score })
    })?;

    for_each_row(dir, &schema::TRANSFERS, &mut report, |row| {
        let subject = l.subject(row)?;
        if !row.get("eventtype").eq_ignore_ascii_case(schema::TRANSFER_EVENTTYPE) {
            return Err("not_transfer");
        }
        let t = time(row, "intime")?;
        l.push(subject, t, EventKind::Transfer { careunit: row.get("careunit").to_string() })
    })?;

    for_each_row(dir, &schema::LABEVENTS, &mut report, |row| {
        let subject = l.subject(row)?;
        let t = time(row, "charttime")?;
        let value = number(row, "valuenum")?;
        let label = row.get("label");
        if label.is_empty() {
            return Err("bad_value");
        }
        let uom = row.get("valueuom");
        let category = if uom.is_empty() { label.to_string() } else { format!("{label}_{uom}") };
        l.push(subject, t, EventKind::Lab { category, value })
    })?;

    for_each_row(dir, &schema::OMR, &mut report, |row| {
        let subject = l.subject(row)?;
        let t = time(row, "chartdate")?;
        let name = row.get("result_name");
        let value = row.get("result_value");
        if name.starts_with(schema::OMR_BLOOD_PRESSURE) {
            let (s, d) = value.split_once('/').ok_or("bad_value")?;
            let systolic: f64 = s.trim().parse().map_err(|_| "bad_value")?;
            let diastolic: f64 = d.trim().parse().map_err(|_| "bad_value")?;
            if !systolic.is_finite() || !diastolic.is_finite() {
                return Err("bad_value");
            }
            l.push(subject, t, EventKind::BloodPressure { systolic, diastolic })
        } else if name.starts_with(schema::OMR_BMI) {
            let v: f64 = value.parse().ok().filter(|v: &f64| v.is_finite()).ok_or("bad_value")?;
            record_earliest(&mut l.bmi, subject, t, v);
            Ok(())
        } else {
            if name.is_empty() {
                return Err("bad_value");
            }
            let v: f64 = value.parse().ok().filter(|v: &f64| v.is_finite()).ok_or("bad_value")?;
            l.push(subject, t, EventKind::OmrMeasure { name: name.to_string(), value: v })
        }
    })?;

    for_each_row(dir, &schema::PRESCRIPTIONS, &mut report, |row| {
        let subject = l.subject(row)?;
        let t = time(row, "starttime")?;
        let atc = validate_code(row.get("atc_code"), CodeSystem::Atc).map_err(|_| "invalid_code")?;
        l.push(subject, t, EventKind::MedPrescribed { atc })
    })?;

    for_each_row(dir, &schema::EMAR, &mut report, |row| {
        let subject = l.subject(row)?;
        if !row.get("event_txt").eq_ignore_ascii_case(schema::EMAR_ADMINISTERED) {
            return Err("not_administered");
        }
        let t = time(row, "charttime")?;
        let atc = validate_code(row.get("atc_code"), CodeSystem::Atc).map_err(|_| "invalid_code")?;
        l.push(subject, t, EventKind::MedAdministered { atc })
    })?;

    // codes are buffered so each admission's rows can be put in seq_num order
    let mut coded: Vec<(u64, i64, PatientId, NaiveDateTime, EventKind)> = Vec::new();
    for_each_row(dir, &schema::DIAGNOSES, &mut report, |row| {
        let subject = l.subject(row)?;
        let hadm: u64 = row.get("hadm_id").parse().map_err(|_| "bad_id")?;
        let adm = l.admissions.get(&hadm).ok_or("unknown_admission")?;
        if adm.subject_id != subject {
            return Err("unknown_admission");
        }
        if row.get("icd_version") != "10" {
            return Err("icd9");
        }
        let seq: i64 = row.get("seq_num").parse().map_err(|_| "bad_value")?;
        let icd = validate_code(row.get("icd_code"), CodeSystem::Icd10Cm).map_err(|_| "invalid_code")?;
        if !(l.patients[&subject].age_at(adm.admittime) >= 0.0) {
            return Err("negative_age");
        }
        coded.push((hadm, seq, subject, adm.admittime, EventKind::Diagnosis { icd }));
        Ok(())
    })?;
    for_each_row(dir, &schema::PROCEDURES, &mut report, |row| {
        let subject = l.subject(row)?;
        let hadm: u64 = row.get("hadm_id").parse().map_err(|_| "bad_id")?;
        if row.get("icd_version") != "10" {
            return Err("icd9");
        }
        let seq: i64 = row.get("seq_num").parse().map_err(|_| "bad_value")?;
        let t = time(row, "chartdate")?;
        let pcs = validate_code(row.get("icd_code"), CodeSystem::Icd10Pcs).map_err(|_| "invalid_code")?;
        if !(l.patients[&subject].age_at(t) >= 0.0) {
            return Err("negative_age");
        }
        coded.push((hadm, seq, subject, t, EventKind::Procedure { pcs }));
        Ok(())
    })?;
    coded.sort_by_key(|c| (matches!(c.4, EventKind::Procedure { .. }), c.0, c.1));
    for (_, _, subject, t, kind) in coded {
        l.push(subject, t, kind).expect("checked when buffered");
    }

    let mut drg: BTreeMap<u64, Option<String>> = BTreeMap::new();
    for_each_row(dir, &schema::DRGCODES, &mut report, |row| {
        let subject = l.subject(row)?;
        let hadm: u64 = row.get("hadm_id").parse().map_err(|_| "bad_id")?;
        let adm = l.admissions.get(&hadm).ok_or("unknown_admission")?;
        if adm.subject_id != subject {
            return Err("unknown_admission");
        }
        if adm.death.is_some() {
            return Err("no_discharge");
        }
        let kind = row.get("drg_type");
        if !kind.is_empty() && !kind.eq_ignore_ascii_case(schema::DRG_TYPE) {
            return Err("other_drg_type");
        }
        if drg.contains_key(&hadm) {
            return Err("duplicate");
        }
        let code = row.get("drg_code");
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err("bad_value");
        }
        drg.insert(hadm, Some(code.trim_start_matches('0').to_string()).filter(|c| !c.is_empty()));
        Ok(())
    })?;

    // every discharge gets a DRG slot, unknown when no grouping row exists
    let mut discharges: Vec<(u64, PatientId, NaiveDateTime)> = l
        .admissions
        .iter()
        .filter_map(|(h, a)| a.discharge.map(|d| (*h, a.subject_id, d)))
        .collect();
    discharges.sort_by_key(|d| d.0);
    for (hadm, subject, t) in discharges {
        let code = drg.get(&hadm).cloned().flatten();
        l.push(subject, t, EventKind::Drg { code }).expect("discharge was accepted");
    }

    // in-hospital death wins over the registry date of death
    let subjects: Vec<PatientId> = l.patients.keys().copied().collect();
    for subject in subjects {
        let info = &l.patients[&subject];
        let death = l.deaths.get(&subject).copied().or(info.dod);
        if let Some(d) = death {
            if l.events.contains_key(&subject) {
                let _ = l.push(subject, d, EventKind::Death);
            }
        }
    }

    let mut cohort = Cohort { patients: BTreeMap::new(), report };
    for (id, info) in &l.patients {
        let Some(mut events) = l.events.remove(id) else {
            cohort.report.patients_without_events += 1;
            continue;
        };
        events.sort_by(|a, b| {
            a.timestamp.total_cmp(&b.timestamp).then(a.kind.priority().cmp(&b.kind.priority()))
        });
        let age_at_start = events[0].timestamp;
        let statics = StaticInfo {
            sex: info.sex,
            race: l.race.get(id).map_or(Race::Unknown, |r| r.1),
            marital: l.marital.get(id).map_or(Marital::Unknown, |m| m.1),
            bmi: l.bmi.get(id).map(|b| b.1),
            age_at_start,
            start_year_offset: (info.anchor_year - 1970) as f64 + (age_at_start - info.anchor_age),
        };
        cohort.patients.insert(*id, PatientRecord { patient_id: *id, statics, events });
    }
    Ok(cohort)
}

fn record_earliest_time(map: &mut BTreeMap<PatientId, NaiveDateTime>, id: PatientId, t: NaiveDateTime) {
    let e = map.entry(id).or_insert(t);
    if t < *e {
        *e = t;
    }
}

impl TableReport {
    /// True when every row is accounted for.
    pub fn balanced(&self) -> bool {
        self.rows_used + self.rows_dropped() == self.rows_total
    }
}
