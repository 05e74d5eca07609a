//! Task definitions: where each prediction is made in a timeline, what the
//! ground truth is, and how simulated continuations become an estimate.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate, Context, DistributionSource, GenerationParams, InferenceError, StopReason, Trace};
use crate::split::derive_seed;
use crate::tokenizer::interval::DAYS_PER_YEAR;
use crate::tokenizer::statics::sofa_quantile_mean;
use crate::tokenizer::{names, PatientTimeline, TokenClass, TokenId, Tokenizer};

/// Readmissions count only within this many days of discharge.
pub const READMISSION_WINDOW_DAYS: f64 = 30.0;
/// ICU mortality variant predicted this long after ICU admission.
pub const ICU_LATE_CUT_DAYS: f64 = 1.0;
/// Minimum probability mass on SOFA quantile tokens before a result is flagged.
pub const MIN_QUANTILE_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InpatientMortality,
    IcuMortality,
    IcuMortality24h,
    Los,
    Readmission30d,
    Sofa,
    Drg,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::InpatientMortality,
        Task::IcuMortality,
        Task::IcuMortality24h,
        Task::Los,
        Task::Readmission30d,
        Task::Sofa,
        Task::Drg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::InpatientMortality => "inpatient_mortality",
            Task::IcuMortality => "icu_mortality",
            Task::IcuMortality24h => "icu_mortality_24h",
            Task::Los => "los",
            Task::Readmission30d => "readmission_30d",
            Task::Sofa => "sofa",
            Task::Drg => "drg",
        }
    }

    fn seed_id(self) -> u64 {
        Task::ALL.iter().position(|&t| t == self).expect("listed") as u64
    }

    /// Probability tasks produce estimates on the replicate grid.
    pub fn is_binary(self) -> bool {
        matches!(self, Task::InpatientMortality | Task::IcuMortality | Task::IcuMortality24h | Task::Readmission30d)
    }

    /// Whether the case unit is an ICU stay (otherwise an inpatient admission).
    pub fn is_icu(self) -> bool {
        matches!(self, Task::IcuMortality | Task::IcuMortality24h | Task::Los | Task::Sofa)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    /// Accepts the task names plus `mortality` for inpatient mortality.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mortality" {
            return Ok(Task::InpatientMortality);
        }
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let all: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            format!("unknown task '{s}' (expected one of {})", all.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Binary(bool),
    Value(f64),
    Class(TokenId),
}

/// One prediction point in one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub task: Task,
    pub patient_id: u64,
    /// Ordinal of the inpatient admission or ICU stay within the timeline.
    pub index: usize,
    pub context: Context,
    pub label: Label,
}

impl Case {
    pub fn case_id(&self) -> String {
        format!("{}-{}", self.patient_id, self.index)
    }

    /// Body position of the decision point (context covers `body[..decision]`).
    pub fn decision(&self) -> usize {
        self.context.body.len()
    }
}

/// A prediction point that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub task: Task,
    pub patient_id: u64,
    pub index: usize,
    pub reason: String,
}

/// Token ids and per-token facts the tasks need.
#[derive(Debug, Clone)]
pub struct TaskTokens {
    pub death: TokenId,
    pub eot: TokenId,
    pub inp_start: TokenId,
    pub inp_end: TokenId,
    pub icu_start: TokenId,
    pub icu_end: TokenId,
    pub sofa: TokenId,
    pub unknown_drg: TokenId,
    pub quantiles: Vec<TokenId>,
    /// Representative days per token (0 for non-interval tokens).
    pub interval_days: Vec<f64>,
    pub is_drg: Vec<bool>,
}

impl TaskTokens {
    pub fn new(tokenizer: &Tokenizer) -> Result<TaskTokens, InferenceError> {
        let id = |n: &str| tokenizer.id(n);
        let vocab = &tokenizer.vocab;
        let unknown_drg = id(names::UNKNOWN_DRG)?;
        Ok(TaskTokens {
            death: id(names::DEATH)?,
            eot: id(names::END_OF_TIMELINE)?,
            inp_start: id(names::INPATIENT_START)?,
            inp_end: id(names::INPATIENT_END)?,
            icu_start: id(names::ICU_START)?,
            icu_end: id(names::ICU_END)?,
            sofa: id(names::SOFA)?,
            unknown_drg,
            quantiles: tokenizer.quantile_ids(),
            interval_days: tokenizer.interval_table(),
            is_drg: (0..vocab.len() as TokenId)
                .map(|t| t != unknown_drg && vocab.class(t) == Some(TokenClass::DrgClass))
                .collect(),
        })
    }

    fn days(&self, t: TokenId) -> f64 {
        self.interval_days.get(t as usize).copied().unwrap_or(0.0)
    }

    fn quantile_of(&self, t: TokenId) -> Option<u8> {
        self.quantiles.iter().position(|&q| q == t).map(|i| i as u8 + 1)
    }
}

/// Elapsed days between body positions `a` and `b`: from timestamps when the
/// timeline still has them, otherwise from interval-token representatives.
fn elapsed_days(pht: &PatientTimeline, tt: &TaskTokens, a: usize, b: usize) -> f64 {
    match &pht.timestamps {
        Some(ts) => (ts[b] - ts[a]) * DAYS_PER_YEAR,
        None => pht.body[a + 1..=b].iter().map(|&t| tt.days(t)).sum(),
    }
}

/// Cases (and exclusions) of `task` in one timeline.
pub fn extract_cases(pht: &PatientTimeline, task: Task, tt: &TaskTokens) -> (Vec<Case>, Vec<Exclusion>) {
    let body = &pht.body;
    let mut cases = Vec::new();
    let mut excluded = Vec::new();
    let anchor_token = if task.is_icu() { tt.icu_start } else { tt.inp_start };
    let starts: Vec<usize> = (0..body.len()).filter(|&i| body[i] == anchor_token).collect();
    let first_of = |from: usize, set: &[TokenId]| (from..body.len()).find(|&k| set.contains(&body[k]));
    for (index, &i) in starts.iter().enumerate() {
        let case = |end: usize, label: Label| Case {
            task,
            patient_id: pht.patient_id,
            index,
            context: Context { header: pht.header, anchor: pht.anchor, body: body[..end].to_vec() },
            label,
        };
        let outcome = match task {
            Task::InpatientMortality => {
                let end = i + 3;
                match first_of(end, &[tt.death, tt.inp_end]) {
                    Some(k) if end <= body.len() => Ok(case(end, Label::Binary(body[k] == tt.death))),
                    _ => Err("no discharge or death after admission"),
                }
            }
            Task::IcuMortality => {
                let end = i + 2;
                match first_of(end, &[tt.death, tt.icu_end]) {
                    Some(k) => Ok(case(end, Label::Binary(body[k] == tt.death))),
                    None => Err("no ICU discharge or death"),
                }
            }
            Task::IcuMortality24h => {
                let mut cum = 0.0;
                let mut cut = None;
                for k in i + 1..body.len() {
                    if body[k] == tt.death || body[k] == tt.icu_end {
                        break;
                    }
                    cum += tt.days(body[k]);
                    if cum >= ICU_LATE_CUT_DAYS {
                        cut = Some(k);
                        break;
                    }
                }
                match cut {
                    None => Err("left the ICU within 24 hours"),
                    Some(k) => match first_of(k + 1, &[tt.death, tt.icu_end]) {
                        Some(o) => Ok(case(k + 1, Label::Binary(body[o] == tt.death))),
                        None => Err("no ICU discharge or death"),
                    },
                }
            }
            Task::Los => match first_of(i + 2, &[tt.death, tt.icu_end]) {
                Some(k) if body[k] == tt.icu_end => Ok(case(i + 2, Label::Value(elapsed_days(pht, tt, i, k)))),
                Some(_) => Err("died in the ICU"),
                None => Err("no ICU discharge"),
            },
            Task::Sofa => {
                let q = body.get(i + 3).and_then(|&t| tt.quantile_of(t));
                match (body.get(i + 2), q) {
                    (Some(&s), Some(q)) if s == tt.sofa => Ok(case(i + 2, Label::Value(sofa_quantile_mean(q)))),
                    _ => Err("no SOFA score after ICU admission"),
                }
            }
            Task::Readmission30d | Task::Drg => match first_of(i + 1, &[tt.death, tt.inp_end]) {
                Some(e) if body[e] == tt.inp_end && e + 3 <= body.len() => {
                    let end = e + 3;
                    if task == Task::Drg {
                        match body.get(end) {
                            Some(&d) if tt.is_drg[d as usize] => Ok(case(end, Label::Class(d))),
                            _ => Err("no DRG class at discharge"),
                        }
                    } else {
                        let next = first_of(end, &[tt.inp_start, tt.death]);
                        let readmitted = next.is_some_and(|k| {
                            body[k] == tt.inp_start && elapsed_days(pht, tt, e, k) <= READMISSION_WINDOW_DAYS
                        });
                        Ok(case(end, Label::Binary(readmitted)))
                    }
                }
                Some(e) if body[e] == tt.death => Err("died during the admission"),
                _ => Err("no discharge"),
            },
        };
        match outcome {
            Ok(c) => cases.push(c),
            Err(reason) => excluded.push(Exclusion {
                task,
                patient_id: pht.patient_id,
                index,
                reason: reason.to_string(),
            }),
        }
    }
    (cases, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub case_id: String,
    pub patient_id: u64,
    pub index: usize,
    pub task: Task,
    /// Probability, days or SOFA points; `None` when undefined (see `flag`).
    pub estimate: Option<f64>,
    pub label: Label,
    pub traces: Vec<Trace>,
    pub stop_counts: BTreeMap<StopReason, usize>,
    /// DRG classes by descending probability (ties by token id).
    pub ranking: Vec<(TokenId, f64)>,
    pub replicates: usize,
    pub flag: Option<String>,
}

impl TaskResult {
    /// Values a replicate-count estimate can take: k / replicates.
    pub fn threshold_grid(&self) -> Vec<f64> {
        (0..=self.replicates).map(|k| k as f64 / self.replicates as f64).collect()
    }
}

/// Stop rule for one replicate of a generating task.
fn stop_rule(task: Task, tt: &TaskTokens) -> impl FnMut(TokenId) -> Option<StopReason> + '_ {
    let mut days = 0.0;
    move |t| {
        let hit = match task {
            Task::InpatientMortality => [tt.death, tt.inp_end, tt.eot].contains(&t),
            Task::IcuMortality | Task::IcuMortality24h | Task::Los => {
                [tt.death, tt.icu_end, tt.inp_end, tt.eot].contains(&t)
            }
            Task::Readmission30d => [tt.inp_start, tt.death, tt.eot].contains(&t),
            Task::Sofa | Task::Drg => true,
        };
        if hit {
            return Some(StopReason::StopTokenHit);
        }
        if task == Task::Readmission30d {
            days += tt.days(t);
            if days > READMISSION_WINDOW_DAYS {
                return Some(StopReason::TimeBudgetExceeded);
            }
        }
        None
    }
}

/// Estimate for one case.
pub fn run_case(
    source: &dyn DistributionSource,
    case: &Case,
    params: &GenerationParams,
    tt: &TaskTokens,
) -> Result<TaskResult, InferenceError> {
    params.validate()?;
    let mut session = source.session(&case.context)?;
    let mut result = TaskResult {
        case_id: case.case_id(),
        patient_id: case.patient_id,
        index: case.index,
        task: case.task,
        estimate: None,
        label: case.label.clone(),
        traces: Vec::new(),
        stop_counts: StopReason::ALL.iter().map(|&r| (r, 0)).collect(),
        ranking: Vec::new(),
        replicates: params.replicates,
        flag: None,
    };
    match case.task {
        Task::Sofa => {
            session.push(tt.sofa)?;
            let p = session.distribution()?;
            let mass: f64 = tt.quantiles.iter().map(|&q| p[q as usize]).sum();
            if mass < MIN_QUANTILE_MASS {
                result.flag = Some(format!("quantile mass {mass:.3e} after SOFA marker"));
            } else {
                let e = tt
                    .quantiles
                    .iter()
                    .enumerate()
                    .map(|(k, &q)| p[q as usize] / mass * sofa_quantile_mean(k as u8 + 1))
                    .sum();
                result.estimate = Some(e);
            }
        }
        Task::Drg => {
            let p = session.distribution()?;
            let mut ranking: Vec<(TokenId, f64)> =
                (0..p.len()).filter(|&t| tt.is_drg[t]).map(|t| (t as TokenId, p[t])).collect();
            let mass: f64 = ranking.iter().map(|r| r.1).sum();
            if mass > 0.0 {
                ranking.iter_mut().for_each(|r| r.1 /= mass);
            } else {
                result.flag = Some("no probability on DRG classes".into());
            }
            ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            result.estimate = ranking.first().map(|r| r.1);
            result.ranking = ranking;
        }
        task => {
            let mut hits = 0usize;
            let mut stays = Vec::new();
            for r in 0..params.replicates {
                let seed = derive_seed(params.seed, &[task.seed_id(), case.patient_id, case.index as u64, r as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = session.fork();
                let mut stop = stop_rule(task, tt);
                let trace = generate(s.as_mut(), &mut stop, params, &mut rng)?;
                *result.stop_counts.get_mut(&trace.stop).expect("all reasons") += 1;
                let last = trace.tokens.last().copied();
                let hit = trace.stop == StopReason::StopTokenHit;
                match task {
                    Task::Readmission30d => hits += (hit && last == Some(tt.inp_start)) as usize,
                    Task::Los => {
                        if hit && last == Some(tt.icu_end) {
                            stays.push(trace.tokens.iter().map(|&t| tt.days(t)).sum::<f64>());
                        }
                    }
                    _ => hits += (hit && last == Some(tt.death)) as usize,
                }
                result.traces.push(trace);
            }
            if task == Task::Los {
                result.estimate = params.los_aggregate.apply(&stays);
                if result.estimate.is_none() {
                    result.flag = Some("no replicate left the ICU alive".into());
                }
            } else {
                result.estimate = Some(hits as f64 / params.replicates as f64);
            }
            let capped = result.stop_counts[&StopReason::TokenCap];
            if capped > 0 {
                result.flag = Some(format!("{capped} replicates hit the token cap"));
            }
        }
    }
    Ok(result)
}

/// Runs every case, split across `threads` workers. Results keep the case
/// order and do not depend on the thread count.
pub fn run_cases(
    source: &dyn DistributionSource,
    cases: &[Case],
    params: &GenerationParams,
    tt: &TaskTokens,
    threads: usize,
) -> Result<Vec<TaskResult>, InferenceError> {
    let threads = threads.clamp(1, cases.len().max(1));
    if threads == 1 {
        return cases.iter().map(|c| run_case(source, c, params, tt)).collect();
    }
    let per = cases.len().div_ceil(threads);
    let chunks: Vec<Result<Vec<TaskResult>, InferenceError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .chunks(per)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|c| run_case(source, c, params, tt)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("inference worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(cases.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Checks that a case's context is exactly the timeline before its decision
/// point and that no ground-truth SOFA or DRG token of the predicted event
/// is inside it.
pub fn audit_case(case: &Case, pht: &PatientTimeline, tt: &TaskTokens) -> Result<(), String> {
    let d = case.decision();
    if d > pht.body.len() || case.context.body[..] != pht.body[..d] {
        return Err(format!("{} {}: context is not a prefix of the timeline", case.task, case.case_id()));
    }
    if case.context.header != pht.header {
        return Err(format!("{} {}: header differs from the timeline", case.task, case.case_id()));
    }
    let tail = &pht.body[..d];
    let last_icu = tail.iter().rposition(|&t| t == tt.icu_start);
    let last_discharge = tail.iter().rposition(|&t| t == tt.inp_end);
    match case.task {
        Task::IcuMortality | Task::Los | Task::Sofa => {
            if last_icu.is_some_and(|j| tail[j..].contains(&tt.sofa)) {
                return Err(format!("{} {}: SOFA of the current stay in context", case.task, case.case_id()));
            }
        }
        Task::Readmission30d | Task::Drg => {
            if last_discharge.is_some_and(|e| tail[e..].iter().any(|&t| tt.is_drg[t as usize])) {
                return Err(format!("{} {}: DRG of the current admission in context", case.task, case.case_id()));
            }
        }
        _ => {}
    }
    Ok(())
}
