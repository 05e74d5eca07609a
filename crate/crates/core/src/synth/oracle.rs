//! Exact next-token distribution of the synthetic world.
//!
//! The oracle parses a context with the world's grammar and keeps a
//! posterior over the current admission's informative lab level. Everything
//! before the last emergency registration is irrelevant because each
//! admission redraws its level.

use std::collections::HashMap;

use statrs::distribution::{Binomial, Discrete};
use thiserror::Error;

use super::world::{self, World};
use super::{SynthConfig, SynthError, LAB_LEVELS};
use crate::tokenizer::quantile::CategoryBins;
use crate::tokenizer::{
    categories, drg_token, encode_atc, encode_icd10cm, encode_icd10pcs, lab_token, names, statics, TokenClass,
    TokenId, Tokenizer,
};

const L: usize = LAB_LEVELS as usize;
const NQ: usize = crate::tokenizer::quantile::N_QUANTILES;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Config(#[from] SynthError),
    #[error("world token {0:?} is not in the vocabulary")]
    MissingToken(String),
    #[error("no quantile bins for {0:?}")]
    MissingCategory(String),
    #[error("token {token:?} cannot follow {phase}")]
    UnexpectedToken { token: String, phase: String },
    #[error("context is not a timeline of this world: {0}")]
    BadContext(String),
    #[error("the timeline has ended")]
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CodeSet {
    Primary,
    Secondary,
    Medication,
    Procedure,
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Start,
    AfterEdStart,
    AfterEdGap1,
    AfterLactate,
    AfterLactateQ,
    AfterEdGap2,
    AfterInpStart,
    AfterType,
    AfterInsurance,
    InCode(CodeSet, Vec<TokenId>),
    AfterDiagnosis,
    AfterCloseGap,
    AfterEdEnd,
    Idle,
    AfterStepGap,
    AfterLab(usize),
    AfterBp,
    AfterBpSystolic,
    AfterInpEnd,
    AfterInpLosQ,
    AfterDischarged,
    AfterDrg,
    AfterReadmitGap,
    AfterSixMonth,
    AfterIcuStart,
    AfterIcuType,
    AfterSofa,
    AfterIcuEnd,
    AfterDeath,
    Ended,
}

/// Parser state for one timeline; feed tokens with [`OracleState::observe`].
#[derive(Debug, Clone)]
pub struct OracleState {
    phase: Phase,
    in_icu: bool,
    belief: [f64; L],
    elapsed: i64,
    inpatient_start: i64,
    icu_start: i64,
    primary: Vec<TokenId>,
}

struct Ids {
    eot: TokenId,
    death: TokenId,
    ed_start: TokenId,
    ed_end: TokenId,
    inp_start: TokenId,
    inp_end: TokenId,
    icu_start: TokenId,
    icu_end: TokenId,
    bp: TokenId,
    sofa: TokenId,
    lactate: TokenId,
    close_gap: TokenId,
    six_month: TokenId,
}

pub struct MarkovOracle {
    world: World,
    vocab_len: usize,
    ids: Ids,
    quantiles: [TokenId; NQ],
    /// Seconds represented by each interval token.
    interval: HashMap<TokenId, i64>,
    ed_first: Vec<(TokenId, f64)>,
    ed_second: Vec<(TokenId, f64)>,
    ward_gaps: Vec<(TokenId, f64)>,
    icu_gaps: Vec<(TokenId, f64)>,
    readmit_gaps: Vec<(TokenId, f64)>,
    later_gaps: Vec<(TokenId, f64)>,
    types: Vec<(TokenId, f64)>,
    insurances: Vec<(TokenId, f64)>,
    destinations: Vec<(TokenId, f64)>,
    icu_types: Vec<(TokenId, f64)>,
    transfers: Vec<(TokenId, f64)>,
    /// Quantile (1-based) of the informative lab at each level.
    lactate_q: [u8; L],
    /// `(token, weight, quantile distribution)` per routine lab.
    labs: Vec<(TokenId, f64, [f64; NQ])>,
    systolic: [f64; NQ],
    diastolic: [f64; NQ],
    /// P(SOFA quantile | level), indexed [level-1][q-1].
    sofa_q: [[f64; NQ]; L],
    codes: HashMap<CodeSetKey, Vec<(Vec<TokenId>, f64)>>,
    drg_of_primary: HashMap<Vec<TokenId>, TokenId>,
    ed_los: CategoryBins,
    inpatient_los: CategoryBins,
    icu_los: CategoryBins,
    mortality: [f64; L],
    ward_death: [f64; L],
}

type CodeSetKey = u8;

fn key(set: CodeSet) -> CodeSetKey {
    set as u8
}

fn binomial_q(trials: u64, value: impl Fn(u64) -> f64, bins: &CategoryBins) -> [f64; NQ] {
    let b = Binomial::new(0.5, trials).expect("valid binomial");
    let mut out = [0.0; NQ];
    for k in 0..=trials {
        out[bins.bin(value(k)) as usize - 1] += b.pmf(k);
    }
    out
}

impl MarkovOracle {
    pub fn new(config: &SynthConfig, tokenizer: &Tokenizer) -> Result<MarkovOracle, OracleError> {
        let world = World::new(config)?;
        let vocab = &tokenizer.vocab;
        let id = |name: &str| vocab.id(name).ok_or_else(|| OracleError::MissingToken(name.to_string()));
        let bins = |cat: &str| {
            tokenizer.binner.category(cat).cloned().ok_or_else(|| OracleError::MissingCategory(cat.to_string()))
        };
        let table = |t: &[(&str, f64)], prefix: &str, categorize: bool| -> Result<Vec<(TokenId, f64)>, OracleError> {
            t.iter()
                .map(|(raw, p)| {
                    let name = if categorize {
                        format!("{prefix}{}", crate::tokenizer::categorical(raw))
                    } else {
                        format!("{prefix}{raw}")
                    };
                    Ok((id(&name)?, *p))
                })
                .collect()
        };
        let code_tokens = |toks: Vec<(String, TokenClass)>| -> Result<Vec<TokenId>, OracleError> {
            toks.into_iter().map(|(t, _)| id(&t)).collect()
        };
        let invalid = |c: &str| OracleError::BadContext(format!("world code {c} does not encode"));

        let (lab_label, lab_uom) = world::INFORMATIVE_LAB;
        let lactate_name = lab_token(&format!("{lab_label}_{lab_uom}"));
        let ids = Ids {
            eot: id(names::END_OF_TIMELINE)?,
            death: id(names::DEATH)?,
            ed_start: id(names::ED_START)?,
            ed_end: id(names::ED_END)?,
            inp_start: id(names::INPATIENT_START)?,
            inp_end: id(names::INPATIENT_END)?,
            icu_start: id(names::ICU_START)?,
            icu_end: id(names::ICU_END)?,
            bp: id(names::BLOOD_PRESSURE)?,
            sofa: id(names::SOFA)?,
            lactate: id(&lactate_name)?,
            close_gap: id(world::ED_CLOSE_GAP)?,
            six_month: id(world::SIX_MONTH_TOKEN)?,
        };
        let quantiles: [TokenId; NQ] = tokenizer.quantile_ids().try_into().expect("ten quantiles");
        let mut interval = HashMap::new();
        for b in tokenizer.scheme.buckets() {
            interval.insert(id(&b.name)?, (b.representative_minutes * 60.0).round() as i64);
        }

        let lactate_bins = bins(&lactate_name)?;
        let mut lactate_q = [0u8; L];
        for l in 1..=LAB_LEVELS {
            lactate_q[l as usize - 1] = lactate_bins.bin(world::informative_value(l));
        }
        let mut labs = Vec::new();
        for (lab, w) in &world.routine_labs {
            let name = lab_token(&lab.category());
            let b = bins(&name)?;
            labs.push((id(&name)?, *w, binomial_q(lab.trials, |k| lab.value(k), &b)));
        }
        let (sb, ss, sn) = world::SYSTOLIC;
        let (db, ds, dn) = world::DIASTOLIC;
        let systolic = binomial_q(sn, |k| sb + ss * k as f64, &bins(categories::BP_SYSTOLIC)?);
        let diastolic = binomial_q(dn, |k| db + ds * k as f64, &bins(categories::BP_DIASTOLIC)?);
        let mut sofa_q = [[0.0; NQ]; L];
        for l in 1..=LAB_LEVELS {
            let b = Binomial::new(world::sofa_p(l), world::SOFA_TRIALS).expect("valid binomial");
            for s in 0..=world::SOFA_TRIALS {
                let q = statics::sofa_quantile(s as u8).expect("score in range");
                sofa_q[l as usize - 1][q as usize - 1] += b.pmf(s);
            }
        }

        let mut codes: HashMap<CodeSetKey, Vec<(Vec<TokenId>, f64)>> = HashMap::new();
        let mut drg_of_primary = HashMap::new();
        let n_primary = world.primaries.len() as f64;
        for (_, code, drg) in &world.primaries {
            let toks = code_tokens(encode_icd10cm(code).map_err(|_| invalid(code))?)?;
            drg_of_primary.insert(toks.clone(), id(&drg_token(drg))?);
            codes.entry(key(CodeSet::Primary)).or_default().push((toks, 1.0 / n_primary));
        }
        for (code, p) in world::SECONDARY_DIAGNOSES {
            let toks = code_tokens(encode_icd10cm(code).map_err(|_| invalid(code))?)?;
            codes.entry(key(CodeSet::Secondary)).or_default().push((toks, *p));
        }
        for (code, p) in world::MEDICATIONS {
            let toks = code_tokens(encode_atc(code).map_err(|_| invalid(code))?)?;
            codes.entry(key(CodeSet::Medication)).or_default().push((toks, *p));
        }
        for (code, p) in world::PROCEDURES {
            let toks = code_tokens(encode_icd10pcs(code).map_err(|_| invalid(code))?)?;
            codes.entry(key(CodeSet::Procedure)).or_default().push((toks, *p));
        }

        let mut mortality = [0.0; L];
        let mut ward_death = [0.0; L];
        for l in 1..=LAB_LEVELS {
            mortality[l as usize - 1] = config.mortality(l);
            ward_death[l as usize - 1] = config.ward_death_prob(l);
        }

        let icu_gaps: Vec<(&str, f64)> = world.icu_gaps().to_vec();
        Ok(MarkovOracle {
            vocab_len: vocab.len(),
            ids,
            quantiles,
            interval,
            ed_first: table(world::ED_FIRST_GAPS, "", false)?,
            ed_second: table(world::ED_SECOND_GAPS, "", false)?,
            ward_gaps: table(world::WARD_GAPS, "", false)?,
            icu_gaps: table(&icu_gaps, "", false)?,
            readmit_gaps: table(world::READMIT_GAPS, "", false)?,
            later_gaps: table(world::LATER_GAPS, "", false)?,
            types: table(world::ADMISSION_TYPES, "TYPE_", true)?,
            insurances: table(world::INSURANCES, "INSURANCE_", true)?,
            destinations: table(world::DESTINATIONS, "DISCHARGED_", true)?,
            icu_types: table(world::ICU_TYPES, "ICU_TYPE_", false)?,
            transfers: table(world::TRANSFER_UNITS, "TRANSFER_", true)?,
            lactate_q,
            labs,
            systolic,
            diastolic,
            sofa_q,
            codes,
            drg_of_primary,
            ed_los: bins(categories::ED_LOS)?,
            inpatient_los: bins(categories::INPATIENT_LOS)?,
            icu_los: bins(categories::ICU_LOS)?,
            mortality,
            ward_death,
            world,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// State at the start of a timeline (after the static header).
    pub fn initial_state(&self) -> OracleState {
        OracleState {
            phase: Phase::Start,
            in_icu: false,
            belief: [1.0 / L as f64; L],
            elapsed: 0,
            inpatient_start: 0,
            icu_start: 0,
            primary: Vec::new(),
        }
    }

    /// Parses `context` (optionally preceded by static tokens) and returns
    /// the state after its last token.
    pub fn parse(&self, context: &[TokenId], classes: &[TokenClass]) -> Result<OracleState, OracleError> {
        let start = context.iter().rposition(|&t| t == self.ids.ed_start);
        let mut state = self.initial_state();
        let rest = match start {
            Some(i) => &context[i..],
            None => {
                let non_static = context
                    .iter()
                    .zip(classes)
                    .any(|(_, c)| *c != TokenClass::Static);
                if non_static {
                    return Err(OracleError::BadContext("no emergency registration in context".into()));
                }
                &[]
            }
        };
        for &t in rest {
            self.observe(&mut state, t)?;
        }
        Ok(state)
    }

    /// Exact distribution of the token after `context`.
    pub fn next_distribution(&self, context: &[TokenId], tokenizer: &Tokenizer) -> Result<Vec<f64>, OracleError> {
        let classes: Vec<TokenClass> =
            context.iter().map(|&t| tokenizer.vocab.class(t).unwrap_or(TokenClass::Special)).collect();
        let state = self.parse(context, &classes)?;
        self.distribution(&state)
    }

    fn routine_first(&self, out: &mut [f64], scale: f64) {
        for (mix_kind, mix_p) in world::ROUTINE_MIX {
            let p = scale * mix_p;
            match mix_kind {
                world::Routine::Lab => {
                    for (tok, w, _) in &self.labs {
                        out[*tok as usize] += p * w;
                    }
                }
                world::Routine::Medication => self.code_next(CodeSet::Medication, &[], out, p),
                world::Routine::BloodPressure => out[self.ids.bp as usize] += p,
                world::Routine::Transfer => add(out, &self.transfers, p),
                world::Routine::Procedure => self.code_next(CodeSet::Procedure, &[], out, p),
            }
        }
    }

    fn code_next(&self, set: CodeSet, prefix: &[TokenId], out: &mut [f64], scale: f64) {
        let codes = &self.codes[&key(set)];
        let matching: Vec<&(Vec<TokenId>, f64)> =
            codes.iter().filter(|(c, _)| c.len() > prefix.len() && c.starts_with(prefix)).collect();
        let total: f64 = matching.iter().map(|(_, p)| p).sum();
        for (c, p) in matching {
            out[c[prefix.len()] as usize] += scale * p / total;
        }
    }

    fn code_complete(&self, set: CodeSet, prefix: &[TokenId]) -> bool {
        self.codes[&key(set)].iter().any(|(c, _)| c == prefix)
    }

    fn q_token(&self, q: u8) -> TokenId {
        self.quantiles[q as usize - 1]
    }

    fn posterior_mean(&self, belief: &[f64; L], values: &[f64; L]) -> f64 {
        belief.iter().zip(values).map(|(b, v)| b * v).sum()
    }

    /// Distribution of the next token in `state`.
    pub fn distribution(&self, state: &OracleState) -> Result<Vec<f64>, OracleError> {
        let mut out = vec![0.0; self.vocab_len];
        let ids = &self.ids;
        let c = &self.world.config;
        let days = |secs: i64| secs as f64 / 86_400.0;
        let mut one = |t: TokenId| out[t as usize] = 1.0;
        match &state.phase {
            Phase::Start => one(ids.ed_start),
            Phase::AfterEdStart => add(&mut out, &self.ed_first, 1.0),
            Phase::AfterEdGap1 => one(ids.lactate),
            Phase::AfterLactate => {
                for l in 0..L {
                    out[self.q_token(self.lactate_q[l]) as usize] += state.belief[l];
                }
            }
            Phase::AfterLactateQ => add(&mut out, &self.ed_second, 1.0),
            Phase::AfterEdGap2 => one(ids.inp_start),
            Phase::AfterInpStart => add(&mut out, &self.types, 1.0),
            Phase::AfterType => add(&mut out, &self.insurances, 1.0),
            Phase::AfterInsurance => self.code_next(CodeSet::Primary, &[], &mut out, 1.0),
            Phase::InCode(set, prefix) => self.code_next(*set, prefix, &mut out, 1.0),
            Phase::AfterDiagnosis => {
                self.code_next(CodeSet::Secondary, &[], &mut out, world::SECONDARY_CONTINUE);
                out[ids.close_gap as usize] += 1.0 - world::SECONDARY_CONTINUE;
            }
            Phase::AfterCloseGap => one(ids.ed_end),
            Phase::AfterEdEnd => one(self.q_token(self.ed_los.bin(days(state.elapsed)))),
            Phase::Idle => {
                let gaps = if state.in_icu { &self.icu_gaps } else { &self.ward_gaps };
                add(&mut out, gaps, 1.0);
            }
            Phase::AfterStepGap => {
                if state.in_icu {
                    let h = self.world.icu_exit;
                    let m = self.posterior_mean(&state.belief, &self.mortality);
                    out[ids.death as usize] += h * m;
                    out[ids.icu_end as usize] += h * (1.0 - m);
                    self.routine_first(&mut out, 1.0 - h);
                } else {
                    let (t, u) = (c.ward_termination_prob, c.icu_prob);
                    let m = self.posterior_mean(&state.belief, &self.ward_death);
                    out[ids.death as usize] += t * m;
                    out[ids.inp_end as usize] += t * (1.0 - m);
                    out[ids.icu_start as usize] += u;
                    self.routine_first(&mut out, 1.0 - t - u);
                }
            }
            Phase::AfterLab(i) => {
                for (q, p) in self.labs[*i].2.iter().enumerate() {
                    out[self.quantiles[q] as usize] += p;
                }
            }
            Phase::AfterBp => {
                for (q, p) in self.systolic.iter().enumerate() {
                    out[self.quantiles[q] as usize] += p;
                }
            }
            Phase::AfterBpSystolic => {
                for (q, p) in self.diastolic.iter().enumerate() {
                    out[self.quantiles[q] as usize] += p;
                }
            }
            Phase::AfterInpEnd => {
                one(self.q_token(self.inpatient_los.bin(days(state.elapsed - state.inpatient_start))))
            }
            Phase::AfterInpLosQ => add(&mut out, &self.destinations, 1.0),
            Phase::AfterDischarged => {
                let drg = self
                    .drg_of_primary
                    .get(&state.primary)
                    .ok_or_else(|| OracleError::BadContext("no primary diagnosis".into()))?;
                out[*drg as usize] = 1.0;
            }
            Phase::AfterDrg => {
                let r = c.readmit_30d_prob;
                let g = self.world.later_admission;
                add(&mut out, &self.readmit_gaps, r);
                add(&mut out, &self.later_gaps, (1.0 - r) * g);
                out[ids.eot as usize] += (1.0 - r) * (1.0 - g);
            }
            Phase::AfterReadmitGap => one(ids.ed_start),
            Phase::AfterSixMonth => {
                out[ids.six_month as usize] += world::SIX_MONTH_REPEAT;
                out[ids.ed_start as usize] += 1.0 - world::SIX_MONTH_REPEAT;
            }
            Phase::AfterIcuStart => add(&mut out, &self.icu_types, 1.0),
            Phase::AfterIcuType => one(ids.sofa),
            Phase::AfterSofa => {
                for l in 0..L {
                    for q in 0..NQ {
                        out[self.quantiles[q] as usize] += state.belief[l] * self.sofa_q[l][q];
                    }
                }
            }
            Phase::AfterIcuEnd => one(self.q_token(self.icu_los.bin(days(state.elapsed - state.icu_start)))),
            Phase::AfterDeath => one(ids.eot),
            Phase::Ended => return Err(OracleError::Ended),
        }
        Ok(out)
    }

    fn update(&self, state: &mut OracleState, likelihood: impl Fn(usize) -> f64) -> Result<(), OracleError> {
        let mut total = 0.0;
        for l in 0..L {
            state.belief[l] *= likelihood(l);
            total += state.belief[l];
        }
        if !(total > 0.0) {
            return Err(OracleError::BadContext("observation has zero probability".into()));
        }
        for b in &mut state.belief {
            *b /= total;
        }
        Ok(())
    }

    fn quantile_of(&self, t: TokenId) -> Option<u8> {
        self.quantiles.iter().position(|&q| q == t).map(|i| i as u8 + 1)
    }

    /// Advances `state` by one token, rejecting tokens the world cannot emit.
    pub fn observe(&self, state: &mut OracleState, token: TokenId) -> Result<(), OracleError> {
        let p = self.distribution(state)?;
        if (token as usize) >= p.len() || p[token as usize] <= 0.0 {
            return Err(OracleError::UnexpectedToken {
                token: token.to_string(),
                phase: format!("{:?}", state.phase),
            });
        }
        if let Some(secs) = self.interval.get(&token) {
            state.elapsed += secs;
        }
        let ids = &self.ids;
        let next = match std::mem::replace(&mut state.phase, Phase::Ended) {
            Phase::Start | Phase::AfterReadmitGap => self.new_admission(state),
            Phase::AfterSixMonth if token == ids.ed_start => self.new_admission(state),
            Phase::AfterSixMonth => Phase::AfterSixMonth,
            Phase::AfterEdStart => Phase::AfterEdGap1,
            Phase::AfterEdGap1 => Phase::AfterLactate,
            Phase::AfterLactate => {
                let q = self.quantile_of(token).expect("checked by distribution");
                let lq = self.lactate_q;
                self.update(state, |l| (lq[l] == q) as u8 as f64)?;
                Phase::AfterLactateQ
            }
            Phase::AfterLactateQ => Phase::AfterEdGap2,
            Phase::AfterEdGap2 => {
                state.inpatient_start = state.elapsed;
                Phase::AfterInpStart
            }
            Phase::AfterInpStart => Phase::AfterType,
            Phase::AfterType => Phase::AfterInsurance,
            Phase::AfterInsurance => self.in_code(state, CodeSet::Primary, vec![token]),
            Phase::InCode(set, mut prefix) => {
                prefix.push(token);
                self.in_code(state, set, prefix)
            }
            Phase::AfterDiagnosis if token == ids.close_gap => Phase::AfterCloseGap,
            Phase::AfterDiagnosis => self.in_code(state, CodeSet::Secondary, vec![token]),
            Phase::AfterCloseGap => Phase::AfterEdEnd,
            Phase::AfterEdEnd => Phase::Idle,
            Phase::Idle => Phase::AfterStepGap,
            Phase::AfterStepGap => {
                if token == ids.death {
                    Phase::AfterDeath
                } else if token == ids.inp_end {
                    Phase::AfterInpEnd
                } else if token == ids.icu_start {
                    state.in_icu = true;
                    state.icu_start = state.elapsed;
                    Phase::AfterIcuStart
                } else if token == ids.icu_end {
                    state.in_icu = false;
                    let m = self.mortality;
                    self.update(state, |l| 1.0 - m[l])?;
                    Phase::AfterIcuEnd
                } else if token == ids.bp {
                    Phase::AfterBp
                } else if let Some(i) = self.labs.iter().position(|(t, _, _)| *t == token) {
                    Phase::AfterLab(i)
                } else if self.transfers.iter().any(|(t, _)| *t == token) {
                    Phase::Idle
                } else if self.codes[&key(CodeSet::Medication)].iter().any(|(c, _)| c[0] == token) {
                    self.in_code(state, CodeSet::Medication, vec![token])
                } else {
                    self.in_code(state, CodeSet::Procedure, vec![token])
                }
            }
            Phase::AfterLab(_) => Phase::Idle,
            Phase::AfterBp => Phase::AfterBpSystolic,
            Phase::AfterBpSystolic => Phase::Idle,
            Phase::AfterInpEnd => Phase::AfterInpLosQ,
            Phase::AfterInpLosQ => Phase::AfterDischarged,
            Phase::AfterDischarged => Phase::AfterDrg,
            Phase::AfterDrg if token == ids.eot => Phase::Ended,
            Phase::AfterDrg if token == ids.six_month => Phase::AfterSixMonth,
            Phase::AfterDrg => Phase::AfterReadmitGap,
            Phase::AfterIcuStart => Phase::AfterIcuType,
            Phase::AfterIcuType => Phase::AfterSofa,
            Phase::AfterSofa => {
                let q = self.quantile_of(token).expect("checked by distribution") as usize;
                let sq = self.sofa_q;
                self.update(state, |l| sq[l][q - 1])?;
                Phase::Idle
            }
            Phase::AfterIcuEnd => Phase::Idle,
            Phase::AfterDeath => Phase::Ended,
            Phase::Ended => return Err(OracleError::Ended),
        };
        state.phase = next;
        Ok(())
    }

    fn new_admission(&self, state: &mut OracleState) -> Phase {
        *state = self.initial_state();
        Phase::AfterEdStart
    }

    fn in_code(&self, state: &mut OracleState, set: CodeSet, prefix: Vec<TokenId>) -> Phase {
        if !self.code_complete(set, &prefix) {
            return Phase::InCode(set, prefix);
        }
        match set {
            CodeSet::Primary => {
                state.primary = prefix;
                Phase::AfterDiagnosis
            }
            CodeSet::Secondary => Phase::AfterDiagnosis,
            CodeSet::Medication | CodeSet::Procedure => Phase::Idle,
        }
    }
}

impl OracleState {
    /// Posterior over the informative lab level (index 0 = level 1).
    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn has_ended(&self) -> bool {
        self.phase == Phase::Ended
    }
}

fn add(out: &mut [f64], table: &[(TokenId, f64)], scale: f64) {
    for (t, p) in table {
        out[*t as usize] += scale * p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::load_tables;
    use crate::tokenizer::TokenizerConfig;

    #[test]
    fn every_generated_token_is_possible() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig { n_patients: 150, seed: 5, ..Default::default() };
        super::super::gen_cohort(&config, dir.path()).unwrap();
        let cohort = load_tables(dir.path()).unwrap();
        let tok = Tokenizer::fit(cohort.patients.values(), TokenizerConfig::default()).unwrap();
        let oracle = MarkovOracle::new(&config, &tok).unwrap();
        let mut n = 0;
        for record in cohort.records() {
            let (pht, _) = tok.build_pht(record).unwrap();
            let mut state = oracle.initial_state();
            for &t in &pht.body {
                let p = oracle.distribution(&state).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{:?} sums to {}", state.phase, p.iter().sum::<f64>());
                assert!(p[t as usize] > 0.0, "{:?} then {:?}", state.phase, tok.vocab.token(t));
                oracle.observe(&mut state, t).unwrap();
                n += 1;
            }
            let p = oracle.distribution(&state).unwrap();
            assert!(p[tok.vocab.id(names::END_OF_TIMELINE).unwrap() as usize] > 0.0);
            // the context parser agrees with the incremental state
            let parsed = oracle.next_distribution(&pht.tokens(), &tok).unwrap();
            assert_eq!(parsed, p);
        }
        assert!(n > 5_000, "{n}");
    }
}
