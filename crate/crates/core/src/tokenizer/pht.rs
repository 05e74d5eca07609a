//! Patient health timelines: six static tokens followed by the event body.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::interval::{TimeIntervalScheme, DAYS_PER_YEAR, MINUTES_PER_YEAR};
use super::quantile::QuantileBinner;
use super::statics::encode_age_bucket;
use super::vocab::{names, TokenClass, TokenId, Vocabulary};
use super::{categories, drg_token, event_pieces, Piece, Tokenizer, TokenizerError};
use crate::ingest::{PatientId, PatientRecord, StaticInfo};

pub const HEADER_LEN: usize = 6;
/// Header slots rewritten when a window starts later in the timeline.
pub const AGE_SLOT: usize = 4;
pub const YEAR_SLOT: usize = 5;

/// Age and calendar offset at the first body token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineAnchor {
    pub start_age: f64,
    pub start_year_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientTimeline {
    pub patient_id: PatientId,
    pub header: [TokenId; HEADER_LEN],
    pub body: Vec<TokenId>,
    pub anchor: TimelineAnchor,
    /// Age of each body token; interval tokens carry the time of the event
    /// they lead into. `None` once stripped.
    pub timestamps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhtStats {
    pub events_total: usize,
    pub events_encoded: usize,
    pub skipped: BTreeMap<String, usize>,
    pub negative_gaps: usize,
    /// Data tokens replaced by an `UNKNOWN`-style fallback.
    pub fallbacks: usize,
    /// Code parts or suffixes dropped because they were unseen in training.
    pub dropped_code_parts: usize,
}

impl PhtStats {
    pub fn merge(&mut self, other: &PhtStats) {
        self.events_total += other.events_total;
        self.events_encoded += other.events_encoded;
        for (k, v) in &other.skipped {
            *self.skipped.entry(k.clone()).or_insert(0) += v;
        }
        self.negative_gaps += other.negative_gaps;
        self.fallbacks += other.fallbacks;
        self.dropped_code_parts += other.dropped_code_parts;
    }

    fn skip(&mut self, reason: &str) {
        *self.skipped.entry(reason.to_string()).or_insert(0) += 1;
    }
}

impl PatientTimeline {
    pub fn len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    /// Drops the pre-strip timestamps.
    pub fn strip(mut self) -> Self {
        self.timestamps = None;
        self
    }

    /// Header + body as one sequence.
    pub fn tokens(&self) -> Vec<TokenId> {
        let mut out = self.header.to_vec();
        out.extend_from_slice(&self.body);
        out
    }
}

pub(crate) fn header_ids(
    statics: &StaticInfo,
    age: f64,
    year_offset: f64,
    binner: &QuantileBinner,
    vocab: &Vocabulary,
    n_age_buckets: usize,
) -> Result<[TokenId; HEADER_LEN], TokenizerError> {
    let bmi = match (statics.bmi, binner.category(categories::BMI)) {
        (Some(v), Some(bins)) => names::bmi(bins.bin(v)),
        _ => names::BMI_UNKNOWN.to_string(),
    };
    Ok([
        vocab.expect_id(statics.sex.token())?,
        vocab.expect_id(statics.race.token())?,
        vocab.expect_id(statics.marital.token())?,
        vocab.expect_id(&bmi)?,
        vocab.expect_id(&encode_age_bucket(age, n_age_buckets))?,
        vocab.expect_id(&encode_age_bucket(year_offset, n_age_buckets))?,
    ])
}

/// Resolves one event's pieces to ids. `Ok(None)` means the event is
/// skipped (reason recorded in `stats`).
fn resolve(
    pieces: Vec<Piece>,
    binner: &QuantileBinner,
    vocab: &Vocabulary,
    stats: &mut PhtStats,
) -> Result<Option<Vec<TokenId>>, TokenizerError> {
    let mut out = Vec::with_capacity(pieces.len() + 2);
    for p in pieces {
        match p {
            Piece::Fixed(t) => out.push(vocab.expect_id(t)?),
            Piece::Data { token, fallback, .. } => match (vocab.id(&token), fallback) {
                (Some(id), _) => out.push(id),
                (None, Some(f)) => {
                    stats.fallbacks += 1;
                    out.push(vocab.expect_id(f)?);
                }
                (None, None) => {
                    stats.skip("unknown_token");
                    return Ok(None);
                }
            },
            Piece::Quantile { category, value } => match binner.category(&category) {
                Some(bins) => out.push(vocab.expect_id(&names::quantile(bins.bin(value)))?),
                None => {
                    stats.skip("unknown_category");
                    return Ok(None);
                }
            },
            Piece::SofaQuantile(q) => out.push(vocab.expect_id(&names::quantile(q))?),
            Piece::Code { tokens, unknown } => {
                let mut it = tokens.into_iter();
                let (stem, _) = it.next().expect("codes have a stem");
                match vocab.id(&stem) {
                    Some(id) => {
                        out.push(id);
                        for (part, _) in it {
                            match vocab.id(&part) {
                                Some(id) => out.push(id),
                                None => stats.dropped_code_parts += 1,
                            }
                        }
                    }
                    None => {
                        stats.fallbacks += 1;
                        out.push(vocab.expect_id(unknown)?);
                    }
                }
            }
            Piece::Drg(code) => {
                let id = code.and_then(|c| vocab.id(&drg_token(&c)));
                if id.is_none() {
                    stats.fallbacks += 1;
                }
                out.push(id.map_or_else(|| vocab.expect_id(names::UNKNOWN_DRG), Ok)?);
            }
        }
    }
    Ok(Some(out))
}

/// Encodes one patient's record. Each event expands to its token group and
/// interval tokens are inserted for every gap of five minutes or more.
pub fn build_pht(
    record: &PatientRecord,
    binner: &QuantileBinner,
    vocab: &Vocabulary,
    scheme: &TimeIntervalScheme,
    n_age_buckets: usize,
) -> Result<(PatientTimeline, PhtStats), TokenizerError> {
    let mut stats = PhtStats::default();
    let mut body = Vec::new();
    let mut timestamps = Vec::new();
    let mut last: Option<f64> = None;
    let mut first: Option<f64> = None;
    let interval_ids: Vec<TokenId> = scheme
        .buckets()
        .iter()
        .map(|b| vocab.expect_id(&b.name))
        .collect::<Result<_, _>>()?;

    for event in &record.events {
        stats.events_total += 1;
        let pieces = match event_pieces(&event.kind) {
            Ok(p) => p,
            Err(_) => {
                stats.skip("invalid_payload");
                continue;
            }
        };
        let Some(ids) = resolve(pieces, binner, vocab, &mut stats)? else {
            continue;
        };
        if let Some(prev) = last {
            let gap = (event.timestamp - prev) * MINUTES_PER_YEAR;
            if gap < 0.0 {
                stats.negative_gaps += 1;
            }
            for b in scheme.encode(gap) {
                body.push(interval_ids[b]);
                timestamps.push(event.timestamp);
            }
        }
        first.get_or_insert(event.timestamp);
        last = Some(event.timestamp);
        stats.events_encoded += 1;
        timestamps.extend(std::iter::repeat(event.timestamp).take(ids.len()));
        body.extend(ids);
    }

    let Some(start_age) = first else {
        return Err(TokenizerError::EmptyTimeline(record.patient_id));
    };
    let anchor = TimelineAnchor {
        start_age,
        start_year_offset: record.statics.start_year_offset + (start_age - record.statics.age_at_start),
    };
    let header = header_ids(
        &record.statics,
        anchor.start_age,
        anchor.start_year_offset,
        binner,
        vocab,
        n_age_buckets,
    )?;
    Ok((
        PatientTimeline { patient_id: record.patient_id, header, body, anchor, timestamps: Some(timestamps) },
        stats,
    ))
}

impl Tokenizer {
    /// Header for a window whose first body token follows `prefix`: the age
    /// and year slots advance by the representative durations of the
    /// interval tokens in `prefix`.
    pub fn shifted_header(
        &self,
        header: &[TokenId; HEADER_LEN],
        anchor: TimelineAnchor,
        prefix: &[TokenId],
    ) -> Result<[TokenId; HEADER_LEN], TokenizerError> {
        let days: f64 = prefix.iter().filter_map(|&id| self.interval_days(id)).sum();
        let years = days / DAYS_PER_YEAR;
        let n = self.config.n_age_buckets;
        let mut out = *header;
        out[AGE_SLOT] = self.vocab.expect_id(&encode_age_bucket(anchor.start_age + years, n))?;
        out[YEAR_SLOT] = self.vocab.expect_id(&encode_age_bucket(anchor.start_year_offset + years, n))?;
        Ok(out)
    }

    /// Window ending at `body[end]` (inclusive) that fits `ctx_len`.
    pub fn window(
        &self,
        header: &[TokenId; HEADER_LEN],
        anchor: TimelineAnchor,
        body: &[TokenId],
        end: usize,
        ctx_len: usize,
    ) -> Result<Vec<TokenId>, TokenizerError> {
        if ctx_len <= HEADER_LEN {
            return Err(TokenizerError::ContextTooShort(ctx_len));
        }
        if end >= body.len() {
            return Err(TokenizerError::OutOfRange { position: end, len: body.len() });
        }
        let start = (end + 1).saturating_sub(ctx_len - HEADER_LEN);
        let h = self.shifted_header(header, anchor, &body[..start])?;
        let mut out = Vec::with_capacity(HEADER_LEN + end + 1 - start);
        out.extend_from_slice(&h);
        out.extend_from_slice(&body[start..=end]);
        Ok(out)
    }
}

/// Context window of at most `ctx_len` tokens ending at body position
/// `end_position` (inclusive), with the static header substituted in front.
pub fn make_context_window(
    pht: &PatientTimeline,
    end_position: usize,
    ctx_len: usize,
    tokenizer: &Tokenizer,
) -> Result<Vec<TokenId>, TokenizerError> {
    tokenizer.window(&pht.header, pht.anchor, &pht.body, end_position, ctx_len)
}

/// Checks the token-order invariants of a body: quantiles follow a token
/// that names what they measure, SOFA is followed by its quantile, and DRG
/// tokens close a discharge group.
pub fn check_layout(body: &[TokenId], vocab: &Vocabulary) -> Result<(), String> {
    let class = |i: usize| vocab.class(body[i]).unwrap_or(TokenClass::Special);
    let is = |i: usize, name: &str| vocab.token(body[i]) == Some(name);
    for i in 0..body.len() {
        match class(i) {
            TokenClass::Quantile => {
                let ok = i > 0
                    && match class(i - 1) {
                        TokenClass::Event
                        | TokenClass::CodeStem
                        | TokenClass::CodePart
                        | TokenClass::CodeSuffix
                        | TokenClass::SofaMarker => true,
                        // diastolic value of a blood pressure reading
                        TokenClass::Quantile => i >= 2 && is(i - 2, names::BLOOD_PRESSURE),
                        _ => false,
                    };
                if !ok {
                    return Err(format!("quantile at {i} has no measured token before it"));
                }
            }
            TokenClass::SofaMarker => {
                if i + 1 >= body.len() || class(i + 1) != TokenClass::Quantile {
                    return Err(format!("SOFA marker at {i} not followed by a quantile"));
                }
            }
            TokenClass::DrgClass => {
                let ok = i >= 3
                    && is(i - 3, names::INPATIENT_END)
                    && class(i - 2) == TokenClass::Quantile
                    && vocab.token(body[i - 1]).is_some_and(|t| t.starts_with("DISCHARGED_"));
                if !ok {
                    return Err(format!("DRG at {i} does not close a discharge group"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}
