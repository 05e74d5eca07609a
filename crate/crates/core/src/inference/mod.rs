//! Monte-Carlo task estimation by simulating timeline continuations from a
//! next-token distribution.

pub mod output;
pub mod sources;
pub mod tasks;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{TimelineAnchor, TokenId, HEADER_LEN};

pub use sources::{ModelSource, OracleSource};
pub use tasks::{extract_cases, run_case, Case, Label, Task, TaskResult};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("distribution source: {0}")]
    Source(String),
    #[error("invalid generation parameters: {0}")]
    Params(String),
    #[error("empty context")]
    EmptyContext,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Oracle(#[from] crate::synth::OracleError),
    #[error(transparent)]
    Tokenizer(#[from] crate::tokenizer::TokenizerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A timeline prefix: static header, the anchor it was computed from, and
/// the body tokens up to the decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub header: [TokenId; HEADER_LEN],
    pub anchor: TimelineAnchor,
    pub body: Vec<TokenId>,
}

impl Context {
    pub fn tokens(&self) -> Vec<TokenId> {
        let mut t = self.header.to_vec();
        t.extend_from_slice(&self.body);
        t
    }
}

/// Anything that yields a next-token distribution for a context.
pub trait DistributionSource: Sync {
    fn vocab_len(&self) -> usize;

    /// Opens an incremental session positioned after `context`.
    fn session<'a>(&'a self, context: &Context) -> Result<Box<dyn SourceSession<'a> + 'a>, InferenceError>;

    fn next_token_distribution(&self, context: &Context) -> Result<Vec<f64>, InferenceError> {
        self.session(context)?.distribution()
    }
}

pub trait SourceSession<'a>: Send {
    /// Distribution of the next token (sums to 1).
    fn distribution(&mut self) -> Result<Vec<f64>, InferenceError>;
    fn push(&mut self, token: TokenId) -> Result<(), InferenceError>;
    /// Independent copy of the current state.
    fn fork(&self) -> Box<dyn SourceSession<'a> + 'a>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub replicates: usize,
    pub seed: u64,
    pub los_aggregate: Aggregate,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 1.0,
            max_new_tokens: 1000,
            replicates: 20,
            seed: 0,
            los_aggregate: Aggregate::Mean,
        }
    }
}

/// How replicate stay lengths are combined into one LOS estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Median,
}

impl Aggregate {
    /// `None` for an empty slice.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match self {
            Aggregate::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
            Aggregate::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
            }
        }
    }
}

impl std::str::FromStr for Aggregate {
    type Err = InferenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            _ => Err(InferenceError::Params(format!("unknown aggregate {s:?}, expected mean or median"))),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(InferenceError::Params("temperature must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(InferenceError::Params("at least one replicate is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopTokenHit,
    TimeBudgetExceeded,
    TokenCap,
}

impl StopReason {
    pub const ALL: [StopReason; 3] = [StopReason::StopTokenHit, StopReason::TimeBudgetExceeded, StopReason::TokenCap];

    pub fn name(self) -> &'static str {
        match self {
            StopReason::StopTokenHit => "stop_token_hit",
            StopReason::TimeBudgetExceeded => "time_budget_exceeded",
            StopReason::TokenCap => "token_cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub tokens: Vec<TokenId>,
    pub stop: StopReason,
}

/// Draws an index from `probs` tempered by `temperature`.
pub fn sample_index(probs: &[f64], temperature: f64, rng: &mut impl Rng) -> Result<usize, InferenceError> {
    let tempered: Vec<f64>;
    let p: &[f64] = if temperature == 1.0 {
        probs
    } else {
        tempered = probs.iter().map(|&x| if x > 0.0 { x.powf(1.0 / temperature) } else { 0.0 }).collect();
        &tempered
    };
    let total: f64 = p.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(InferenceError::Source("distribution has no mass".into()));
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            last = i;
            if u < x {
                return Ok(i);
            }
            u -= x;
        }
    }
    Ok(last)
}

/// Samples tokens from `session` until `stop` returns a reason or
/// `max_new_tokens` have been drawn. The session is advanced past every
/// generated token.
pub fn generate<'a>(
    session: &mut dyn SourceSession<'a>,
    stop: &mut dyn FnMut(TokenId) -> Option<StopReason>,
    params: &GenerationParams,
    rng: &mut impl Rng,
) -> Result<Trace, InferenceError> {
    params.validate()?;
    let mut tokens = Vec::new();
    while tokens.len() < params.max_new_tokens {
        let p = session.distribution()?;
        let t = sample_index(&p, params.temperature, rng)? as TokenId;
        tokens.push(t);
        if let Some(reason) = stop(t) {
            return Ok(Trace { tokens, stop: reason });
        }
        session.push(t)?;
    }
    Ok(Trace { tokens, stop: StopReason::TokenCap })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// A source with a fixed next-token distribution.
    pub struct Constant(pub Vec<f64>);

    struct ConstSession(Vec<f64>);

    impl<'a> SourceSession<'a> for ConstSession {
        fn distribution(&mut self) -> Result<Vec<f64>, InferenceError> {
            Ok(self.0.clone())
        }
        fn push(&mut self, _: TokenId) -> Result<(), InferenceError> {
            Ok(())
        }
        fn fork(&self) -> Box<dyn SourceSession<'a> + 'a> {
            Box::new(ConstSession(self.0.clone()))
        }
    }

    impl DistributionSource for Constant {
        fn vocab_len(&self) -> usize {
            self.0.len()
        }
        fn session<'a>(&'a self, _: &Context) -> Result<Box<dyn SourceSession<'a> + 'a>, InferenceError> {
            Ok(Box::new(ConstSession(self.0.clone())))
        }
    }

    pub fn context(body: Vec<TokenId>) -> Context {
        Context { header: [0; HEADER_LEN], anchor: TimelineAnchor { start_age: 50.0, start_year_offset: 3.0 }, body }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::{context, Constant};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn absorbing_token_stops_every_replicate() {
        let src = Constant(vec![0.0, 0.0, 1.0]);
        let mut s = src.session(&context(vec![1])).unwrap();
        let params = GenerationParams::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = generate(s.as_mut(), &mut |t| (t == 2).then_some(StopReason::StopTokenHit), &params, &mut rng)
                .unwrap();
            assert_eq!(t.tokens, vec![2]);
            assert_eq!(t.stop, StopReason::StopTokenHit);
        }
    }

    #[test]
    fn any_token_stop_yields_one_token_and_cap_applies() {
        let src = Constant(vec![0.5, 0.5]);
        let mut s = src.session(&context(vec![1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GenerationParams::default();
        let t = generate(s.as_mut(), &mut |_| Some(StopReason::StopTokenHit), &p, &mut rng).unwrap();
        assert_eq!(t.tokens.len(), 1);
        let p = GenerationParams { max_new_tokens: 7, ..Default::default() };
        let t = generate(s.as_mut(), &mut |_| None, &p, &mut rng).unwrap();
        assert_eq!((t.tokens.len(), t.stop), (7, StopReason::TokenCap));
    }

    #[test]
    fn fixed_seed_reproduces_sequence() {
        let src = Constant(vec![0.2, 0.3, 0.5]);
        let run = || {
            let mut s = src.session(&context(vec![1])).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let p = GenerationParams { max_new_tokens: 50, ..Default::default() };
            generate(s.as_mut(), &mut |_| None, &p, &mut rng).unwrap().tokens
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sampling_frequencies_follow_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.1, 0.0, 0.6, 0.3];
        let n = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_index(&p, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        for i in 0..4 {
            let se = (p[i] * (1.0 - p[i]) / n as f64).sqrt();
            assert!((counts[i] as f64 / n as f64 - p[i]).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn high_temperature_flattens() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            hits += (sample_index(&[0.9, 0.1], 1e6, &mut rng).unwrap() == 1) as usize;
        }
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.02);
        assert!(GenerationParams { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(GenerationParams { replicates: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn aggregates() {
        assert_eq!(Aggregate::Mean.apply(&[1.0, 2.0, 6.0]), Some(3.0));
        assert_eq!(Aggregate::Median.apply(&[6.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(Aggregate::Median.apply(&[4.0, 1.0, 2.0, 8.0]), Some(3.0));
        assert_eq!(Aggregate::Median.apply(&[]), None);
        assert_eq!("median".parse::<Aggregate>().unwrap(), Aggregate::Median);
        assert!("mode".parse::<Aggregate>().is_err());
    }
}
