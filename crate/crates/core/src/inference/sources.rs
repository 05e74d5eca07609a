//! The two distribution sources: a trained model and the synthetic world's
//! exact Markov oracle.

use super::{Context, DistributionSource, InferenceError, SourceSession};
use crate::model::session::probabilities;
use crate::model::{DecodeSession, Model};
use crate::synth::{MarkovOracle, OracleState};
use crate::tokenizer::{TokenClass, TokenId, Tokenizer, HEADER_LEN};

pub struct OracleSource<'t> {
    pub oracle: MarkovOracle,
    tokenizer: &'t Tokenizer,
}

impl<'t> OracleSource<'t> {
    pub fn new(oracle: MarkovOracle, tokenizer: &'t Tokenizer) -> Self {
        OracleSource { oracle, tokenizer }
    }
}

struct OracleSession<'a> {
    oracle: &'a MarkovOracle,
    state: OracleState,
}

impl<'a> SourceSession<'a> for OracleSession<'a> {
    fn distribution(&mut self) -> Result<Vec<f64>, InferenceError> {
        Ok(self.oracle.distribution(&self.state)?)
    }

    fn push(&mut self, token: TokenId) -> Result<(), InferenceError> {
        Ok(self.oracle.observe(&mut self.state, token)?)
    }

    fn fork(&self) -> Box<dyn SourceSession<'a> + 'a> {
        Box::new(OracleSession { oracle: self.oracle, state: self.state.clone() })
    }
}

impl DistributionSource for OracleSource<'_> {
    fn vocab_len(&self) -> usize {
        self.oracle.vocab_len()
    }

    fn session<'a>(&'a self, context: &Context) -> Result<Box<dyn SourceSession<'a> + 'a>, InferenceError> {
        let classes: Vec<TokenClass> =
            context.body.iter().map(|&t| self.tokenizer.vocab.class(t).unwrap_or(TokenClass::Special)).collect();
        let state = self.oracle.parse(&context.body, &classes)?;
        Ok(Box::new(OracleSession { oracle: &self.oracle, state }))
    }
}

/// Next-token distributions from a trained model. Contexts longer than the
/// model window are cut to their most recent tokens behind a header whose
/// age and year are advanced over the dropped part; when generation fills
/// the window it is re-cut to `refill` tokens.
pub struct ModelSource<'m> {
    model: &'m Model<f32>,
    tokenizer: &'m Tokenizer,
    refill: usize,
}

impl<'m> ModelSource<'m> {
    pub fn new(model: &'m Model<f32>, tokenizer: &'m Tokenizer) -> Result<Self, InferenceError> {
        if model.config.vocab_size != tokenizer.vocab.len() {
            return Err(InferenceError::Source(format!(
                "model vocabulary {} does not match tokenizer vocabulary {}",
                model.config.vocab_size,
                tokenizer.vocab.len()
            )));
        }
        let ctx = model.config.ctx_len;
        let refill = (ctx * 3 / 4).max(HEADER_LEN + 1).min(ctx);
        Ok(ModelSource { model, tokenizer, refill })
    }
}

#[derive(Clone)]
struct ModelSession<'m> {
    tokenizer: &'m Tokenizer,
    context: Context,
    decoder: DecodeSession<'m, f32>,
    refill: usize,
}

impl<'m> ModelSession<'m> {
    fn load_window(&mut self, len: usize) -> Result<(), InferenceError> {
        let c = &self.context;
        let window = if c.body.is_empty() {
            c.header.to_vec()
        } else {
            self.tokenizer.window(&c.header, c.anchor, &c.body, c.body.len() - 1, len)?
        };
        self.decoder.reset();
        self.decoder.feed(&window)?;
        Ok(())
    }
}

impl<'m> SourceSession<'m> for ModelSession<'m> {
    fn distribution(&mut self) -> Result<Vec<f64>, InferenceError> {
        if self.decoder.is_empty() {
            return Err(InferenceError::EmptyContext);
        }
        Ok(probabilities(self.decoder.logits(), 1.0))
    }

    fn push(&mut self, token: TokenId) -> Result<(), InferenceError> {
        self.context.body.push(token);
        if self.decoder.len() >= self.decoder.capacity() {
            self.load_window(self.refill)
        } else {
            self.decoder.push(token)?;
            Ok(())
        }
    }

    fn fork(&self) -> Box<dyn SourceSession<'m> + 'm> {
        Box::new(self.clone())
    }
}

impl DistributionSource for ModelSource<'_> {
    fn vocab_len(&self) -> usize {
        self.model.config.vocab_size
    }

    fn session<'a>(&'a self, context: &Context) -> Result<Box<dyn SourceSession<'a> + 'a>, InferenceError> {
        let mut s = ModelSession {
            tokenizer: self.tokenizer,
            context: context.clone(),
            decoder: DecodeSession::new(self.model),
            refill: self.refill,
        };
        s.load_window(self.model.config.ctx_len)?;
        Ok(Box::new(s))
    }
}
