//! A small GPT-2 style decoder over timeline tokens, with a hand-written
//! backward pass.

pub mod gpt;
pub mod kernels;
pub mod session;
pub mod train;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gpt::{loss_and_grad, Batch};
pub use kernels::Scalar;
pub use session::DecodeSession;
pub use train::{train, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds context length {ctx}")]
    ContextOverflow { len: usize, ctx: usize },
    #[error("no training windows")]
    NoData,
    #[error(transparent)]
    Tokenizer(#[from] crate::tokenizer::TokenizerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub ctx_len: usize,
    /// Output projection shares the token embedding.
    pub tie_embeddings: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size == 0 || self.n_layer == 0 || self.d_model == 0 || self.ctx_len == 0 {
            return bad("all sizes must be positive");
        }
        if self.n_head == 0 || self.d_model % self.n_head != 0 {
            return bad("d_model must be a multiple of n_head");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let (v, c, d, l) = (self.vocab_size, self.ctx_len, self.d_model, self.n_layer);
        let head = if self.tie_embeddings { 0 } else { v * d };
        v * d + c * d + l * (12 * d * d + 13 * d) + 2 * d + head
    }
}

/// Offsets of one transformer block's tensors in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct BlockLayout {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub wte: usize,
    pub wpe: usize,
    pub blocks: Vec<BlockLayout>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    /// Offset of the untied output matrix (`d × V`), if any.
    pub lm_head: Option<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let (v, c, d) = (cfg.vocab_size, cfg.ctx_len, cfg.d_model);
        let mut at = 0usize;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let wte = take(v * d);
        let wpe = take(c * d);
        let blocks = (0..cfg.n_layer)
            .map(|_| BlockLayout {
                ln1_g: take(d),
                ln1_b: take(d),
                w_qkv: take(d * 3 * d),
                b_qkv: take(3 * d),
                w_o: take(d * d),
                b_o: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w_fc: take(d * 4 * d),
                b_fc: take(4 * d),
                w_proj: take(4 * d * d),
                b_proj: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let lm_head = (!cfg.tie_embeddings).then(|| take(d * v));
        Layout { wte, wpe, blocks, lnf_g, lnf_b, lm_head, total: at }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub params: Vec<T>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ETHOSCKP";
const CHECKPOINT_VERSION: u32 = 1;

impl<T: Scalar> Model<T> {
    /// Normal(0, 0.02) weights, residual projections scaled by 1/sqrt(2L),
    /// unit layer-norm gains, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model<T>, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |std: f64| {
            let z: f64 = StandardNormal.sample(&mut rng);
            kernels::c::<T>(std * z)
        };
        let d = config.d_model;
        let std = 0.02;
        let resid_std = std / (2.0 * config.n_layer as f64).sqrt();
        let mut fill = |params: &mut [T], at: usize, n: usize, s: f64| {
            for p in &mut params[at..at + n] {
                *p = normal(s);
            }
        };
        fill(&mut params, layout.wte, config.vocab_size * d, std);
        fill(&mut params, layout.wpe, config.ctx_len * d, std);
        for b in &layout.blocks {
            fill(&mut params, b.w_qkv, 3 * d * d, std);
            fill(&mut params, b.w_o, d * d, resid_std);
            fill(&mut params, b.w_fc, 4 * d * d, std);
            fill(&mut params, b.w_proj, 4 * d * d, resid_std);
        }
        if let Some(h) = layout.lm_head {
            fill(&mut params, h, d * config.vocab_size, std);
        }
        for b in &layout.blocks {
            params[b.ln1_g..b.ln1_g + d].fill(T::one());
            params[b.ln2_g..b.ln2_g + d].fill(T::one());
        }
        params[layout.lnf_g..layout.lnf_g + d].fill(T::one());
        Ok(Model { config, params })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Row `token` of the input embedding.
    pub fn token_embedding(&self, token: usize) -> &[T] {
        let d = self.config.d_model;
        &self.params[token * d..(token + 1) * d]
    }
}

impl Model<f32> {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_vec(&self.config)?;
        let mut buf = Vec::with_capacity(24 + json.len() + 4 * self.params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model<f32>, ModelError> {
        let buf = fs::read(path)?;
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        if buf.len() < 16 || &buf[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let jlen = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
        let json = buf.get(16..16 + jlen).ok_or_else(|| bad("truncated config"))?;
        let config: ModelConfig = serde_json::from_slice(json)?;
        config.validate()?;
        let at = 16 + jlen;
        let n = u64::from_le_bytes(buf.get(at..at + 8).ok_or_else(|| bad("truncated"))?.try_into().expect("8 bytes"))
            as usize;
        if n != config.param_count() || buf.len() != at + 8 + 4 * n {
            return Err(bad("parameter count does not match config"));
        }
        let params = buf[at + 8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok(Model { config, params })
    }

    /// Input embedding rows for `ids`, in the requested order.
    pub fn export_embeddings(&self, ids: &[u32]) -> Result<Vec<Vec<f32>>, ModelError> {
        ids.iter()
            .map(|&t| {
                if t as usize >= self.config.vocab_size {
                    return Err(ModelError::TokenOutOfRange { token: t, vocab: self.config.vocab_size });
                }
                Ok(self.token_embedding(t as usize).to_vec())
            })
            .collect()
    }

    pub fn to_f64(&self) -> Model<f64> {
        Model { config: self.config.clone(), params: self.params.iter().map(|&p| p as f64).collect() }
    }
}
