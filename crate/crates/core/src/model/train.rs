//! Next-token training on corpus windows with AdamW.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gpt::{batch_loss, loss_and_grad, Batch};
use super::{Layout, Model, ModelConfig, ModelError};
use crate::tokenizer::{Corpus, Tokenizer, HEADER_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub ctx_len: usize,
    pub tie_embeddings: bool,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub threads: usize,
    pub eval_every: usize,
    pub eval_windows: usize,
    /// Stop early once this many seconds have elapsed.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_layer: 2,
            n_head: 4,
            d_model: 64,
            ctx_len: 128,
            tie_embeddings: false,
            steps: 1500,
            batch_size: 8,
            lr: 3e-3,
            min_lr: 3e-4,
            warmup_steps: 100,
            weight_decay: 0.1,
            grad_clip: 1.0,
            seed: 0,
            threads: 1,
            eval_every: 250,
            eval_windows: 64,
            max_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            n_layer: self.n_layer,
            n_head: self.n_head,
            d_model: self.d_model,
            ctx_len: self.ctx_len,
            tie_embeddings: self.tie_embeddings,
        }
    }

    /// Warmup then cosine decay to `min_lr`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let frac = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Wall-clock; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub elapsed_s: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub val_loss: Option<f64>,
    #[serde(skip)]
    pub elapsed_s: f64,
    #[serde(skip)]
    pub tokens_per_s: f64,
    pub n_params: usize,
    /// Step whose loss was not finite; training stopped before applying it.
    pub diverged_at: Option<usize>,
    pub trace: Vec<TrainRecord>,
}

impl TrainReport {
    /// Mean training loss over the last `n` logged steps.
    pub fn tail_loss(&self, n: usize) -> f64 {
        let tail = &self.trace[self.trace.len().saturating_sub(n)..];
        tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn write_trace(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| ModelError::Io(e.into()))?;
        w.write_record(["step", "loss", "lr", "val_loss"]).map_err(|e| ModelError::Io(e.into()))?;
        for r in &self.trace {
            let val = r.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
            w.write_record([
                r.step.to_string(),
                format!("{:.6}", r.loss),
                format!("{:.6e}", r.lr),
                val,
            ])
            .map_err(|e| ModelError::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws training windows: header (shifted to the window start) followed by
/// a run of body tokens, possibly ending with the end-of-timeline token.
pub struct WindowSampler<'a> {
    corpus: &'a Corpus,
    tokenizer: &'a Tokenizer,
    ctx_len: usize,
    cumulative: Vec<usize>,
}

impl<'a> WindowSampler<'a> {
    pub fn new(corpus: &'a Corpus, tokenizer: &'a Tokenizer, ctx_len: usize) -> Result<Self, ModelError> {
        if ctx_len <= HEADER_LEN + 1 {
            return Err(ModelError::Config(format!("context of {ctx_len} leaves no room after the header")));
        }
        let mut cumulative = Vec::with_capacity(corpus.entries.len());
        let mut acc = 0;
        for i in 0..corpus.entries.len() {
            acc += corpus.body(i).len() + 1;
            cumulative.push(acc);
        }
        if acc == 0 {
            return Err(ModelError::NoData);
        }
        Ok(WindowSampler { corpus, tokenizer, ctx_len, cumulative })
    }

    /// Window of at most `ctx_len + 1` tokens for patient `i` whose body part
    /// starts at `start`.
    pub fn window(&self, i: usize, start: usize) -> Result<Vec<u32>, ModelError> {
        let e = &self.corpus.entries[i];
        let body = self.corpus.body(i);
        // body followed by the end-of-timeline token
        let stream = &self.corpus.tokens[e.offset + HEADER_LEN..=e.offset + e.len];
        let span = self.ctx_len + 1 - HEADER_LEN;
        let start = start.min(stream.len().saturating_sub(1));
        let end = (start + span).min(stream.len());
        let header = self.tokenizer.shifted_header(&self.corpus.header(i), e.anchor, &body[..start.min(body.len())])?;
        let mut out = Vec::with_capacity(HEADER_LEN + end - start);
        out.extend_from_slice(&header);
        out.extend_from_slice(&stream[start..end]);
        Ok(out)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<u32>, ModelError> {
        let total = *self.cumulative.last().expect("non-empty");
        let pick = rng.gen_range(0..total);
        let i = self.cumulative.partition_point(|&c| c <= pick);
        let n = self.corpus.body(i).len() + 1;
        let span = (self.ctx_len + 1 - HEADER_LEN) as i64;
        // a start range overhanging both ends keeps edge tokens covered
        let raw = rng.gen_range(-(span / 2)..=(n as i64 - span / 2));
        let start = raw.clamp(0, (n as i64 - span).max(0)) as usize;
        self.window(i, start)
    }
}

/// Packs windows into a batch padded to the longest one. Targets that
/// would predict a header token are masked.
pub fn make_batch(windows: &[Vec<u32>]) -> Batch {
    let seq_len = windows.iter().map(|w| w.len().saturating_sub(1)).max().unwrap_or(0);
    let n = windows.len() * seq_len;
    let mut b = Batch {
        tokens: vec![0; n],
        targets: vec![0; n],
        weights: vec![0.0; n],
        n_seq: windows.len(),
        seq_len,
    };
    for (s, w) in windows.iter().enumerate() {
        for t in 0..w.len().saturating_sub(1) {
            b.tokens[s * seq_len + t] = w[t];
            b.targets[s * seq_len + t] = w[t + 1];
            if t + 1 >= HEADER_LEN {
                b.weights[s * seq_len + t] = 1.0;
            }
        }
    }
    b
}

fn decay_mask(layout: &Layout, cfg: &ModelConfig) -> Vec<bool> {
    let d = cfg.d_model;
    let mut mask = vec![false; layout.total];
    let mut set = |at: usize, n: usize| mask[at..at + n].fill(true);
    set(layout.wte, cfg.vocab_size * d);
    for b in &layout.blocks {
        set(b.w_qkv, 3 * d * d);
        set(b.w_o, d * d);
        set(b.w_fc, 4 * d * d);
        set(b.w_proj, 4 * d * d);
    }
    if let Some(h) = layout.lm_head {
        set(h, d * cfg.vocab_size);
    }
    mask
}

struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    decay: Vec<bool>,
}

impl AdamW {
    const B1: f32 = 0.9;
    const B2: f32 = 0.95;
    const EPS: f32 = 1e-8;

    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32, wd: f32) {
        self.t += 1;
        let bc1 = 1.0 - Self::B1.powi(self.t);
        let bc2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + Self::EPS);
            let decay = if self.decay[i] { wd * params[i] } else { 0.0 };
            params[i] -= lr * (update + decay);
        }
    }
}

/// Fixed validation windows drawn with their own seed.
fn eval_batches(
    corpus: &Corpus,
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
) -> Result<Vec<Batch>, ModelError> {
    let sampler = WindowSampler::new(corpus, tokenizer, cfg.ctx_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::split::derive_seed(cfg.seed, &[0x7661_6c]));
    let windows = (0..cfg.eval_windows).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<_>, _>>()?;
    Ok(windows.chunks(cfg.batch_size.max(1)).map(make_batch).collect())
}

fn mean_loss(model: &Model<f32>, batches: &[Batch]) -> Result<f64, ModelError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in batches {
        let w = b.total_weight();
        num += batch_loss(&model.config, &model.params, b)? as f64 * w;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { f64::NAN })
}

/// Trains a fresh model on `train` windows; `val` (if any) is scored every
/// `eval_every` steps and at the end.
pub fn train(
    train: &Corpus,
    val: Option<&Corpus>,
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainReport), ModelError> {
    let mcfg = cfg.model_config(tokenizer.vocab.len());
    let mut model = Model::<f32>::init(mcfg.clone(), crate::split::derive_seed(cfg.seed, &[1]))?;
    let layout = model.layout();
    let sampler = WindowSampler::new(train, tokenizer, cfg.ctx_len)?;
    let val_batches = match val {
        Some(v) if !v.entries.is_empty() && cfg.eval_windows > 0 => Some(eval_batches(v, tokenizer, cfg)?),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(crate::split::derive_seed(cfg.seed, &[2]));
    let mut opt = AdamW {
        m: vec![0.0; layout.total],
        v: vec![0.0; layout.total],
        t: 0,
        decay: decay_mask(&layout, &mcfg),
    };
    let mut grads = Vec::new();
    let mut trace = Vec::with_capacity(cfg.steps);
    let started = Instant::now();
    let mut tokens_seen = 0usize;
    let mut val_loss = None;
    let mut diverged_at = None;
    for step in 0..cfg.steps {
        let windows = (0..cfg.batch_size).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<_>, _>>()?;
        let batch = make_batch(&windows);
        tokens_seen += batch.n_seq * batch.seq_len;
        let loss = loss_and_grad(&mcfg, &model.params, &batch, &mut grads, cfg.threads)? as f64;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            let s = (cfg.grad_clip / norm) as f32;
            grads.iter_mut().for_each(|g| *g *= s);
        }
        let lr = cfg.lr_at(step);
        opt.step(&mut model.params, &grads, lr as f32, cfg.weight_decay as f32);
        let elapsed = started.elapsed().as_secs_f64();
        let last = step + 1 == cfg.steps || cfg.max_seconds.is_some_and(|m| elapsed >= m);
        let eval_now = cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0;
        let v = match &val_batches {
            Some(b) if eval_now || last => Some(mean_loss(&model, b)?),
            _ => None,
        };
        if v.is_some() {
            val_loss = v;
        }
        trace.push(TrainRecord { step, loss, lr, elapsed_s: elapsed, val_loss: v });
        if last {
            break;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let report = TrainReport {
        steps: trace.len(),
        initial_loss: trace.first().map_or(f64::NAN, |r| r.loss),
        final_loss: trace.last().map_or(f64::NAN, |r| r.loss),
        val_loss,
        elapsed_s: elapsed,
        tokens_per_s: tokens_seen as f64 / elapsed.max(1e-9),
        n_params: layout.total,
        diverged_at,
        trace,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays() {
        let c = TrainConfig { steps: 100, warmup_steps: 10, lr: 1.0, min_lr: 0.1, ..Default::default() };
        assert!((c.lr_at(0) - 0.1).abs() < 1e-12);
        assert!((c.lr_at(9) - 1.0).abs() < 1e-12);
        assert!((c.lr_at(10) - 1.0).abs() < 1e-12);
        assert!((c.lr_at(55) - 0.55).abs() < 1e-12);
        assert!((c.lr_at(100) - 0.1).abs() < 1e-12);
        for s in 10..100 {
            assert!(c.lr_at(s + 1) <= c.lr_at(s));
        }
    }

    #[test]
    fn batch_masks_header_targets_and_padding() {
        let b = make_batch(&[vec![1, 2, 3, 4, 5, 6, 7, 8], vec![1, 2, 3, 4, 5, 6, 7]]);
        assert_eq!(b.seq_len, 7);
        assert_eq!(&b.weights[..7], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(&b.weights[7..], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(b.targets[6], 8);
    }
}
