//! Incremental decoding with a key/value cache.

use super::kernels::{self, axpy, c, dot, matmul, Scalar};
use super::{Layout, Model, ModelError};

/// Feeds tokens one at a time, reusing cached keys and values so each step
/// costs one position instead of the whole prefix.
#[derive(Clone)]
pub struct DecodeSession<'m, T: Scalar = f32> {
    model: &'m Model<T>,
    layout: Layout,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
    logits: Vec<T>,
    // scratch
    x: Vec<T>,
    ln: Vec<T>,
    qkv: Vec<T>,
    atty: Vec<T>,
    tmp: Vec<T>,
    fc: Vec<T>,
    act: Vec<T>,
    scores: Vec<T>,
    stats: [(T, T); 1],
}

impl<'m, T: Scalar> DecodeSession<'m, T> {
    pub fn new(model: &'m Model<T>) -> Self {
        let cfg = &model.config;
        let (d, ctx) = (cfg.d_model, cfg.ctx_len);
        DecodeSession {
            model,
            layout: Layout::new(cfg),
            keys: vec![vec![T::zero(); ctx * d]; cfg.n_layer],
            values: vec![vec![T::zero(); ctx * d]; cfg.n_layer],
            len: 0,
            logits: vec![T::zero(); cfg.vocab_size],
            x: vec![T::zero(); d],
            ln: vec![T::zero(); d],
            qkv: vec![T::zero(); 3 * d],
            atty: vec![T::zero(); d],
            tmp: vec![T::zero(); d],
            fc: vec![T::zero(); 4 * d],
            act: vec![T::zero(); 4 * d],
            scores: vec![T::zero(); ctx],
            stats: [(T::zero(), T::zero())],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.model.config.ctx_len
    }

    pub fn reset(&mut self) {
        self.len = 0;
    }

    /// Logits after the most recent token.
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    /// Feeds every token and returns the logits after the last one.
    pub fn feed(&mut self, tokens: &[u32]) -> Result<&[T], ModelError> {
        for &t in tokens {
            self.push(t)?;
        }
        Ok(&self.logits)
    }

    /// Appends one token and returns the next-token logits.
    pub fn push(&mut self, token: u32) -> Result<&[T], ModelError> {
        let cfg = &self.model.config;
        let (d, h, v) = (cfg.d_model, cfg.n_head, cfg.vocab_size);
        if token as usize >= v {
            return Err(ModelError::TokenOutOfRange { token, vocab: v });
        }
        if self.len >= cfg.ctx_len {
            return Err(ModelError::ContextOverflow { len: self.len + 1, ctx: cfg.ctx_len });
        }
        let p = &self.model.params;
        let lay = &self.layout;
        let t = self.len;
        for i in 0..d {
            self.x[i] = p[lay.wte + token as usize * d + i] + p[lay.wpe + t * d + i];
        }
        let hd = d / h;
        let scale = c::<T>(1.0 / (hd as f64).sqrt());
        for (li, b) in lay.blocks.iter().enumerate() {
            kernels::layernorm(&mut self.ln, &mut self.stats, &self.x, &p[b.ln1_g..][..d], &p[b.ln1_b..][..d], 1, d);
            matmul(&mut self.qkv, &self.ln, &p[b.w_qkv..][..3 * d * d], Some(&p[b.b_qkv..][..3 * d]), 1, d, 3 * d);
            self.keys[li][t * d..(t + 1) * d].copy_from_slice(&self.qkv[d..2 * d]);
            self.values[li][t * d..(t + 1) * d].copy_from_slice(&self.qkv[2 * d..]);
            self.atty.fill(T::zero());
            for head in 0..h {
                let q = &self.qkv[head * hd..][..hd];
                let row = &mut self.scores[..=t];
                for (s, r) in row.iter_mut().enumerate() {
                    *r = dot(q, &self.keys[li][s * d + head * hd..][..hd]) * scale;
                }
                kernels::softmax_in_place(row);
                let o = &mut self.atty[head * hd..][..hd];
                for (s, &w) in row.iter().enumerate() {
                    axpy(o, w, &self.values[li][s * d + head * hd..][..hd]);
                }
            }
            matmul(&mut self.tmp, &self.atty, &p[b.w_o..][..d * d], Some(&p[b.b_o..][..d]), 1, d, d);
            axpy(&mut self.x, T::one(), &self.tmp);
            kernels::layernorm(&mut self.ln, &mut self.stats, &self.x, &p[b.ln2_g..][..d], &p[b.ln2_b..][..d], 1, d);
            matmul(&mut self.fc, &self.ln, &p[b.w_fc..][..4 * d * d], Some(&p[b.b_fc..][..4 * d]), 1, d, 4 * d);
            kernels::gelu(&mut self.act, &self.fc);
            matmul(&mut self.tmp, &self.act, &p[b.w_proj..][..4 * d * d], Some(&p[b.b_proj..][..d]), 1, 4 * d, d);
            axpy(&mut self.x, T::one(), &self.tmp);
        }
        kernels::layernorm(&mut self.ln, &mut self.stats, &self.x, &p[lay.lnf_g..][..d], &p[lay.lnf_b..][..d], 1, d);
        match lay.lm_head {
            Some(hh) => matmul(&mut self.logits, &self.ln, &p[hh..][..d * v], None, 1, d, v),
            None => {
                for (tok, o) in self.logits.iter_mut().enumerate() {
                    *o = dot(&self.ln, &p[lay.wte + tok * d..][..d]);
                }
            }
        }
        self.len += 1;
        Ok(&self.logits)
    }
}

/// Softmax of `logits / temperature` in f64.
pub fn probabilities<T: Scalar>(logits: &[T], temperature: f64) -> Vec<f64> {
    let mut p: Vec<f64> = logits.iter().map(|l| l.to_f64().unwrap_or(f64::NEG_INFINITY) / temperature).collect();
    kernels::softmax_in_place(&mut p);
    p
}

#[cfg(test)]
mod tests {
    use super::super::gpt::sequence_logits;
    use super::super::{Model, ModelConfig};
    use super::*;

    #[test]
    fn cached_decoding_matches_full_forward() {
        for tie in [false, true] {
            let cfg =
                ModelConfig { vocab_size: 40, n_layer: 2, n_head: 4, d_model: 16, ctx_len: 20, tie_embeddings: tie };
            let mut m = Model::<f64>::init(cfg.clone(), 2).unwrap();
            for p in &mut m.params {
                *p *= 20.0;
            }
            let tokens: Vec<u32> = (0..20).map(|i| (i * 7 + 3) % 40).collect();
            let full = sequence_logits(&cfg, &m.params, &tokens).unwrap();
            let mut s = DecodeSession::new(&m);
            for (t, &tok) in tokens.iter().enumerate() {
                let l = s.push(tok).unwrap();
                for (a, b) in l.iter().zip(&full[t * 40..(t + 1) * 40]) {
                    assert!((a - b).abs() < 1e-9, "position {t}");
                }
            }
            assert!(matches!(s.push(1), Err(ModelError::ContextOverflow { .. })));
            s.reset();
            assert_eq!(s.push(tokens[0]).unwrap(), &full[..40]);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let p = probabilities(&[1.0f32, 2.0, 3.0], 0.5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }
}
