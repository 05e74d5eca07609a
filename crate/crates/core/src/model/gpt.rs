//! Full-sequence forward and backward passes.

use super::kernels::{self, axpy, c, dot, matmul, matmul_backward, Scalar};
use super::{BlockLayout, Layout, ModelConfig, ModelError};

/// A batch of equal-length sequences. `targets[i]` is the token that should
/// follow `tokens[i]`; `weights[i]` scales its loss (0 masks it out).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub tokens: Vec<u32>,
    pub targets: Vec<u32>,
    pub weights: Vec<f32>,
    pub n_seq: usize,
    pub seq_len: usize,
}

impl Batch {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let n = self.n_seq * self.seq_len;
        if self.tokens.len() != n || self.targets.len() != n || self.weights.len() != n {
            return Err(ModelError::Config("batch arrays disagree with its shape".into()));
        }
        if self.seq_len > cfg.ctx_len {
            return Err(ModelError::ContextOverflow { len: self.seq_len, ctx: cfg.ctx_len });
        }
        for &t in self.tokens.iter().chain(&self.targets) {
            if t as usize >= cfg.vocab_size {
                return Err(ModelError::TokenOutOfRange { token: t, vocab: cfg.vocab_size });
            }
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().map(|&w| w as f64).sum()
    }
}

#[derive(Default)]
struct LayerCache<T> {
    x: Vec<T>,
    ln1: Vec<T>,
    ln1_stats: Vec<(T, T)>,
    qkv: Vec<T>,
    att: Vec<T>,
    atty: Vec<T>,
    xmid: Vec<T>,
    ln2: Vec<T>,
    ln2_stats: Vec<(T, T)>,
    fc: Vec<T>,
    act: Vec<T>,
}

struct SeqCache<T> {
    n: usize,
    layers: Vec<LayerCache<T>>,
    xf: Vec<T>,
    lnf: Vec<T>,
    lnf_stats: Vec<(T, T)>,
}

fn seq_forward<T: Scalar>(cfg: &ModelConfig, layout: &Layout, p: &[T], tokens: &[u32]) -> SeqCache<T> {
    let (n, d, h) = (tokens.len(), cfg.d_model, cfg.n_head);
    let mut x = vec![T::zero(); n * d];
    for (t, &tok) in tokens.iter().enumerate() {
        let e = &p[layout.wte + tok as usize * d..][..d];
        let pe = &p[layout.wpe + t * d..][..d];
        for i in 0..d {
            x[t * d + i] = e[i] + pe[i];
        }
    }
    let mut layers = Vec::with_capacity(cfg.n_layer);
    for b in &layout.blocks {
        let mut lc = LayerCache { x: x.clone(), ..Default::default() };
        lc.ln1 = vec![T::zero(); n * d];
        lc.ln1_stats = vec![(T::zero(), T::zero()); n];
        kernels::layernorm(&mut lc.ln1, &mut lc.ln1_stats, &x, &p[b.ln1_g..][..d], &p[b.ln1_b..][..d], n, d);
        lc.qkv = vec![T::zero(); n * 3 * d];
        matmul(&mut lc.qkv, &lc.ln1, &p[b.w_qkv..][..3 * d * d], Some(&p[b.b_qkv..][..3 * d]), n, d, 3 * d);
        lc.att = vec![T::zero(); h * n * n];
        lc.atty = vec![T::zero(); n * d];
        attention_forward(&mut lc.atty, &mut lc.att, &lc.qkv, n, d, h);
        let mut proj = vec![T::zero(); n * d];
        matmul(&mut proj, &lc.atty, &p[b.w_o..][..d * d], Some(&p[b.b_o..][..d]), n, d, d);
        lc.xmid = x.iter().zip(&proj).map(|(&a, &b)| a + b).collect();
        lc.ln2 = vec![T::zero(); n * d];
        lc.ln2_stats = vec![(T::zero(), T::zero()); n];
        kernels::layernorm(&mut lc.ln2, &mut lc.ln2_stats, &lc.xmid, &p[b.ln2_g..][..d], &p[b.ln2_b..][..d], n, d);
        lc.fc = vec![T::zero(); n * 4 * d];
        matmul(&mut lc.fc, &lc.ln2, &p[b.w_fc..][..4 * d * d], Some(&p[b.b_fc..][..4 * d]), n, d, 4 * d);
        lc.act = vec![T::zero(); n * 4 * d];
        kernels::gelu(&mut lc.act, &lc.fc);
        let mut mlp = vec![T::zero(); n * d];
        matmul(&mut mlp, &lc.act, &p[b.w_proj..][..4 * d * d], Some(&p[b.b_proj..][..d]), n, 4 * d, d);
        x = lc.xmid.iter().zip(&mlp).map(|(&a, &b)| a + b).collect();
        layers.push(lc);
    }
    let mut lnf = vec![T::zero(); n * d];
    let mut lnf_stats = vec![(T::zero(), T::zero()); n];
    kernels::layernorm(&mut lnf, &mut lnf_stats, &x, &p[layout.lnf_g..][..d], &p[layout.lnf_b..][..d], n, d);
    SeqCache { n, layers, xf: x, lnf, lnf_stats }
}

/// Causal multi-head attention; `att` holds probabilities `[head][t][s]`.
pub(crate) fn attention_forward<T: Scalar>(out: &mut [T], att: &mut [T], qkv: &[T], n: usize, d: usize, h: usize) {
    let hd = d / h;
    let scale = c::<T>(1.0 / (hd as f64).sqrt());
    for head in 0..h {
        for t in 0..n {
            let q = &qkv[t * 3 * d + head * hd..][..hd];
            let row = &mut att[(head * n + t) * n..][..n];
            for s in 0..=t {
                let k = &qkv[s * 3 * d + d + head * hd..][..hd];
                row[s] = dot(q, k) * scale;
            }
            kernels::softmax_in_place(&mut row[..=t]);
            let o = &mut out[t * d + head * hd..][..hd];
            for s in 0..=t {
                let v = &qkv[s * 3 * d + 2 * d + head * hd..][..hd];
                axpy(o, row[s], v);
            }
        }
    }
}

fn attention_backward<T: Scalar>(dqkv: &mut [T], dout: &[T], att: &[T], qkv: &[T], n: usize, d: usize, h: usize) {
    let hd = d / h;
    let scale = c::<T>(1.0 / (hd as f64).sqrt());
    let mut datt = vec![T::zero(); n];
    for head in 0..h {
        for t in 0..n {
            let row = &att[(head * n + t) * n..][..n];
            let dout_t = &dout[t * d + head * hd..][..hd];
            let mut weighted = T::zero();
            for s in 0..=t {
                let v = &qkv[s * 3 * d + 2 * d + head * hd..][..hd];
                datt[s] = dot(dout_t, v);
                weighted += row[s] * datt[s];
                axpy(&mut dqkv[s * 3 * d + 2 * d + head * hd..][..hd], row[s], dout_t);
            }
            for s in 0..=t {
                let ds = row[s] * (datt[s] - weighted) * scale;
                let (qo, ko) = (t * 3 * d + head * hd, s * 3 * d + d + head * hd);
                for i in 0..hd {
                    let (qi, ki) = (qkv[qo + i], qkv[ko + i]);
                    dqkv[qo + i] += ds * ki;
                    dqkv[ko + i] += ds * qi;
                }
            }
        }
    }
}

fn block_backward<T: Scalar>(
    cfg: &ModelConfig,
    b: &BlockLayout,
    p: &[T],
    g: &mut [T],
    lc: &LayerCache<T>,
    dx: &mut Vec<T>,
    n: usize,
) {
    let (d, h) = (cfg.d_model, cfg.n_head);
    // MLP branch: x_out = xmid + proj(gelu(fc(ln2(xmid))))
    let mut dact = vec![T::zero(); n * 4 * d];
    {
        let (gw, gb) = split_two(g, b.w_proj, 4 * d * d, b.b_proj, d);
        matmul_backward(&mut dact, gw, Some(gb), dx, &lc.act, &p[b.w_proj..][..4 * d * d], n, 4 * d, d);
    }
    let mut dfc = vec![T::zero(); n * 4 * d];
    kernels::gelu_backward(&mut dfc, &dact, &lc.fc);
    let mut dln2 = vec![T::zero(); n * d];
    {
        let (gw, gb) = split_two(g, b.w_fc, 4 * d * d, b.b_fc, 4 * d);
        matmul_backward(&mut dln2, gw, Some(gb), &dfc, &lc.ln2, &p[b.w_fc..][..4 * d * d], n, d, 4 * d);
    }
    let mut dxmid = dx.clone();
    {
        let (gg, gb) = split_two(g, b.ln2_g, d, b.ln2_b, d);
        kernels::layernorm_backward(&mut dxmid, gg, gb, &dln2, &lc.xmid, &lc.ln2_stats, &p[b.ln2_g..][..d], n, d);
    }
    // attention branch: xmid = x + o(attn(ln1(x)))
    let mut datty = vec![T::zero(); n * d];
    {
        let (gw, gb) = split_two(g, b.w_o, d * d, b.b_o, d);
        matmul_backward(&mut datty, gw, Some(gb), &dxmid, &lc.atty, &p[b.w_o..][..d * d], n, d, d);
    }
    let mut dqkv = vec![T::zero(); n * 3 * d];
    attention_backward(&mut dqkv, &datty, &lc.att, &lc.qkv, n, d, h);
    let mut dln1 = vec![T::zero(); n * d];
    {
        let (gw, gb) = split_two(g, b.w_qkv, 3 * d * d, b.b_qkv, 3 * d);
        matmul_backward(&mut dln1, gw, Some(gb), &dqkv, &lc.ln1, &p[b.w_qkv..][..3 * d * d], n, d, 3 * d);
    }
    let mut dxin = dxmid.clone();
    {
        let (gg, gb) = split_two(g, b.ln1_g, d, b.ln1_b, d);
        kernels::layernorm_backward(&mut dxin, gg, gb, &dln1, &lc.x, &lc.ln1_stats, &p[b.ln1_g..][..d], n, d);
    }
    *dx = dxin;
}

/// Two disjoint mutable windows of the gradient vector (`a` before `b`).
fn split_two<T>(g: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + alen <= b);
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

/// Logits of one position.
fn head_logits<T: Scalar>(cfg: &ModelConfig, layout: &Layout, p: &[T], hidden: &[T], out: &mut [T]) {
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    match layout.lm_head {
        Some(h) => matmul(out, hidden, &p[h..][..d * v], None, 1, d, v),
        None => {
            for (tok, o) in out.iter_mut().enumerate() {
                *o = dot(hidden, &p[layout.wte + tok * d..][..d]);
            }
        }
    }
}

/// Forward + backward for one sequence; adds gradients into `g` and
/// returns the weighted negative log-likelihood sum.
fn seq_loss_and_grad<T: Scalar>(
    cfg: &ModelConfig,
    layout: &Layout,
    p: &[T],
    g: &mut [T],
    tokens: &[u32],
    targets: &[u32],
    weights: &[f32],
    norm: T,
) -> T {
    let cache = seq_forward(cfg, layout, p, tokens);
    let (n, d, v) = (cache.n, cfg.d_model, cfg.vocab_size);
    let mut total = T::zero();
    let mut dlnf = vec![T::zero(); n * d];
    let mut logits = vec![T::zero(); v];
    for t in 0..n {
        if weights[t] == 0.0 {
            continue;
        }
        let w = c::<T>(weights[t] as f64);
        let hid = &cache.lnf[t * d..][..d];
        head_logits(cfg, layout, p, hid, &mut logits);
        let target = targets[t] as usize;
        let raw_target = logits[target];
        let lse = kernels::softmax_in_place(&mut logits);
        total += w * (lse - raw_target);
        // logits now holds probabilities
        logits[target] -= T::one();
        let scale = w / norm;
        for l in logits.iter_mut() {
            *l *= scale;
        }
        let dh = &mut dlnf[t * d..][..d];
        match layout.lm_head {
            Some(h) => {
                let w_head = &p[h..][..d * v];
                for k in 0..d {
                    dh[k] += dot(&logits, &w_head[k * v..][..v]);
                }
                for k in 0..d {
                    axpy(&mut g[h + k * v..][..v], hid[k], &logits);
                }
            }
            None => {
                for (tok, &dl) in logits.iter().enumerate() {
                    axpy(dh, dl, &p[layout.wte + tok * d..][..d]);
                    axpy(&mut g[layout.wte + tok * d..][..d], dl, hid);
                }
            }
        }
    }
    let mut dx = vec![T::zero(); n * d];
    {
        let (gg, gb) = split_two(g, layout.lnf_g, d, layout.lnf_b, d);
        kernels::layernorm_backward(&mut dx, gg, gb, &dlnf, &cache.xf, &cache.lnf_stats, &p[layout.lnf_g..][..d], n, d);
    }
    for (li, b) in layout.blocks.iter().enumerate().rev() {
        block_backward(cfg, b, p, g, &cache.layers[li], &mut dx, n);
    }
    for (t, &tok) in tokens.iter().enumerate() {
        let dxt = &dx[t * d..][..d];
        axpy(&mut g[layout.wte + tok as usize * d..][..d], T::one(), dxt);
        axpy(&mut g[layout.wpe + t * d..][..d], T::one(), dxt);
    }
    total
}

/// Mean weighted cross-entropy of the batch and its gradient (written into
/// `grads`, which is resized and zeroed). Sequences are split across
/// `threads` workers.
pub fn loss_and_grad<T: Scalar>(
    cfg: &ModelConfig,
    params: &[T],
    batch: &Batch,
    grads: &mut Vec<T>,
    threads: usize,
) -> Result<T, ModelError> {
    batch.validate(cfg)?;
    let layout = Layout::new(cfg);
    grads.clear();
    grads.resize(layout.total, T::zero());
    let norm = batch.total_weight();
    if norm <= 0.0 {
        return Ok(T::zero());
    }
    let norm_t = c::<T>(norm);
    let l = batch.seq_len;
    let run = |range: std::ops::Range<usize>, g: &mut [T]| {
        let mut total = T::zero();
        for s in range {
            let sl = s * l..(s + 1) * l;
            total += seq_loss_and_grad(
                cfg,
                &layout,
                params,
                g,
                &batch.tokens[sl.clone()],
                &batch.targets[sl.clone()],
                &batch.weights[sl],
                norm_t,
            );
        }
        total
    };
    let threads = threads.clamp(1, batch.n_seq.max(1));
    let total = if threads == 1 {
        run(0..batch.n_seq, grads)
    } else {
        let per = batch.n_seq.div_ceil(threads);
        let results: Vec<(T, Vec<T>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|i| {
                    let range = (i * per).min(batch.n_seq)..((i + 1) * per).min(batch.n_seq);
                    let run = &run;
                    let total_len = layout.total;
                    scope.spawn(move || {
                        let mut g = vec![T::zero(); total_len];
                        let loss = run(range, &mut g);
                        (loss, g)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut total = T::zero();
        for (loss, g) in results {
            total += loss;
            axpy(grads, T::one(), &g);
        }
        total
    };
    Ok(total / norm_t)
}

/// Mean weighted cross-entropy without gradients.
pub fn batch_loss<T: Scalar>(cfg: &ModelConfig, params: &[T], batch: &Batch) -> Result<T, ModelError> {
    batch.validate(cfg)?;
    let layout = Layout::new(cfg);
    let norm = batch.total_weight();
    if norm <= 0.0 {
        return Ok(T::zero());
    }
    let l = batch.seq_len;
    let mut total = T::zero();
    let mut logits = vec![T::zero(); cfg.vocab_size];
    for s in 0..batch.n_seq {
        let cache = seq_forward(cfg, &layout, params, &batch.tokens[s * l..(s + 1) * l]);
        for t in 0..l {
            let w = batch.weights[s * l + t];
            if w == 0.0 {
                continue;
            }
            head_logits(cfg, &layout, params, &cache.lnf[t * cfg.d_model..][..cfg.d_model], &mut logits);
            let target = batch.targets[s * l + t] as usize;
            let raw = logits[target];
            let lse = kernels::softmax_in_place(&mut logits);
            total += c::<T>(w as f64) * (lse - raw);
        }
    }
    Ok(total / c::<T>(norm))
}

/// Logits at every position of one sequence (`n × V`).
pub fn sequence_logits<T: Scalar>(cfg: &ModelConfig, params: &[T], tokens: &[u32]) -> Result<Vec<T>, ModelError> {
    if tokens.len() > cfg.ctx_len {
        return Err(ModelError::ContextOverflow { len: tokens.len(), ctx: cfg.ctx_len });
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange { token: t, vocab: cfg.vocab_size });
    }
    let layout = Layout::new(cfg);
    let cache = seq_forward(cfg, &layout, params, tokens);
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let mut out = vec![T::zero(); tokens.len() * v];
    for t in 0..tokens.len() {
        head_logits(cfg, &layout, params, &cache.lnf[t * d..][..d], &mut out[t * v..][..v]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{Model, ModelConfig};
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Central differences at h = 1e-5 carry roundoff of about
    /// 1e-16 * |loss| / h ~ 1e-10, so gradients below this magnitude are
    /// compared on an absolute scale (1e-4 * FD_FLOOR = 1e-9).
    pub(crate) const FD_FLOOR: f64 = 1e-5;

    fn random_batch(cfg: &ModelConfig, n_seq: usize, len: usize, seed: u64) -> Batch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = n_seq * len;
        Batch {
            tokens: (0..n).map(|_| rng.gen_range(0..cfg.vocab_size as u32)).collect(),
            targets: (0..n).map(|_| rng.gen_range(0..cfg.vocab_size as u32)).collect(),
            weights: (0..n).map(|i| if i % len < 2 { 0.0 } else { 1.0 }).collect(),
            n_seq,
            seq_len: len,
        }
    }

    fn check_gradients(tie: bool) {
        let cfg = ModelConfig { vocab_size: 23, n_layer: 2, n_head: 2, d_model: 8, ctx_len: 12, tie_embeddings: tie };
        let model = Model::<f64>::init(cfg.clone(), 3).unwrap();
        // larger weights so the check is not dominated by near-zero paths
        let mut params: Vec<f64> = model.params.iter().map(|p| p * 10.0).collect();
        let batch = random_batch(&cfg, 2, 7, 9);
        let mut grads = Vec::new();
        loss_and_grad(&cfg, &params, &batch, &mut grads, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..300 {
            let i = rng.gen_range(0..params.len());
            let orig = params[i];
            params[i] = orig + eps;
            let up = batch_loss(&cfg, &params, &batch).unwrap();
            params[i] = orig - eps;
            let down = batch_loss(&cfg, &params, &batch).unwrap();
            params[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - grads[i]).abs() / (numeric.abs() + grads[i].abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(false);
        check_gradients(true);
    }

    #[test]
    fn threaded_gradients_match() {
        let cfg = ModelConfig { vocab_size: 30, n_layer: 1, n_head: 2, d_model: 8, ctx_len: 16, tie_embeddings: false };
        let m = Model::<f64>::init(cfg.clone(), 1).unwrap();
        let batch = random_batch(&cfg, 5, 10, 2);
        let (mut g1, mut g3) = (Vec::new(), Vec::new());
        let l1 = loss_and_grad(&cfg, &m.params, &batch, &mut g1, 1).unwrap();
        let l3 = loss_and_grad(&cfg, &m.params, &batch, &mut g3, 3).unwrap();
        assert!((l1 - l3).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_loss_near_uniform() {
        let cfg = ModelConfig { vocab_size: 50, n_layer: 2, n_head: 2, d_model: 16, ctx_len: 32, tie_embeddings: false };
        let m = Model::<f32>::init(cfg.clone(), 5).unwrap();
        let batch = random_batch(&cfg, 2, 20, 1);
        let loss = batch_loss(&cfg, &m.params, &batch).unwrap();
        assert!((loss - (50f32).ln()).abs() < 0.1, "{loss}");
    }

    #[test]
    fn causal_prefix_invariance() {
        let cfg = ModelConfig { vocab_size: 20, n_layer: 2, n_head: 2, d_model: 8, ctx_len: 16, tie_embeddings: false };
        let m = Model::<f64>::init(cfg.clone(), 8).unwrap();
        let a = sequence_logits(&cfg, &m.params, &[1, 2, 3, 4, 5]).unwrap();
        let b = sequence_logits(&cfg, &m.params, &[1, 2, 3, 9, 9, 9]).unwrap();
        assert_eq!(&a[..3 * 20], &b[..3 * 20]);
    }

    fn max_fd_error(eps: f64) -> f64 {
        let cfg = ModelConfig { vocab_size: 17, n_layer: 1, n_head: 2, d_model: 8, ctx_len: 10, tie_embeddings: false };
        let params: Vec<f64> = Model::<f64>::init(cfg.clone(), 2).unwrap().params.iter().map(|p| p * 10.0).collect();
        let batch = random_batch(&cfg, 1, 8, 5);
        let mut grads = Vec::new();
        loss_and_grad(&cfg, &params, &batch, &mut grads, 1).unwrap();
        let mut p = params.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let i = rng.gen_range(0..p.len());
            p[i] = params[i] + eps;
            let up = batch_loss(&cfg, &p, &batch).unwrap();
            p[i] = params[i] - eps;
            let down = batch_loss(&cfg, &p, &batch).unwrap();
            p[i] = params[i];
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((numeric - grads[i]).abs() / (numeric.abs() + grads[i].abs()).max(FD_FLOOR));
        }
        worst
    }

    #[test]
    fn coarse_finite_difference_step_is_detected() {
        let fine = max_fd_error(1e-5);
        let coarse = max_fd_error(1e-1);
        assert!(fine < 1e-4, "{fine}");
        assert!(coarse > 10.0 * fine && coarse > 1e-4, "fine {fine} coarse {coarse}");
    }

    #[test]
    fn forced_targets_give_a_stationary_point() {
        // Final layer norm with zero gain emits its bias for every position;
        // the head then puts a margin of 60 nats on the single target token.
        let cfg = ModelConfig { vocab_size: 11, n_layer: 1, n_head: 1, d_model: 4, ctx_len: 8, tie_embeddings: false };
        let layout = Layout::new(&cfg);
        let mut p = Model::<f64>::init(cfg.clone(), 1).unwrap().params;
        let d = cfg.d_model;
        p[layout.lnf_g..layout.lnf_g + d].fill(0.0);
        p[layout.lnf_b..layout.lnf_b + d].fill(0.0);
        p[layout.lnf_b] = 1.0;
        let head = layout.lm_head.unwrap();
        p[head..head + d * cfg.vocab_size].fill(0.0);
        p[head + 3] = 60.0;
        let n = 8;
        let batch =
            Batch { tokens: (0..n).map(|i| i as u32 % 11).collect(), targets: vec![3; n], weights: vec![1.0; n], n_seq: 1, seq_len: n };
        let mut g = Vec::new();
        let loss = loss_and_grad(&cfg, &p, &batch, &mut g, 1).unwrap();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(loss < 1e-20, "{loss}");
        assert!(norm < 1e-8, "{norm}");
    }

    #[test]
    fn zeroed_blocks_reduce_to_a_per_token_map() {
        let cfg = ModelConfig { vocab_size: 9, n_layer: 1, n_head: 2, d_model: 6, ctx_len: 8, tie_embeddings: false };
        let layout = Layout::new(&cfg);
        let mut p = Model::<f64>::init(cfg.clone(), 4).unwrap().params;
        let (d, v) = (cfg.d_model, cfg.vocab_size);
        let b = layout.blocks[0];
        for (at, len) in [
            (b.w_qkv, 3 * d * d),
            (b.b_qkv, 3 * d),
            (b.w_o, d * d),
            (b.b_o, d),
            (b.w_fc, 4 * d * d),
            (b.b_fc, 4 * d),
            (b.w_proj, 4 * d * d),
            (b.b_proj, d),
            (layout.wpe, cfg.ctx_len * d),
        ] {
            p[at..at + len].fill(0.0);
        }
        // non-trivial final norm so the hand computation exercises it
        for i in 0..d {
            p[layout.lnf_g + i] = 0.5 + i as f64 * 0.1;
            p[layout.lnf_b + i] = 0.01 * i as f64;
        }
        let tokens = [4u32, 1, 4, 7, 0];
        let logits = sequence_logits(&cfg, &p, &tokens).unwrap();
        let head = layout.lm_head.unwrap();
        for (t, &tok) in tokens.iter().enumerate() {
            let e = &p[layout.wte + tok as usize * d..][..d];
            let mean = e.iter().sum::<f64>() / d as f64;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
            let h: Vec<f64> = (0..d)
                .map(|i| (e[i] - mean) / (var + 1e-5).sqrt() * p[layout.lnf_g + i] + p[layout.lnf_b + i])
                .collect();
            for j in 0..v {
                let want: f64 = (0..d).map(|i| h[i] * p[head + i * v + j]).sum();
                assert!((logits[t * v + j] - want).abs() < 1e-12);
            }
        }
        // same token, same logits, wherever it sits
        assert_eq!(&logits[..v], &logits[2 * v..3 * v]);
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let cfg = ModelConfig { vocab_size: 13, n_layer: 2, n_head: 2, d_model: 8, ctx_len: 12, tie_embeddings: true };
        let m = Model::<f64>::init(cfg.clone(), 12).unwrap();
        let params: Vec<f64> = m.params.iter().map(|p| p * 20.0).collect();
        let batch = random_batch(&cfg, 3, 9, 13);
        let mut total = 0.0;
        let mut weight = 0.0;
        for s in 0..batch.n_seq {
            let r = s * batch.seq_len..(s + 1) * batch.seq_len;
            let logits = sequence_logits(&cfg, &params, &batch.tokens[r.clone()]).unwrap();
            for (t, i) in r.enumerate() {
                let row = &logits[t * 13..(t + 1) * 13];
                let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
                total += batch.weights[i] as f64 * (lse - row[batch.targets[i] as usize]);
                weight += batch.weights[i] as f64;
            }
        }
        let loss = batch_loss(&cfg, &params, &batch).unwrap();
        assert!((loss - total / weight).abs() < 1e-12, "{loss} vs {}", total / weight);
    }
}
