//! Pre-norm transformer decoder: masked self-attention, cross-attention
//! over encoder features and a GELU feed-forward block per layer, followed
//! by a final layer norm and a projection to vocabulary logits.

use super::encoder::{cell_statistics, encode_backward, encode_stats, CellStats, EncoderFeatures};
use super::ops::{
    add_position, attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear,
    linear_backward, LnCache, Mutation,
};
use super::params::Layout;
use super::{ModelConfig, ModelError, Real};
use crate::gen::PointCloud;
use crate::tokens::{Token, PAD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

/// Config, parameter layout and the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    p1: Vec<T>,
    o1: Vec<T>,
    drop1: Option<Vec<T>>,
    ln2: LnCache<T>,
    b: Vec<T>,
    cq: Vec<T>,
    ck: Vec<T>,
    cv: Vec<T>,
    p2: Vec<T>,
    o2: Vec<T>,
    drop2: Option<Vec<T>>,
    ln3: LnCache<T>,
    c: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
    drop3: Option<Vec<T>>,
}

struct Forward<T> {
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    hf: Vec<T>,
    logits: Vec<T>,
}

/// Two disjoint mutable windows of `g`; `a` must precede `b`.
fn pair<'a, T>(g: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

fn add_into<T: Real>(h: &mut [T], y: &[T]) {
    for (a, &b) in h.iter_mut().zip(y) {
        *a = *a + b;
    }
}

/// Inverted dropout; returns the scaled keep mask when active.
fn dropout<T: Real>(y: &mut [T], rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng.filter(|_| rate > 0.0)?;
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..y.len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
    for (v, &m) in y.iter_mut().zip(&mask) {
        *v = *v * m;
    }
    Some(mask)
}

fn masked<T: Real>(dy: &[T], mask: &Option<Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => dy.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => dy.to_vec(),
    }
}

/// Mean next-token negative log-likelihood: row `t` of `logits` scores
/// `targets[t]`; PAD targets are skipped. Zero when nothing is scored.
pub fn cross_entropy<T: Real>(logits: &[T], targets: &[Token], vocab: usize) -> f64 {
    let (sum, count) = cross_entropy_grad(logits, targets, vocab, 0.0, None);
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Summed loss and scored count; with `dlogits`, writes
/// `scale · (softmax − onehot)` for scored rows and zero elsewhere.
fn cross_entropy_grad<T: Real>(logits: &[T], targets: &[Token], vocab: usize, scale: f64, mut dlogits: Option<&mut [T]>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for (t, &target) in targets.iter().enumerate() {
        let row = &logits[t * vocab..(t + 1) * vocab];
        if target == PAD {
            if let Some(d) = dlogits.as_deref_mut() {
                d[t * vocab..(t + 1) * vocab].fill(T::zero());
            }
            continue;
        }
        let max = row.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x.f64() - max).exp()).sum();
        let lse = max + z.ln();
        sum += lse - row[target as usize].f64();
        count += 1;
        if let Some(d) = dlogits.as_deref_mut() {
            let dr = &mut d[t * vocab..(t + 1) * vocab];
            for (j, (g, &x)) in dr.iter_mut().zip(row).enumerate() {
                let p = (x.f64() - lse).exp();
                let y = if j == target as usize { 1.0 } else { 0.0 };
                *g = T::lit(scale * (p - y));
            }
        }
    }
    (sum, count)
}

impl<T: Real> Model<T> {
    /// Seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.check().map_err(ModelError::InvalidConfig)?;
        let layout = Layout::new(&config);
        let params = layout.init(seed);
        Ok(Model { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.check().map_err(ModelError::InvalidConfig)?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Model { config, layout, params })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|x| U::lit(x.f64())).collect(),
        }
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<EncoderFeatures<T>, ModelError> {
        Ok(self.encode_stats(&cell_statistics(cloud, &self.config)?))
    }

    pub fn encode_stats(&self, stats: &CellStats) -> EncoderFeatures<T> {
        encode_stats(stats, &self.params, &self.layout.idx, &self.config)
    }

    /// Logits for every position of `tokens`, `len × vocab` row-major.
    pub fn logits(&self, tokens: &[Token], feats: &EncoderFeatures<T>) -> Result<Vec<T>, ModelError> {
        Ok(self.forward(tokens, feats, None)?.logits)
    }

    /// Mean teacher-forced loss of `tokens` (inputs `tokens[..n-1]`,
    /// targets `tokens[1..]`).
    pub fn loss(&self, stats: &CellStats, tokens: &[Token]) -> Result<f64, ModelError> {
        let feats = self.encode_stats(stats);
        let n = tokens.len().saturating_sub(1);
        let logits = self.logits(&tokens[..n], &feats)?;
        Ok(cross_entropy(&logits, &tokens[1..], self.config.vocab))
    }

    /// Adds `scale ·` the gradient of the summed token loss to `grads`
    /// and returns `(summed loss, scored tokens)`. Dropout is active only
    /// when `rng` is given.
    pub fn loss_and_grad(
        &self,
        stats: &CellStats,
        tokens: &[Token],
        grads: &mut [T],
        scale: f64,
        mutation: Option<Mutation>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, usize), ModelError> {
        assert_eq!(grads.len(), self.params.len());
        if tokens.len() < 2 {
            return Ok((0.0, 0));
        }
        let n = tokens.len() - 1;
        let feats = self.encode_stats(stats);
        let fwd = self.forward(&tokens[..n], &feats, rng)?;
        let mut dlogits = vec![T::zero(); fwd.logits.len()];
        let (sum, count) = cross_entropy_grad(&fwd.logits, &tokens[1..], self.config.vocab, scale, Some(&mut dlogits));
        self.backward(&tokens[..n], &fwd, &feats, &dlogits, grads, mutation);
        Ok((sum, count))
    }

    fn forward(&self, tokens: &[Token], feats: &EncoderFeatures<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<Forward<T>, ModelError> {
        let c = &self.config;
        let (d, ff, heads, vocab) = (c.d_model, c.d_ff, c.heads, c.vocab);
        let n = tokens.len();
        if n > c.max_seq {
            return Err(ModelError::SequenceTooLong { len: n, max: c.max_seq });
        }
        let (p, idx) = (&self.params, &self.layout.idx);
        let w = |r: &Range<usize>| &p[r.clone()];
        let scale = T::lit((d as f64).sqrt());
        let emb = w(&idx.tok_emb);
        let mut h = vec![T::zero(); n * d];
        for (t, &tok) in tokens.iter().enumerate() {
            let row = &mut h[t * d..(t + 1) * d];
            for (x, &e) in row.iter_mut().zip(&emb[tok as usize * d..(tok as usize + 1) * d]) {
                *x = scale * e;
            }
            add_position(row, t);
        }
        let (f, kf) = (&feats.features, feats.len());
        let mut layers = Vec::with_capacity(idx.layers.len());
        for l in &idx.layers {
            let mut a = vec![T::zero(); n * d];
            let ln1 = layer_norm(&h, w(&l.ln1_g), w(&l.ln1_b), d, &mut a);
            let q = linear(&a, w(&l.wq), w(&l.bq), n, d, d);
            let k = linear(&a, w(&l.wk), w(&l.bk), n, d, d);
            let v = linear(&a, w(&l.wv), w(&l.bv), n, d, d);
            let mut o1 = vec![T::zero(); n * d];
            let p1 = attention(&q, &k, &v, n, n, d, heads, true, &mut o1);
            let mut y = linear(&o1, w(&l.wo), w(&l.bo), n, d, d);
            let drop1 = dropout(&mut y, c.dropout, rng.as_deref_mut());
            add_into(&mut h, &y);

            let mut b = vec![T::zero(); n * d];
            let ln2 = layer_norm(&h, w(&l.ln2_g), w(&l.ln2_b), d, &mut b);
            let cq = linear(&b, w(&l.cq), w(&l.cq_b), n, d, d);
            let ck = linear(f, w(&l.ck), w(&l.ck_b), kf, d, d);
            let cv = linear(f, w(&l.cv), w(&l.cv_b), kf, d, d);
            let mut o2 = vec![T::zero(); n * d];
            let p2 = attention(&cq, &ck, &cv, n, kf, d, heads, false, &mut o2);
            let mut y = linear(&o2, w(&l.co), w(&l.co_b), n, d, d);
            let drop2 = dropout(&mut y, c.dropout, rng.as_deref_mut());
            add_into(&mut h, &y);

            let mut cn = vec![T::zero(); n * d];
            let ln3 = layer_norm(&h, w(&l.ln3_g), w(&l.ln3_b), d, &mut cn);
            let u = linear(&cn, w(&l.w1), w(&l.b1), n, d, ff);
            let g: Vec<T> = u.iter().map(|&x| gelu(x)).collect();
            let mut y = linear(&g, w(&l.w2), w(&l.b2), n, ff, d);
            let drop3 = dropout(&mut y, c.dropout, rng.as_deref_mut());
            add_into(&mut h, &y);

            layers.push(LayerCache {
                ln1, a, q, k, v, p1, o1, drop1, ln2, b, cq, ck, cv, p2, o2, drop2, ln3, c: cn, u, g, drop3,
            });
        }
        let mut hf = vec![T::zero(); n * d];
        let lnf = layer_norm(&h, w(&idx.lnf_g), w(&idx.lnf_b), d, &mut hf);
        let logits = linear(&hf, w(&idx.out_w), w(&idx.out_b), n, d, vocab);
        Ok(Forward { layers, lnf, hf, logits })
    }

    fn backward(
        &self,
        tokens: &[Token],
        fwd: &Forward<T>,
        feats: &EncoderFeatures<T>,
        dlogits: &[T],
        grads: &mut [T],
        mutation: Option<Mutation>,
    ) {
        let c = &self.config;
        let (d, ff, heads, vocab) = (c.d_model, c.d_ff, c.heads, c.vocab);
        let n = tokens.len();
        let (p, idx) = (&self.params, &self.layout.idx);
        let w = |r: &Range<usize>| &p[r.clone()];
        let (f, kf) = (&feats.features, feats.len());

        let mut dhf = vec![T::zero(); n * d];
        let (gw, gb) = pair(grads, &idx.out_w, &idx.out_b);
        linear_backward(dlogits, &fwd.hf, w(&idx.out_w), n, d, vocab, gw, gb, Some(&mut dhf));
        let mut dh = vec![T::zero(); n * d];
        let (gg, gb) = pair(grads, &idx.lnf_g, &idx.lnf_b);
        layer_norm_backward(&dhf, &fwd.lnf, w(&idx.lnf_g), d, gg, gb, &mut dh, mutation);

        let mut dfeat = vec![T::zero(); kf * d];
        for (l, lc) in idx.layers.iter().zip(&fwd.layers).rev() {
            let dy = masked(&dh, &lc.drop3);
            let mut dg = vec![T::zero(); n * ff];
            let (gw, gb) = pair(grads, &l.w2, &l.b2);
            linear_backward(&dy, &lc.g, w(&l.w2), n, ff, d, gw, gb, Some(&mut dg));
            for (x, &u) in dg.iter_mut().zip(&lc.u) {
                *x = *x * gelu_grad(u, mutation);
            }
            let mut dc = vec![T::zero(); n * d];
            let (gw, gb) = pair(grads, &l.w1, &l.b1);
            linear_backward(&dg, &lc.c, w(&l.w1), n, d, ff, gw, gb, Some(&mut dc));
            let (gg, gb) = pair(grads, &l.ln3_g, &l.ln3_b);
            layer_norm_backward(&dc, &lc.ln3, w(&l.ln3_g), d, gg, gb, &mut dh, mutation);

            let dy = masked(&dh, &lc.drop2);
            let mut do2 = vec![T::zero(); n * d];
            let (gw, gb) = pair(grads, &l.co, &l.co_b);
            linear_backward(&dy, &lc.o2, w(&l.co), n, d, d, gw, gb, Some(&mut do2));
            let mut dcq = vec![T::zero(); n * d];
            let mut dck = vec![T::zero(); kf * d];
            let mut dcv = vec![T::zero(); kf * d];
            attention_backward(&do2, &lc.cq, &lc.ck, &lc.cv, &lc.p2, n, kf, d, heads, &mut dcq, &mut dck, &mut dcv, mutation);
            let mut db = vec![T::zero(); n * d];
            let (gw, gb) = pair(grads, &l.cq, &l.cq_b);
            linear_backward(&dcq, &lc.b, w(&l.cq), n, d, d, gw, gb, Some(&mut db));
            let (gw, gb) = pair(grads, &l.ck, &l.ck_b);
            linear_backward(&dck, f, w(&l.ck), kf, d, d, gw, gb, Some(&mut dfeat));
            let (gw, gb) = pair(grads, &l.cv, &l.cv_b);
            linear_backward(&dcv, f, w(&l.cv), kf, d, d, gw, gb, Some(&mut dfeat));
            let (gg, gb) = pair(grads, &l.ln2_g, &l.ln2_b);
            layer_norm_backward(&db, &lc.ln2, w(&l.ln2_g), d, gg, gb, &mut dh, mutation);

            let dy = masked(&dh, &lc.drop1);
            let mut do1 = vec![T::zero(); n * d];
            let (gw, gb) = pair(grads, &l.wo, &l.bo);
            linear_backward(&dy, &lc.o1, w(&l.wo), n, d, d, gw, gb, Some(&mut do1));
            let mut dq = vec![T::zero(); n * d];
            let mut dk = vec![T::zero(); n * d];
            let mut dv = vec![T::zero(); n * d];
            attention_backward(&do1, &lc.q, &lc.k, &lc.v, &lc.p1, n, n, d, heads, &mut dq, &mut dk, &mut dv, mutation);
            let mut da = vec![T::zero(); n * d];
            for (dx, wr, br) in [(&dq, &l.wq, &l.bq), (&dk, &l.wk, &l.bk), (&dv, &l.wv, &l.bv)] {
                let (gw, gb) = pair(grads, wr, br);
                linear_backward(dx, &lc.a, w(wr), n, d, d, gw, gb, Some(&mut da));
            }
            let (gg, gb) = pair(grads, &l.ln1_g, &l.ln1_b);
            layer_norm_backward(&da, &lc.ln1, w(&l.ln1_g), d, gg, gb, &mut dh, mutation);
        }

        let scale = T::lit((d as f64).sqrt());
        let ge = &mut grads[idx.tok_emb.clone()];
        for (t, &tok) in tokens.iter().enumerate() {
            let row = &mut ge[tok as usize * d..(tok as usize + 1) * d];
            for (g, &x) in row.iter_mut().zip(&dh[t * d..(t + 1) * d]) {
                *g = *g + scale * x;
            }
        }
        encode_backward(feats, &dfeat, p, grads, idx, mutation);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn cloud() -> PointCloud {
        PointCloud { points: (0..200).map(|i| Vec3::new((i % 20) as f64 * 0.2, (i / 20) as f64 * 0.3, (i % 3) as f64)).collect() }
    }

    #[test]
    fn causal_prefix_invariance() {
        let m = Model::<f64>::new(ModelConfig::tiny(), 3).unwrap();
        let feats = m.encode(&cloud()).unwrap();
        let a: Vec<Token> = vec![1, 3, 4, 20, 30, 40, 50, 60];
        let mut b = a.clone();
        b[5] = 999;
        b[7] = 17;
        let (la, lb) = (m.logits(&a, &feats).unwrap(), m.logits(&b, &feats).unwrap());
        let v = m.config.vocab;
        let diff = la[..5 * v].iter().zip(&lb[..5 * v]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
        assert_ne!(la[5 * v..], lb[5 * v..]);
    }

    #[test]
    fn zero_params_give_uniform_logits_and_ln_vocab_loss() {
        let c = ModelConfig::tiny();
        let m = Model::<f64>::from_params(c.clone(), vec![0.0; Layout::new(&c).total]).unwrap();
        let feats = m.encode(&cloud()).unwrap();
        let tokens: Vec<Token> = vec![1, 3, 4, 16, 2];
        let logits = m.logits(&tokens, &feats).unwrap();
        assert!(logits.iter().all(|&x| x == logits[0]));
        let loss = cross_entropy(&logits[..4 * c.vocab], &tokens[1..], c.vocab);
        assert!((loss - 2048f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn margin_drives_loss_to_zero() {
        let v = 2048;
        let mut prev = f64::INFINITY;
        for margin in [1.0f64, 5.0, 10.0, 20.0, 40.0] {
            let mut logits = vec![0.0; v];
            logits[7] = margin;
            let l = cross_entropy(&logits, &[7], v);
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn pad_targets_are_ignored() {
        let v = 2048;
        let logits: Vec<f64> = (0..2 * v).map(|i| (i as f64 * 0.01).sin()).collect();
        let one = cross_entropy(&logits[..v], &[5], v);
        assert_eq!(cross_entropy(&logits, &[5, PAD], v), one);
    }

    #[test]
    fn too_long_is_rejected() {
        let c = ModelConfig { max_seq: 4, ..ModelConfig::tiny() };
        let m = Model::<f32>::new(c, 0).unwrap();
        let feats = m.encode(&cloud()).unwrap();
        assert!(matches!(m.logits(&[1, 3, 4, 16, 16], &feats), Err(ModelError::SequenceTooLong { len: 5, max: 4 })));
    }
}
