//! Autoregressive decoding with cached keys and values.

use super::decoder::Model;
use super::encoder::EncoderFeatures;
use super::ops::{add_position, attention, gelu, layer_norm, linear};
use super::Real;
use crate::tokens::{GrammarState, Token, START, STOP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Argmax; ties go to the lowest token id.
    Greedy,
    /// Samples from the smallest set of most likely tokens whose mass
    /// reaches `top_p`.
    Nucleus { top_p: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Starts with START; ends with STOP unless truncated.
    pub tokens: Vec<Token>,
    /// The maximum length was reached before STOP.
    pub truncated: bool,
}

pub(crate) struct KvCache<T> {
    self_k: Vec<Vec<T>>,
    self_v: Vec<Vec<T>>,
    cross_k: Vec<Vec<T>>,
    cross_v: Vec<Vec<T>>,
    len: usize,
}

impl<T: Real> KvCache<T> {
    pub(crate) fn new(model: &Model<T>, feats: &EncoderFeatures<T>) -> Self {
        let (p, d, kf) = (&model.params, model.config.d_model, feats.len());
        let w = |r: &std::ops::Range<usize>| &p[r.clone()];
        let layers = &model.layout.idx.layers;
        KvCache {
            self_k: vec![Vec::new(); layers.len()],
            self_v: vec![Vec::new(); layers.len()],
            cross_k: layers.iter().map(|l| linear(&feats.features, w(&l.ck), w(&l.ck_b), kf, d, d)).collect(),
            cross_v: layers.iter().map(|l| linear(&feats.features, w(&l.cv), w(&l.cv_b), kf, d, d)).collect(),
            len: 0,
        }
    }

    /// Feeds the next token and returns its vocabulary logits.
    pub(crate) fn step(&mut self, model: &Model<T>, token: Token) -> Vec<T> {
        let c = &model.config;
        let (d, ff, heads) = (c.d_model, c.d_ff, c.heads);
        let (p, idx) = (&model.params, &model.layout.idx);
        let w = |r: &std::ops::Range<usize>| &p[r.clone()];
        let pos = self.len;
        self.len += 1;
        let scale = T::lit((d as f64).sqrt());
        let mut h: Vec<T> = w(&idx.tok_emb)[token as usize * d..(token as usize + 1) * d].iter().map(|&e| scale * e).collect();
        add_position(&mut h, pos);
        let mut x = vec![T::zero(); d];
        let mut o = vec![T::zero(); d];
        for (li, l) in idx.layers.iter().enumerate() {
            layer_norm(&h, w(&l.ln1_g), w(&l.ln1_b), d, &mut x);
            let q = linear(&x, w(&l.wq), w(&l.bq), 1, d, d);
            self.self_k[li].extend(linear(&x, w(&l.wk), w(&l.bk), 1, d, d));
            self.self_v[li].extend(linear(&x, w(&l.wv), w(&l.bv), 1, d, d));
            attention(&q, &self.self_k[li], &self.self_v[li], 1, self.len, d, heads, false, &mut o);
            add(&mut h, &linear(&o, w(&l.wo), w(&l.bo), 1, d, d));

            layer_norm(&h, w(&l.ln2_g), w(&l.ln2_b), d, &mut x);
            let q = linear(&x, w(&l.cq), w(&l.cq_b), 1, d, d);
            let kf = self.cross_k[li].len() / d;
            attention(&q, &self.cross_k[li], &self.cross_v[li], 1, kf, d, heads, false, &mut o);
            add(&mut h, &linear(&o, w(&l.co), w(&l.co_b), 1, d, d));

            layer_norm(&h, w(&l.ln3_g), w(&l.ln3_b), d, &mut x);
            let g: Vec<T> = linear(&x, w(&l.w1), w(&l.b1), 1, d, ff).into_iter().map(gelu).collect();
            add(&mut h, &linear(&g, w(&l.w2), w(&l.b2), 1, ff, d));
        }
        layer_norm(&h, w(&idx.lnf_g), w(&idx.lnf_b), d, &mut x);
        linear(&x, w(&idx.out_w), w(&idx.out_b), 1, d, c.vocab)
    }
}

fn add<T: Real>(h: &mut [T], y: &[T]) {
    for (a, &b) in h.iter_mut().zip(y) {
        *a = *a + b;
    }
}

fn argmax(logits: &[f64], allowed: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in logits.iter().enumerate() {
        if allowed.is_some_and(|m| !m[i]) || x.is_nan() {
            continue;
        }
        if best.is_none_or(|b| x > logits[b]) {
            best = Some(i);
        }
    }
    best
}

fn nucleus(logits: &[f64], allowed: Option<&[bool]>, top_p: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    let first = argmax(logits, allowed)?;
    let max = logits[first];
    let mut cand: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|&(i, x)| !x.is_nan() && allowed.is_none_or(|m| m[i]))
        .map(|(i, &x)| (i, (x - max).exp()))
        .collect();
    let total: f64 = cand.iter().map(|c| c.1).sum();
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mass = 0.0;
    let mut keep = 0;
    for (_, w) in &cand {
        mass += w / total;
        keep += 1;
        if mass >= top_p {
            break;
        }
    }
    let cand = &cand[..keep];
    let kept: f64 = cand.iter().map(|c| c.1).sum();
    let mut u = rng.random::<f64>() * kept;
    for &(i, w) in cand {
        if u < w {
            return Some(i);
        }
        u -= w;
    }
    cand.last().map(|c| c.0)
}

/// Generates from START until STOP or the configured maximum length.
/// With `constrained`, only grammar-valid tokens are eligible, so the
/// result always detokenizes strictly.
pub fn decode<T: Real>(model: &Model<T>, feats: &EncoderFeatures<T>, strategy: Strategy, constrained: bool) -> DecodeOutput {
    let max_len = model.config.max_seq;
    let mut grammar = GrammarState::with_max_len(max_len);
    let mut rng = match strategy {
        Strategy::Nucleus { seed, .. } => ChaCha8Rng::seed_from_u64(seed),
        Strategy::Greedy => ChaCha8Rng::seed_from_u64(0),
    };
    let mut cache = KvCache::new(model, feats);
    let mut tokens = vec![START];
    grammar.push(START).expect("START opens every sequence");
    let mut mask = vec![false; model.config.vocab];
    while tokens.len() < max_len {
        let logits: Vec<f64> = cache.step(model, tokens[tokens.len() - 1]).into_iter().map(Real::f64).collect();
        let allowed = constrained.then(|| {
            grammar.fill_mask(&mut mask);
            &mask[..]
        });
        let next = match strategy {
            Strategy::Greedy => argmax(&logits, allowed),
            Strategy::Nucleus { top_p, .. } => nucleus(&logits, allowed, top_p, &mut rng),
        };
        let Some(next) = next else { break };
        let next = next as Token;
        tokens.push(next);
        if constrained {
            grammar.push(next).expect("masked choice is valid");
        }
        if next == STOP {
            return DecodeOutput { tokens, truncated: false };
        }
    }
    DecodeOutput { tokens, truncated: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::PointCloud;
    use crate::geom::Vec3;
    use crate::model::ModelConfig;
    use crate::tokens::detokenize;

    fn setup(seed: u64) -> (Model<f64>, EncoderFeatures<f64>) {
        let m = Model::<f64>::new(ModelConfig::tiny(), seed).unwrap();
        let cloud = PointCloud { points: (0..64).map(|i| Vec3::new(i as f64 * 0.07, (i % 5) as f64 * 0.4, 1.0)).collect() };
        let f = m.encode(&cloud).unwrap();
        (m, f)
    }

    #[test]
    fn cached_steps_match_full_forward() {
        let (m, f) = setup(1);
        let tokens: Vec<Token> = vec![1, 3, 4, 16, 40, 900, 17];
        let full = m.logits(&tokens, &f).unwrap();
        let mut cache = KvCache::new(&m, &f);
        let v = m.config.vocab;
        for (t, &tok) in tokens.iter().enumerate() {
            let step = cache.step(&m, tok);
            let diff = step.iter().zip(&full[t * v..(t + 1) * v]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-10, "position {t}: {diff}");
        }
    }

    #[test]
    fn constrained_rollouts_detokenize() {
        for seed in 0..5 {
            let (mut m, f) = setup(seed);
            m.config.max_seq = 64;
            let out = decode(&m, &f, Strategy::Nucleus { top_p: 0.95, seed }, true);
            assert!(!out.truncated);
            assert!(detokenize(&out.tokens, 0.05).is_ok());
        }
    }

    #[test]
    fn tiny_top_p_is_greedy() {
        let (mut m, f) = setup(4);
        m.config.max_seq = 48;
        let g = decode(&m, &f, Strategy::Greedy, true);
        let n = decode(&m, &f, Strategy::Nucleus { top_p: 1e-12, seed: 9 }, true);
        assert_eq!(g, n);
        assert_eq!(g, decode(&m, &f, Strategy::Greedy, true));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0], None), Some(1));
        assert_eq!(argmax(&[1.0, 3.0, 3.0], Some(&[true, false, true])), Some(2));
    }
}
