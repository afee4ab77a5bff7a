use super::{ModelConfig, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use std::ops::Range;

/// Per-cell encoder input width: log count, mean offset (3), spread (3),
/// cell coordinates (3).
pub const CELL_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamGroup {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    /// Whether weight decay applies.
    pub decay: bool,
    pub init: Init,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerIdx {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub cq: Range<usize>,
    pub cq_b: Range<usize>,
    pub ck: Range<usize>,
    pub ck_b: Range<usize>,
    pub cv: Range<usize>,
    pub cv_b: Range<usize>,
    pub co: Range<usize>,
    pub co_b: Range<usize>,
    pub ln3_g: Range<usize>,
    pub ln3_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Idx {
    pub tok_emb: Range<usize>,
    pub enc_w1: Range<usize>,
    pub enc_b1: Range<usize>,
    pub enc_w2: Range<usize>,
    pub enc_b2: Range<usize>,
    pub layers: Vec<LayerIdx>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
}

/// Names, shapes and offsets of every learnable array in the flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub groups: Vec<ParamGroup>,
    pub total: usize,
    pub(crate) idx: Idx,
}

struct Builder {
    groups: Vec<ParamGroup>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init, decay: bool) -> Range<usize> {
        let len = shape.iter().product();
        let g = ParamGroup { name, shape: shape.to_vec(), offset: self.total, len, decay, init };
        self.total += len;
        let r = g.range();
        self.groups.push(g);
        r
    }
    fn weight(&mut self, name: String, rows: usize, cols: usize, std: f64) -> Range<usize> {
        self.add(name, &[rows, cols], Init::Normal(std), true)
    }
    fn bias(&mut self, name: String, n: usize) -> Range<usize> {
        self.add(name, &[n], Init::Zeros, false)
    }
    fn norm(&mut self, name: String, n: usize) -> (Range<usize>, Range<usize>) {
        (self.add(format!("{name}.gain"), &[n], Init::Ones, false), self.bias(format!("{name}.bias"), n))
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Layout {
        let (d, ff, v) = (c.d_model, c.d_ff, c.vocab);
        let std = 0.02;
        let proj_std = std / (2.0 * c.layers.max(1) as f64).sqrt();
        let mut b = Builder { groups: Vec::new(), total: 0 };
        let tok_emb = b.add("tok_emb".into(), &[v, d], Init::Normal(std), false);
        let enc_w1 = b.weight("encoder.w1".into(), CELL_FEATURES, d, (1.0 / CELL_FEATURES as f64).sqrt());
        let enc_b1 = b.bias("encoder.b1".into(), d);
        let enc_w2 = b.weight("encoder.w2".into(), d, d - 3, (1.0 / d as f64).sqrt());
        let enc_b2 = b.bias("encoder.b2".into(), d - 3);
        let mut layers = Vec::new();
        for l in 0..c.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let (ln1_g, ln1_b) = b.norm(p("ln1"), d);
            let wq = b.weight(p("self.wq"), d, d, std);
            let bq = b.bias(p("self.bq"), d);
            let wk = b.weight(p("self.wk"), d, d, std);
            let bk = b.bias(p("self.bk"), d);
            let wv = b.weight(p("self.wv"), d, d, std);
            let bv = b.bias(p("self.bv"), d);
            let wo = b.weight(p("self.wo"), d, d, proj_std);
            let bo = b.bias(p("self.bo"), d);
            let (ln2_g, ln2_b) = b.norm(p("ln2"), d);
            let cq = b.weight(p("cross.wq"), d, d, std);
            let cq_b = b.bias(p("cross.bq"), d);
            let ck = b.weight(p("cross.wk"), d, d, std);
            let ck_b = b.bias(p("cross.bk"), d);
            let cv = b.weight(p("cross.wv"), d, d, std);
            let cv_b = b.bias(p("cross.bv"), d);
            let co = b.weight(p("cross.wo"), d, d, proj_std);
            let co_b = b.bias(p("cross.bo"), d);
            let (ln3_g, ln3_b) = b.norm(p("ln3"), d);
            let w1 = b.weight(p("ffn.w1"), d, ff, std);
            let b1 = b.bias(p("ffn.b1"), ff);
            let w2 = b.weight(p("ffn.w2"), ff, d, proj_std);
            let b2 = b.bias(p("ffn.b2"), d);
            layers.push(LayerIdx {
                ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, cq, cq_b, ck, ck_b, cv, cv_b, co, co_b,
                ln3_g, ln3_b, w1, b1, w2, b2,
            });
        }
        let (lnf_g, lnf_b) = b.norm("final_ln".into(), d);
        let out_w = b.weight("out.w".into(), d, v, std);
        let out_b = b.bias("out.b".into(), v);
        let idx = Idx { tok_emb, enc_w1, enc_b1, enc_w2, enc_b2, layers, lnf_g, lnf_b, out_w, out_b };
        Layout { groups: b.groups, total: b.total, idx }
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Seeded initialization following each group's [`Init`].
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![T::zero(); self.total];
        for g in &self.groups {
            let slot = &mut out[g.range()];
            match g.init {
                Init::Zeros => {}
                Init::Ones => slot.fill(T::one()),
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    for x in slot {
                        *x = T::lit(dist.sample(&mut rng));
                    }
                }
            }
        }
        out
    }

    /// Mask of entries that receive weight decay.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.total];
        for g in self.groups.iter().filter(|g| g.decay) {
            m[g.range()].fill(true);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let c = ModelConfig::default();
        let l = Layout::new(&c);
        let mut off = 0;
        for g in &l.groups {
            assert_eq!(g.offset, off);
            off += g.len;
        }
        assert_eq!(off, l.total);
        assert!(!l.group("tok_emb").unwrap().decay);
        assert!(l.group("layer1.ffn.w2").unwrap().decay);
        assert!(!l.group("layer0.ln1.gain").unwrap().decay);
        let p: Vec<f32> = l.init(0);
        assert!(p.iter().all(|x| x.is_finite()));
        assert_eq!(p[l.group("final_ln.gain").unwrap().offset], 1.0);
    }
}
