//! Teacher-forced training with AdamW, dataset loading and checkpoints.

use super::decoder::Model;
use super::encoder::{cell_statistics, CellStats};
use super::{ModelConfig, ModelError};
use crate::gen::{splitmix64, Manifest, PointCloud, ScenePair, Split};
use crate::geom::Vec3;
use crate::lang::{cos_sin_deg, parse_scene_text, scene_origin, apply_z_rotation, SceneProgram};
use crate::tokens::{parse_token_line, tokenize, Token, PAD};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; zero disables clipping.
    pub grad_clip: f64,
    /// Linear learning-rate ramp over this many steps.
    pub warmup_steps: u64,
    /// Cosine decay from `lr` to a tenth of it over the whole run.
    pub cosine_decay: bool,
    pub seed: u64,
    /// Random rotation about the vertical axis, in whole degrees.
    pub augment_rotation: bool,
    /// Random point subsampling down to `subsample_min_fraction`.
    pub augment_subsample: bool,
    pub subsample_min_fraction: f64,
    /// Write a checkpoint every this many epochs; zero writes only the last.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip: 1.0,
            warmup_steps: 0,
            cosine_decay: false,
            seed: 0,
            augment_rotation: true,
            augment_subsample: true,
            subsample_min_fraction: 0.5,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), ModelError> {
        let ok = self.batch_size > 0
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.grad_clip >= 0.0
            && self.subsample_min_fraction > 0.0
            && self.subsample_min_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig("train config out of range".into()))
        }
    }
}

/// One training pair. The cloud shares the program's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: String,
    pub program: SceneProgram,
    pub cloud: PointCloud,
    pub tokens: Vec<Token>,
}

impl Example {
    pub fn from_pair(name: impl Into<String>, pair: ScenePair) -> Example {
        Example { name: name.into(), program: pair.program, cloud: pair.cloud, tokens: pair.tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Parameters, optimizer moments, step counter, RNG and loss history.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochStats>,
    /// Planned optimizer steps, for the decay schedule.
    pub total_steps: u64,
}

fn data_err(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Data { path: path.to_path_buf(), message: message.into() }
}

fn read(path: &Path) -> Result<String, ModelError> {
    fs::read_to_string(path).map_err(|source| ModelError::IoFailure { path: path.to_path_buf(), source })
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, ModelError> {
    let path = dir.join("manifest.json");
    serde_json::from_str(&read(&path)?).map_err(|e| data_err(&path, format!("line {}: {e}", e.line())))
}

/// Loads the `split` scenes listed in `dir/manifest.json`.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<Example>, ModelError> {
    let manifest = load_manifest(dir)?;
    let mut out = Vec::new();
    for e in manifest.split(split) {
        let scene_path = dir.join(format!("{}.scene", e.name));
        let program = parse_scene_text(&read(&scene_path)?).map_err(|err| data_err(&scene_path, err.to_string()))?;
        let xyz_path = dir.join(format!("{}.xyz", e.name));
        let cloud = PointCloud::from_xyz(&read(&xyz_path)?).map_err(|err| data_err(&xyz_path, err.to_string()))?;
        let tok_path = dir.join(format!("{}.tok", e.name));
        let text = read(&tok_path)?;
        let line = text.lines().next().unwrap_or("");
        let tokens = parse_token_line(line, 1).map_err(|err| data_err(&tok_path, err.to_string()))?;
        out.push(Example { name: e.name.clone(), program, cloud, tokens });
    }
    Ok(out)
}

/// Rotates scene and cloud together about the origin by a random whole
/// angle, re-anchors both at the program origin and retokenizes; then
/// subsamples points. Falls back to the unrotated pair when the rotated
/// scene cannot be tokenized.
pub fn augment_example(ex: &Example, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> (PointCloud, Vec<Token>) {
    let mut cloud = ex.cloud.clone();
    let mut tokens = ex.tokens.clone();
    if cfg.augment_rotation {
        let theta = rng.random_range(0..360) as f64;
        let rotated = apply_z_rotation(&ex.program, theta, [0.0, 0.0]);
        if let Ok(t) = tokenize(&rotated) {
            let o = scene_origin(&rotated);
            let (c, s) = cos_sin_deg(theta);
            cloud.points = ex
                .cloud
                .points
                .iter()
                .map(|p| Vec3::new(c * p.x - s * p.y - o[0], s * p.x + c * p.y - o[1], p.z - o[2]))
                .collect();
            tokens = t;
        }
    }
    if cfg.augment_subsample && cloud.len() > 1 {
        let f = rng.random_range(cfg.subsample_min_fraction..=1.0);
        let keep = ((cloud.len() as f64 * f).round() as usize).clamp(1, cloud.len());
        let mut idx = sample(rng, cloud.len(), keep).into_vec();
        idx.sort_unstable();
        cloud.points = idx.into_iter().map(|i| cloud.points[i]).collect();
    }
    (cloud, tokens)
}

fn scored(tokens: &[Token]) -> usize {
    tokens.iter().skip(1).filter(|&&t| t != PAD).count()
}

/// Token-weighted mean loss over `set`.
pub fn evaluate_loss(model: &Model<f32>, set: &[Example]) -> Result<f64, ModelError> {
    let (mut sum, mut count) = (0.0, 0usize);
    for ex in set {
        let stats = cell_statistics(&ex.cloud, &model.config)?;
        let n = scored(&ex.tokens);
        sum += model.loss(&stats, &ex.tokens)? * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

impl TrainState {
    pub fn new(model_config: ModelConfig, cfg: &TrainConfig) -> Result<TrainState, ModelError> {
        cfg.check()?;
        let model = Model::<f32>::new(model_config, splitmix64(cfg.seed ^ 0x1A17))?;
        let n = model.params.len();
        Ok(TrainState {
            model,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed)),
            history: Vec::new(),
            total_steps: 0,
        })
    }

    fn lr_at(&self, cfg: &TrainConfig) -> f64 {
        let mut lr = cfg.lr;
        if cfg.warmup_steps > 0 {
            lr *= ((self.step + 1) as f64 / cfg.warmup_steps as f64).min(1.0);
        }
        if cfg.cosine_decay && self.total_steps > 0 {
            let t = (self.step as f64 / self.total_steps as f64).min(1.0);
            lr *= 0.1 + 0.45 * (1.0 + (std::f64::consts::PI * t).cos());
        }
        lr
    }

    /// Clips and applies one AdamW update with decoupled weight decay.
    fn apply(&mut self, grads: &mut [f32], decay: &[bool], cfg: &TrainConfig) -> f64 {
        let lr = self.lr_at(cfg);
        let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            let s = (cfg.grad_clip / norm) as f32;
            grads.iter_mut().for_each(|g| *g *= s);
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 / (1.0 - cfg.beta1.powi(t)) as f32;
        let c2 = 1.0 / (1.0 - cfg.beta2.powi(t)) as f32;
        let (lr32, eps, wd) = (lr as f32, cfg.eps as f32, cfg.weight_decay as f32);
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let p = &mut self.model.params[i];
            if decay[i] {
                *p -= lr32 * wd * *p;
            }
            *p -= lr32 * (self.m[i] * c1) / ((self.v[i] * c2).sqrt() + eps);
        }
        lr
    }

    /// Runs one epoch over `train` in a seeded random order, calling
    /// `on_step` after every optimizer step.
    pub fn run_epoch(
        &mut self,
        train: &[Example],
        cached: Option<&[CellStats]>,
        cfg: &TrainConfig,
        on_step: &mut dyn FnMut(&TrainState) -> Result<(), ModelError>,
    ) -> Result<(f64, f64), ModelError> {
        let epoch = self.history.len() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let decay = self.model.layout.decay_mask();
        let mut grads = vec![0.0f32; self.model.params.len()];
        let (mut sum, mut count, mut lr) = (0.0, 0usize, self.lr_at(cfg));
        for batch in order.chunks(cfg.batch_size) {
            let mut items = Vec::with_capacity(batch.len());
            for &i in batch {
                let ex = &train[i];
                if cached.is_some() {
                    items.push((None, ex.tokens.clone(), i));
                } else {
                    let (cloud, tokens) = augment_example(ex, cfg, &mut self.rng);
                    items.push((Some(cell_statistics(&cloud, &self.model.config)?), tokens, i));
                }
            }
            let total: usize = items.iter().map(|it| scored(&it.1)).sum();
            if total == 0 {
                continue;
            }
            grads.fill(0.0);
            let mut batch_sum = 0.0;
            for (stats, tokens, i) in &items {
                let stats = match (stats, cached) {
                    (Some(s), _) => s,
                    (None, Some(c)) => &c[*i],
                    (None, None) => unreachable!("stats are computed when not cached"),
                };
                let dropout_rng = (self.model.config.dropout > 0.0).then_some(&mut self.rng);
                let (s, _) = self.model.loss_and_grad(stats, tokens, &mut grads, 1.0 / total as f64, None, dropout_rng)?;
                batch_sum += s;
            }
            if !batch_sum.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    step: self.step,
                    detail: format!("batch loss {batch_sum}, scenes {:?}", batch.iter().map(|&i| &train[i].name).collect::<Vec<_>>()),
                });
            }
            lr = self.apply(&mut grads, &decay, cfg);
            on_step(self)?;
            sum += batch_sum;
            count += total;
        }
        Ok((if count == 0 { 0.0 } else { sum / count as f64 }, lr))
    }
}

/// Trains from a seeded initialization. `on_epoch` runs after every epoch
/// with the fresh statistics; returning an error aborts training.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats, &TrainState) -> Result<(), ModelError>,
) -> Result<TrainState, ModelError> {
    train_with_steps(train_set, val_set, model_config, cfg, |_| Ok(()), on_epoch)
}

/// [`train`] with an extra hook after every optimizer step.
pub fn train_with_steps(
    train_set: &[Example],
    val_set: &[Example],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainState) -> Result<(), ModelError>,
    mut on_epoch: impl FnMut(&EpochStats, &TrainState) -> Result<(), ModelError>,
) -> Result<TrainState, ModelError> {
    let mut state = TrainState::new(model_config.clone(), cfg)?;
    state.total_steps = (cfg.epochs * train_set.len().div_ceil(cfg.batch_size)) as u64;
    for ex in train_set {
        if ex.tokens.len() > model_config.max_seq {
            return Err(ModelError::SequenceTooLong { len: ex.tokens.len(), max: model_config.max_seq });
        }
    }
    let cached = if cfg.augment_rotation || cfg.augment_subsample {
        None
    } else {
        Some(train_set.iter().map(|ex| cell_statistics(&ex.cloud, model_config)).collect::<Result<Vec<_>, _>>()?)
    };
    for epoch in 1..=cfg.epochs {
        let (train_loss, lr) = state.run_epoch(train_set, cached.as_deref(), cfg, &mut on_step)?;
        if !train_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, step: state.step, detail: format!("epoch loss {train_loss}") });
        }
        let val_loss = if val_set.is_empty() { None } else { Some(evaluate_loss(&state.model, val_set)?) };
        let stats = EpochStats { epoch, step: state.step, train_loss, val_loss, lr };
        state.history.push(stats.clone());
        on_epoch(&stats, &state)?;
    }
    Ok(state)
}

/// Loss history as CSV: `epoch,step,train_loss,val_loss,lr`.
pub fn loss_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,step,train_loss,val_loss,lr\n");
    for h in history {
        let val = h.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:.6},{},{}", h.epoch, h.step, h.train_loss, val, h.lr);
    }
    out
}

/// Trains on the train split of a generated dataset, validating on its
/// val split. Writes `train_config.json`, `checkpoint_epochNNNN.ssck`,
/// `model.ssck` and `loss.csv` into `out_dir`.
pub fn train_dataset(data_dir: &Path, out_dir: &Path, model_config: &ModelConfig, cfg: &TrainConfig) -> Result<TrainState, ModelError> {
    let train_set = load_split(data_dir, Split::Train)?;
    let val_set = load_split(data_dir, Split::Val)?;
    if train_set.is_empty() {
        return Err(data_err(&data_dir.join("manifest.json"), "no training scenes"));
    }
    let io = |path: PathBuf, r: std::io::Result<()>| r.map_err(|source| ModelError::IoFailure { path, source });
    io(out_dir.to_path_buf(), fs::create_dir_all(out_dir))?;
    let echo = serde_json::json!({ "model": model_config, "train": cfg });
    let path = out_dir.join("train_config.json");
    io(path.clone(), fs::write(&path, serde_json::to_string_pretty(&echo).expect("serializable") + "\n"))?;
    let state = train(&train_set, &val_set, model_config, cfg, |stats, state| {
        let path = out_dir.join("loss.csv");
        io(path.clone(), fs::write(&path, loss_csv(&state.history)))?;
        if cfg.checkpoint_every > 0 && stats.epoch % cfg.checkpoint_every == 0 {
            let ck = Checkpoint::of(state, cfg);
            save_checkpoint(&out_dir.join(format!("checkpoint_epoch{:04}.ssck", stats.epoch)), &ck)?;
        }
        Ok(())
    })?;
    save_checkpoint(&out_dir.join("model.ssck"), &Checkpoint::of(&state, cfg))?;
    Ok(state)
}

const MAGIC: &[u8; 4] = b"SSCK";
const VERSION: u32 = 1;

/// Parameters plus the configs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub epoch: usize,
    pub step: u64,
    pub params: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: Option<TrainConfig>,
    epoch: usize,
    step: u64,
    params: usize,
}

impl Checkpoint {
    pub fn of(state: &TrainState, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint {
            model_config: state.model.config.clone(),
            train_config: Some(cfg.clone()),
            epoch: state.history.len(),
            step: state.step,
            params: state.model.params.clone(),
        }
    }

    pub fn model(&self) -> Result<Model<f32>, ModelError> {
        Model::from_params(self.model_config.clone(), self.params.clone())
    }

    /// `SSCK`, version (u32 LE), header length (u64 LE), JSON header,
    /// then the parameters as f32 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model_config.clone(),
            train: self.train_config.clone(),
            epoch: self.epoch,
            step: self.step,
            params: self.params.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, String> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err("missing SSCK magic".into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).ok_or("truncated")?;
        let json = body.get(..hlen).ok_or("truncated header")?;
        let header: Header = serde_json::from_slice(json).map_err(|e| format!("header: {e}"))?;
        let data = &body[hlen..];
        if data.len() != 4 * header.params {
            return Err(format!("expected {} parameter bytes, found {}", 4 * header.params, data.len()));
        }
        let params: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err("non-finite parameter".into());
        }
        Ok(Checkpoint { model_config: header.model, train_config: header.train, epoch: header.epoch, step: header.step, params })
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), ModelError> {
    fs::write(path, ck.to_bytes()).map_err(|source| ModelError::IoFailure { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::IoFailure { path: path.to_path_buf(), source })?;
    let ck = Checkpoint::from_bytes(&bytes).map_err(|message| ModelError::BadCheckpoint { path: path.to_path_buf(), message })?;
    ck.model().map_err(|e| ModelError::BadCheckpoint { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate_pair, GenConfig};

    fn examples(n: usize) -> Vec<Example> {
        let g = GenConfig { max_points: 3000, ..GenConfig::layout_only_single_room() };
        (0..n).map(|i| Example::from_pair(format!("s{i}"), generate_pair(&g, i as u64).unwrap())).collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 2, lr: 3e-3, augment_rotation: false, augment_subsample: false, ..TrainConfig::default() }
    }

    #[test]
    fn identical_seeds_identical_curves() {
        let data = examples(4);
        let c = ModelConfig { d_model: 32, layers: 1, heads: 2, d_ff: 64, ..ModelConfig::default() };
        let aug = TrainConfig { augment_rotation: true, augment_subsample: true, ..quick() };
        let a = train(&data, &data[..1], &c, &aug, |_, _| Ok(())).unwrap();
        let b = train(&data, &data[..1], &c, &aug, |_, _| Ok(())).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn initial_loss_near_uniform_and_decreasing() {
        let data = examples(4);
        let c = ModelConfig { d_model: 32, layers: 1, heads: 2, d_ff: 64, ..ModelConfig::default() };
        let init = TrainState::new(c.clone(), &quick()).unwrap();
        let l0 = evaluate_loss(&init.model, &data).unwrap();
        assert!((l0 - 2048f64.ln()).abs() < 0.5, "{l0}");
        let s = train(&data, &[], &c, &quick(), |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = s.history.iter().map(|h| h.train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn rotation_keeps_cloud_aligned() {
        let ex = &examples(1)[0];
        let cfg = TrainConfig { augment_subsample: false, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (cloud, tokens) = augment_example(ex, &cfg, &mut rng);
        let p = crate::tokens::detokenize(&tokens, 0.05).unwrap();
        let geom = crate::geom::interpret_scene(&p).unwrap();
        let (lo, hi) = geom.bounds().unwrap();
        for q in &cloud.points {
            assert!(q.x > lo.x - 0.2 && q.x < hi.x + 0.2 && q.y > lo.y - 0.2 && q.y < hi.y + 0.2);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = ModelConfig::tiny();
        let s = TrainState::new(c, &quick()).unwrap();
        let ck = Checkpoint::of(&s, &quick());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut bad = ck.to_bytes();
        bad.pop();
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
    }
}
