//! `scenescript` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (reported with the
//! offending file and line), 3 internal error.

use clap::{Args, Parser, Subcommand};
use scenescript::eval::{
    aggregate_detection, aggregate_layout, detection_csv, detection_reports, layout_csv, layout_report_programs,
    voxel_geometry_iou, ThresholdSet, DETECTION_IOU_THRESHOLDS,
};
use scenescript::gen::{generate_dataset, GenConfig, GenError, PointCloud};
use scenescript::geom::{export_obj, extract_oriented_boxes, interpret_scene, Vec3};
use scenescript::lang::{
    canonicalize, parse_scene_text, serialize_scene_text, translate_scene, validate_scene, SceneProgram,
    DEFAULT_RESOLUTION,
};
use scenescript::model::{
    decode, load_checkpoint, train_dataset, ModelConfig, ModelError, Strategy, TrainConfig,
};
use scenescript::tokens::{
    detokenize, detokenize_lenient, format_token_line, parse_token_line, token_accuracy_slack, tokenize, Token,
};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "scenescript", version, about = "Structured indoor-scene language toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct OutArg {
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a scene file and print its canonical form.
    Parse {
        file: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Interpret a scene file into Wavefront OBJ.
    Interp {
        file: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Encode a scene file as one line of tokens.
    Tokenize {
        file: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Decode a token file back into scene text.
    Detokenize {
        file: PathBuf,
        /// Keep the recoverable prefix of malformed sequences.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate a dataset of scenes, point clouds and token sequences.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Generator config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on a generated dataset.
    Train {
        /// Dataset directory containing manifest.json.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints and the loss curve.
        #[arg(long)]
        out: PathBuf,
        /// Training config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model config (JSON).
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict scenes from point clouds (.xyz file or directory).
    Infer {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "top_p")]
        greedy: bool,
        #[arg(long)]
        top_p: Option<f64>,
        /// Restrict every step to grammar-valid tokens.
        #[arg(long)]
        constrained: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Move the cloud minimum to the origin before encoding and shift the
        /// prediction back afterwards.
        #[arg(long)]
        recenter: bool,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: f64,
        /// Output file, or directory when the input is a directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Layout F1 between predicted and ground-truth scenes.
    EvalLayout {
        pred: PathBuf,
        gt: PathBuf,
        /// Comma-separated distance thresholds in meters.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Also write per-scene rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Oriented-box detection F1 at IoU 0.25 and 0.5.
    EvalBbox {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Surface-voxel IoU between interpreted geometries.
    EvalGeomIou {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Token accuracy with value slack.
    TokenAcc {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 0)]
        slack: u32,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data { path: PathBuf, line: Option<usize>, message: String },
    Internal(String),
}

impl CliError {
    fn data(path: &Path, line: Option<usize>, message: impl ToString) -> CliError {
        CliError::Data { path: path.to_path_buf(), line, message: message.to_string() }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data { path, line: Some(l), message } => write!(f, "{}:{l}: {message}", path.display()),
            CliError::Data { path, line: None, message } => write!(f, "{}: {message}", path.display()),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::data(path, None, e))
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::data(p, None, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Internal(e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::data(path, Some(e.line()), e))
}

fn load_scene(path: &Path) -> Result<SceneProgram> {
    parse_scene_text(&read(path)?).map_err(|e| CliError::data(path, Some(e.line()), e))
}

/// First non-empty line of a token file.
fn load_tokens(path: &Path) -> Result<Vec<Token>> {
    let text = read(path)?;
    let (i, line) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| CliError::data(path, None, "no token sequence"))?;
    parse_token_line(line, i + 1).map_err(|e| CliError::data(path, Some(i + 1), e))
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    PointCloud::from_xyz(&read(path)?).map_err(|e| CliError::data(path, Some(e.line), e))
}

/// Files with extension `ext` in `dir`, sorted by name.
fn list(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(dir, None, e))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CliError::data(dir, None, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Pairs `pred` and `gt` files: both plain files, or both directories
/// matched by file name over the ground-truth listing.
fn pairs(pred: &Path, gt: &Path, ext: &str) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (pred.is_dir(), gt.is_dir()) {
        (false, false) => {
            let name = gt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(vec![(name, pred.to_path_buf(), gt.to_path_buf())])
        }
        (true, true) => {
            let mut out = Vec::new();
            for g in list(gt, ext)? {
                let file = g.file_name().expect("listed file has a name");
                let p = pred.join(file);
                if !p.is_file() {
                    return Err(CliError::data(&p, None, "no prediction for this ground-truth file"));
                }
                out.push((g.file_stem().expect("has stem").to_string_lossy().into_owned(), p, g));
            }
            if out.is_empty() {
                return Err(CliError::data(gt, None, format!("no .{ext} files")));
            }
            Ok(out)
        }
        _ => Err(CliError::Usage("pred and gt must both be files or both be directories".into())),
    }
}

fn gen_error(e: GenError) -> CliError {
    match e {
        GenError::IoFailure { path, source } => CliError::data(&path, None, source),
        GenError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Internal(other.to_string()),
    }
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::IoFailure { path, source } => CliError::data(&path, None, source),
        ModelError::Data { path, message } => CliError::data(&path, None, message),
        ModelError::BadCheckpoint { path, message } => CliError::data(&path, None, message),
        ModelError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Internal(other.to_string()),
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Parse { file, out } => {
            let p = load_scene(&file)?;
            if let Some(v) = validate_scene(&p).first() {
                return Err(CliError::data(&file, None, v));
            }
            let c = canonicalize(&p).map_err(|e| CliError::data(&file, None, e))?;
            write_out(&out.out, &serialize_scene_text(&c))
        }
        Cmd::Interp { file, out } => {
            let p = load_scene(&file)?;
            let g = interpret_scene(&p).map_err(|e| CliError::data(&file, None, e))?;
            write_out(&out.out, &export_obj(&g))
        }
        Cmd::Tokenize { file, out } => {
            let p = load_scene(&file)?;
            let t = tokenize(&p).map_err(|e| CliError::data(&file, None, e))?;
            write_out(&out.out, &(format_token_line(&t) + "\n"))
        }
        Cmd::Detokenize { file, lenient, resolution, out } => {
            check_resolution(resolution)?;
            let t = load_tokens(&file)?;
            let p = if lenient {
                let d = detokenize_lenient(&t, resolution);
                if d.skipped > 0 || !d.terminated {
                    eprintln!("{}: skipped {} malformed command(s); terminated: {}", file.display(), d.skipped, d.terminated);
                }
                d.program
            } else {
                detokenize(&t, resolution).map_err(|e| CliError::data(&file, Some(1), e))?
            };
            write_out(&out.out, &serialize_scene_text(&p))
        }
        Cmd::Gen { n, seed, out, config } => {
            let cfg: GenConfig = match config {
                Some(p) => read_json(&p)?,
                None => GenConfig::default(),
            };
            let m = generate_dataset(&cfg, n, seed, &out).map_err(gen_error)?;
            eprintln!("wrote {} scenes to {}", m.count, out.display());
            Ok(())
        }
        Cmd::Train { data, out, config, model_config, seed, epochs } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            let mc: ModelConfig = match model_config {
                Some(p) => read_json(&p)?,
                None => ModelConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let state = train_dataset(&data, &out, &mc, &cfg).map_err(model_error)?;
            if let Some(h) = state.history.last() {
                eprintln!("epoch {} step {} train loss {:.4}", h.epoch, h.step, h.train_loss);
            }
            Ok(())
        }
        Cmd::Infer { input, checkpoint, greedy: _, top_p, constrained, seed, recenter, resolution, out } => {
            check_resolution(resolution)?;
            let strategy = match top_p {
                Some(p) if !(p > 0.0 && p <= 1.0) => return Err(CliError::Usage("--top-p must lie in (0, 1]".into())),
                Some(top_p) => Strategy::Nucleus { top_p, seed },
                None => Strategy::Greedy,
            };
            let model = load_checkpoint(&checkpoint).map_err(model_error)?.model().map_err(model_error)?;
            let infer_one = |path: &Path| -> Result<String> {
                let mut cloud = load_cloud(path)?;
                let shift = if recenter { cloud.min_corner() } else { Vec3::ZERO };
                cloud = cloud.translated(-shift);
                let feats = model.encode(&cloud).map_err(|e| CliError::data(path, None, e))?;
                let d = decode(&model, &feats, strategy, constrained);
                if d.truncated {
                    eprintln!("{}: output truncated at {} tokens", path.display(), d.tokens.len());
                }
                let lenient = detokenize_lenient(&d.tokens, resolution);
                if lenient.skipped > 0 {
                    eprintln!("{}: skipped {} malformed command(s)", path.display(), lenient.skipped);
                }
                let p = translate_scene(&lenient.program, [shift.x, shift.y, shift.z]);
                Ok(serialize_scene_text(&p))
            };
            if input.is_dir() {
                let dir = out.ok_or_else(|| CliError::Usage("--out <dir> is required for directory input".into()))?;
                fs::create_dir_all(&dir).map_err(|e| CliError::data(&dir, None, e))?;
                for f in list(&input, "xyz")? {
                    let text = infer_one(&f)?;
                    let target = dir.join(f.with_extension("scene").file_name().expect("has name"));
                    fs::write(&target, text).map_err(|e| CliError::data(&target, None, e))?;
                }
                Ok(())
            } else {
                let text = infer_one(&input)?;
                write_out(&out, &text)
            }
        }
        Cmd::EvalLayout { pred, gt, thresholds, csv, out } => {
            let t = match thresholds {
                Some(v) => ThresholdSet::new(v).map_err(|e| CliError::Usage(e.to_string()))?,
                None => ThresholdSet::default(),
            };
            let mut rows = Vec::new();
            for (name, p, g) in pairs(&pred, &gt, "scene")? {
                rows.push((name, layout_report_programs(&load_scene(&p)?, &load_scene(&g)?, &t)));
            }
            let reports: Vec<_> = rows.iter().map(|r| r.1.clone()).collect();
            let dataset = aggregate_layout(&reports).map_err(|e| CliError::Internal(e.to_string()))?;
            if let Some(c) = csv {
                fs::write(&c, layout_csv(&rows)).map_err(|e| CliError::data(&c, None, e))?;
            }
            let scenes: Vec<_> = rows.iter().map(|(n, r)| json!({ "scene": n, "report": r })).collect();
            write_out(&out.out, &json_text(&json!({ "dataset": dataset, "scenes": scenes }))?)
        }
        Cmd::EvalBbox { pred, gt, csv, out } => {
            let mut rows = Vec::new();
            for (name, p, g) in pairs(&pred, &gt, "scene")? {
                let (pb, gb) = (extract_oriented_boxes(&load_scene(&p)?), extract_oriented_boxes(&load_scene(&g)?));
                rows.push((name, detection_reports(&pb, &gb, &DETECTION_IOU_THRESHOLDS)));
            }
            let mut dataset = Vec::new();
            for k in 0..DETECTION_IOU_THRESHOLDS.len() {
                let at: Vec<_> = rows.iter().map(|r| r.1[k].clone()).collect();
                dataset.push(aggregate_detection(&at).map_err(|e| CliError::Internal(e.to_string()))?);
            }
            if let Some(c) = csv {
                fs::write(&c, detection_csv(&rows)).map_err(|e| CliError::data(&c, None, e))?;
            }
            let scenes: Vec<_> = rows.iter().map(|(n, r)| json!({ "scene": n, "reports": r })).collect();
            write_out(&out.out, &json_text(&json!({ "dataset": dataset, "scenes": scenes }))?)
        }
        Cmd::EvalGeomIou { pred, gt, resolution, out } => {
            check_resolution(resolution)?;
            let mut scenes = Vec::new();
            for (name, p, g) in pairs(&pred, &gt, "scene")? {
                let pg = interpret_scene(&load_scene(&p)?).map_err(|e| CliError::data(&p, None, e))?;
                let gg = interpret_scene(&load_scene(&g)?).map_err(|e| CliError::data(&g, None, e))?;
                let pm: Vec<_> = pg.meshes.iter().map(|m| &m.mesh).collect();
                let gm: Vec<_> = gg.meshes.iter().map(|m| &m.mesh).collect();
                let iou = voxel_geometry_iou(&pm, &gm, resolution).map_err(|e| CliError::data(&g, None, e))?;
                scenes.push((name, iou));
            }
            let mut values: Vec<f64> = scenes.iter().map(|s| s.1).collect();
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let rows: Vec<_> = scenes.iter().map(|(n, v)| json!({ "scene": n, "iou": v })).collect();
            let report = json!({ "resolution": resolution, "mean_iou": mean, "scenes": rows });
            write_out(&out.out, &json_text(&report)?)
        }
        Cmd::TokenAcc { pred, gt, slack, out } => {
            let mut scenes = Vec::new();
            for (name, p, g) in pairs(&pred, &gt, "tok")? {
                scenes.push((name, token_accuracy_slack(&load_tokens(&p)?, &load_tokens(&g)?, slack)));
            }
            let mut values: Vec<f64> = scenes.iter().map(|s| s.1).collect();
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let rows: Vec<_> = scenes.iter().map(|(n, v)| json!({ "scene": n, "accuracy": v })).collect();
            let report = json!({ "slack": slack, "mean_accuracy": mean, "scenes": rows });
            write_out(&out.out, &json_text(&report)?)
        }
    }
}

fn check_resolution(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage("--resolution must be positive".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
