use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const WALLS: &str = "\
make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5
make_wall, id=1, a_x=4, a_y=0, a_z=0, b_x=4, b_y=3, b_z=0, height=2.5
make_door, id=0, wall0_id=0, wall1_id=0, position_x=2, position_y=0, position_z=1, width=0.9, height=2, open_degree=0, hinge_side=0, open_direction=0
make_bbox, id=0, class=2, position_x=1, position_y=1, position_z=0.5, angle_z=0, scale_x=1, scale_y=1, scale_z=1
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenescript")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            v.extend(dir_contents(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            v.push((name, fs::read(&path).unwrap()));
        }
    }
    v.sort();
    v
}

#[test]
fn parse_echoes_canonical_form() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("a.scene");
    fs::write(&f, WALLS).unwrap();
    let o = run(&["parse", p(&f)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("make_wall, id=0"));
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn parse_unknown_command_names_line() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("bad.scene");
    fs::write(&f, format!("{WALLS}make_table, id=0\n")).unwrap();
    let o = run(&["parse", p(&f)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.scene:5:"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["parse", "x.scene", "--bogus"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["infer", "a.xyz", "--checkpoint", "c", "--greedy", "--top-p", "0.9"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_file_is_data_error() {
    let o = run(&["interp", "/nonexistent/file.scene"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/file.scene"));
}

#[test]
fn interp_writes_obj() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("a.scene");
    let obj = t.path().join("a.obj");
    fs::write(&f, WALLS).unwrap();
    assert_eq!(code(&run(&["interp", p(&f), "--out", p(&obj)])), 0);
    let text = fs::read_to_string(&obj).unwrap();
    assert!(text.lines().any(|l| l.starts_with("f ")));
    assert!(text.contains("o wall_0"));
}

#[test]
fn tokenize_detokenize_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("a.scene");
    let tok = t.path().join("a.tok");
    fs::write(&f, WALLS).unwrap();
    assert_eq!(code(&run(&["tokenize", p(&f), "--out", p(&tok)])), 0);
    let o = run(&["detokenize", p(&tok)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let back = t.path().join("b.scene");
    fs::write(&back, stdout(&o)).unwrap();
    let o2 = run(&["tokenize", p(&back)]);
    assert_eq!(stdout(&o2), fs::read_to_string(&tok).unwrap());

    // Truncated sequences fail strictly and decode leniently.
    let line = fs::read_to_string(&tok).unwrap();
    let cut: Vec<&str> = line.split_whitespace().collect();
    let broken = t.path().join("c.tok");
    fs::write(&broken, cut[..cut.len() - 4].join(" ")).unwrap();
    let strict = run(&["detokenize", p(&broken)]);
    assert_eq!(code(&strict), 2);
    assert!(stderr(&strict).contains("c.tok:1:"));
    assert_eq!(code(&run(&["detokenize", "--lenient", p(&broken)])), 0);
}

#[test]
fn gen_is_deterministic_and_evals_are_identity() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&run(&["gen", "--n", "3", "--seed", "7", "--out", p(&a)])), 0);
    assert_eq!(code(&run(&["gen", "--n", "3", "--seed", "7", "--out", p(&b)])), 0);
    assert_eq!(dir_contents(&a), dir_contents(&b));

    let o = run(&["eval-layout", p(&a), p(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dataset"]["mean_average_f1"], 1.0);
    assert_eq!(v["scenes"].as_array().unwrap().len(), 3);

    let o = run(&["eval-bbox", p(&a), p(&b)]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dataset"][0]["mean_f1"], 1.0);
    assert_eq!(v["dataset"][1]["iou_threshold"], 0.5);

    let o = run(&["eval-geom-iou", p(&a), p(&b), "--resolution", "0.1"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mean_iou"], 1.0);

    let o = run(&["token-acc", p(&a), p(&b), "--slack", "0"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mean_accuracy"], 1.0);

    let c = t.path().join("c");
    assert_eq!(code(&run(&["gen", "--n", "3", "--seed", "8", "--out", p(&c)])), 0);
    let o = run(&["eval-layout", p(&c), p(&a), "--thresholds", "0.05,0.5"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["dataset"]["mean_average_f1"].as_f64().unwrap() < 1.0);
}

#[test]
fn pipeline_runs_end_to_end_and_reproduces() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    let gen_cfg = t.path().join("gen.json");
    fs::write(&gen_cfg, r#"{"rooms":[1,1],"boxes_per_room":[0,0],"primitives":false,"max_points":2000}"#).unwrap();
    assert_eq!(code(&run(&["gen", "--n", "12", "--seed", "3", "--out", p(&data), "--config", p(&gen_cfg)])), 0);
    let model_cfg = t.path().join("model.json");
    fs::write(&model_cfg, r#"{"d_model":16,"layers":1,"heads":2,"d_ff":32,"max_seq":160}"#).unwrap();
    let train_cfg = t.path().join("train.json");
    fs::write(&train_cfg, r#"{"epochs":2,"lr":0.003,"batch_size":4}"#).unwrap();

    let mut outputs = Vec::new();
    for run_id in ["r1", "r2"] {
        let out = t.path().join(run_id);
        let o = run(&[
            "train", "--data", p(&data), "--out", p(&out), "--config", p(&train_cfg), "--model-config", p(&model_cfg),
            "--seed", "5",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        for f in ["model.ssck", "loss.csv", "train_config.json", "checkpoint_epoch0001.ssck", "checkpoint_epoch0002.ssck"] {
            assert!(out.join(f).is_file(), "{f}");
        }
        let pred = out.join("pred");
        let o = run(&[
            "infer", p(&data), "--checkpoint", p(&out.join("model.ssck")), "--constrained", "--out", p(&pred),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = run(&["eval-layout", p(&pred), p(&data)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let nucleus = run(&[
            "infer", p(&data.join("scene_000000.xyz")), "--checkpoint", p(&out.join("model.ssck")), "--top-p", "0.9",
            "--seed", "4", "--constrained", "--recenter",
        ]);
        assert_eq!(code(&nucleus), 0, "{}", stderr(&nucleus));
        outputs.push((dir_contents(&out), stdout(&o), stdout(&nucleus)));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_checkpoint_is_data_error() {
    let t = tempfile::tempdir().unwrap();
    let ck = t.path().join("x.ssck");
    let xyz = t.path().join("c.xyz");
    fs::write(&ck, b"garbage").unwrap();
    fs::write(&xyz, "0 0 0\n1 1 1\n").unwrap();
    let o = run(&["infer", p(&xyz), "--checkpoint", p(&ck)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("x.ssck"));
}

#[test]
fn bad_xyz_line_is_reported() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    assert_eq!(code(&run(&["gen", "--n", "1", "--out", p(&data)])), 0);
    let xyz = t.path().join("c.xyz");
    fs::write(&xyz, "0 0 0\n1 oops 1\n").unwrap();
    let model_cfg = t.path().join("m.json");
    fs::write(&model_cfg, r#"{"d_model":16,"layers":1,"heads":2,"d_ff":32}"#).unwrap();
    let train_cfg = t.path().join("t.json");
    fs::write(&train_cfg, r#"{"epochs":0}"#).unwrap();
    let out = t.path().join("o");
    let o = run(&["train", "--data", p(&data), "--out", p(&out), "--config", p(&train_cfg), "--model-config", p(&model_cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["infer", p(&xyz), "--checkpoint", p(&out.join("model.ssck"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("c.xyz:2:"), "{}", stderr(&o));
}

#[test]
fn unknown_config_field_is_data_error() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("g.json");
    fs::write(&cfg, "{\n  \"roooms\": [1, 2]\n}").unwrap();
    let o = run(&["gen", "--n", "1", "--out", p(&t.path().join("d")), "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("g.json:2:"), "{}", stderr(&o));
}
