use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use stressnet::cli::{cmd_crosseval, cmd_eval, cmd_finetune, cmd_predict, cmd_synth, cmd_train, run, Cli, CliConfig};
use stressnet::data::{load_session_csv, normalize_windows, sliding_windows, window_count, Label, Session};
use stressnet::eval::CrossMatrix;
use stressnet::model::{load_model, predict};
use stressnet::Error;

fn small_config(dir: &Path) -> CliConfig {
    let mut cfg = CliConfig::parse(
        "base_subjects = 3\ntarget_subjects = 2\nepochs = 1\nfolds = 2\nfinetune_epochs = 2\nstride = 400\n",
    )
    .unwrap();
    cfg.data_dir = dir.join("data");
    cfg
}

fn text(buf: Vec<u8>) -> String {
    String::from_utf8(buf).unwrap()
}

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: CliConfig,
    base_model: PathBuf,
    targets: Vec<PathBuf>,
}

fn pipeline() -> Pipeline {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let cfg = small_config(&root);
    let synth = cmd_synth(&cfg, None, &mut Vec::new()).unwrap();
    let base_model = root.join("base.stn");
    cmd_train(&cfg, &[], Some(&base_model), &mut Vec::new()).unwrap();
    Pipeline {
        _dir: dir,
        root,
        cfg,
        base_model,
        targets: synth.target_files,
    }
}

#[test]
fn synth_is_deterministic_and_reports_balance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut out = Vec::new();
    let first = cmd_synth(&cfg, None, &mut out).unwrap();
    let out = text(out);
    assert_eq!((first.base_files.len(), first.target_files.len()), (3, 2));
    assert!(out.contains("relaxed") && out.contains("stressed"), "{out}");
    let bytes: Vec<Vec<u8>> = first
        .base_files
        .iter()
        .chain(&first.target_files)
        .map(|p| fs::read(p).unwrap())
        .collect();

    let again_dir = dir.path().join("again");
    let second = cmd_synth(&cfg, Some(&again_dir), &mut Vec::new()).unwrap();
    let again: Vec<Vec<u8>> = second
        .base_files
        .iter()
        .chain(&second.target_files)
        .map(|p| fs::read(p).unwrap())
        .collect();
    assert_eq!(bytes, again);
}

#[test]
fn default_synth_population_sizes() {
    let cfg = CliConfig::default();
    assert_eq!((cfg.base_population().len(), cfg.target_population().len()), (20, 3));
}

#[test]
fn train_finetune_eval_crosseval_predict() {
    let p = pipeline();
    let bytes = fs::read(&p.base_model).unwrap();
    assert_eq!(&bytes[..8], b"STRSCNN1");
    let report = fs::read_to_string(p.base_model.with_extension("report.csv")).unwrap();
    assert!(report.contains("mean,"));

    // fine-tune with benchmark timing
    let personal_path = p.root.join("user00.stn");
    let mut out = Vec::new();
    let run = cmd_finetune(
        &p.cfg,
        &p.base_model,
        &p.targets[0],
        Some(&personal_path),
        true,
        &mut out,
    )
    .unwrap();
    let out = text(out);
    assert_eq!(run.times.len(), 3);
    assert!(out.contains("base model") && out.contains("personal model"), "{out}");
    assert!(out.contains("points"), "{out}");
    assert!(out.contains("median of 3 runs"), "{out}");
    assert!(personal_path.exists());

    // eval writes text and a CSV
    let mut out = Vec::new();
    let csv = p.root.join("eval.csv");
    cmd_eval(&p.cfg, &personal_path, &[p.targets[0].clone()], Some(&csv), &mut out).unwrap();
    assert!(text(out).contains("accuracy"));
    assert!(fs::read_to_string(&csv).unwrap().starts_with("name,n,accuracy"));

    // 1x1 crosseval on the held-out split equals the fine-tune's own held-out score
    let m = cmd_crosseval(
        &p.cfg,
        std::slice::from_ref(&personal_path),
        &[p.targets[0].clone()],
        None,
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(m.values, vec![vec![run.outcome.held_out.accuracy]]);

    // 2x2 with the second user, CSV re-parses
    let second = p.root.join("user01.stn");
    cmd_finetune(
        &p.cfg,
        &p.base_model,
        &p.targets[1],
        Some(&second),
        false,
        &mut Vec::new(),
    )
    .unwrap();
    let csv = p.root.join("matrix.csv");
    let m = cmd_crosseval(
        &p.cfg,
        &[personal_path.clone(), second],
        &p.targets,
        Some(&csv),
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(m.values.len(), 2);
    assert_eq!(m.model_labels, vec!["user00", "user01"]);
    assert_eq!(CrossMatrix::parse_csv(&fs::read_to_string(&csv).unwrap()).unwrap(), m);

    // predict: one row per window position, same labels as the library
    let csv = p.root.join("pred.csv");
    let rows = cmd_predict(&p.cfg, &p.base_model, &p.targets[0], Some(&csv), &mut Vec::new()).unwrap();
    let session = load_session_csv(&p.targets[0]).unwrap();
    let (model, stats) = load_model(&p.base_model).unwrap();
    assert_eq!(rows, window_count(session.len(), model.window_len, p.cfg.stride));
    let lines: Vec<String> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), rows);
    let (mut windows, _) = sliding_windows(&session, model.window_len, p.cfg.stride).unwrap();
    normalize_windows(&mut windows, &stats).unwrap();
    for (i, line) in lines.iter().enumerate() {
        let (class, _) = predict(&model, &windows.slice_outer(i)).unwrap();
        assert_eq!(
            line.split(',').nth(3).unwrap(),
            Label::from_class(class).name(),
            "row {i}"
        );
    }
}

#[test]
fn single_class_user_data_gets_actionable_error() {
    let p = pipeline();
    let mut session = load_session_csv(&p.targets[0]).unwrap();
    for s in &mut session.samples {
        s.label = Label::Relaxed;
    }
    let path = p.root.join("onlyrelaxed.csv");
    session.write_csv(&path).unwrap();
    let err = cmd_finetune(
        &p.cfg,
        &p.base_model,
        &path,
        Some(&p.root.join("x.stn")),
        false,
        &mut Vec::new(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::SingleClass { present: 0, .. }));
    assert!(err.to_string().contains("label more windows"), "{err}");
    assert!(!p.root.join("x.stn").exists());
}

#[test]
fn predict_on_short_session_fails() {
    let p = pipeline();
    let session = load_session_csv(&p.targets[0]).unwrap();
    let short = Session::new("short", session.sample_rate_hz, session.samples[..100].to_vec()).unwrap();
    let path = p.root.join("short.csv");
    short.write_csv(&path).unwrap();
    let err = cmd_predict(&p.cfg, &p.base_model, &path, None, &mut Vec::new()).unwrap_err();
    assert!(matches!(err, Error::SessionTooShort { .. }), "{err}");
}

#[test]
fn run_echoes_config_and_dispatches() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    fs::write(&conf, "base_subjects = 2\ntarget_subjects = 1\nstride = 400\n").unwrap();
    let out_dir = dir.path().join("d");
    let cli = Cli::try_parse_from([
        "stressnet",
        "synth",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .unwrap();
    let (mut out, mut log) = (Vec::new(), Vec::new());
    run(&cli, &mut out, &mut log).unwrap();
    let log = text(log);
    assert!(
        log.contains("seed = 5\n") && log.contains("base_subjects = 2\n"),
        "{log}"
    );
    assert_eq!(fs::read_dir(out_dir.join("base")).unwrap().count(), 2);
}

#[test]
fn binary_exits_nonzero_on_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_stressnet"))
        .args(["train", "/no/such/dir", "--out"])
        .arg(dir.path().join("m.stn"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:") && stderr.contains("/no/such/dir"), "{stderr}");
    assert!(!dir.path().join("m.stn").exists());
}

#[test]
fn binary_live_refuses_without_terminal() {
    let p = pipeline();
    let out = Process::new(env!("CARGO_BIN_EXE_stressnet"))
        .arg("live")
        .arg(&p.base_model)
        .arg(&p.targets[0])
        .stdin(std::process::Stdio::null())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("use `predict`"));
}
