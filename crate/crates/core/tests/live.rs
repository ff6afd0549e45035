mod common;

use std::time::Duration;

use stressnet::cli::{finetune_recording, run_live, CliConfig, LiveKey, LiveOptions, ScriptedKeys};
use stressnet::data::{
    fit_normalizer, load_session_csv, segment_windows, synth_generate, Label, Phase, PopulationSpec, SessionCsvAppender,
};
use stressnet::model::build_base_model;

#[test]
fn scripted_replay_records_key_timeline() {
    let dir = tempfile::tempdir().unwrap();
    let check = common::live::scripted_replay(&dir.path().join("rec.csv"), 60.0);
    assert!(check.rows_match && check.values_match);
    assert!(check.timeline_match);
    assert!(check.inference_count_ok);
    let windows = check.windows.expect("recording windowizes");
    assert_eq!(windows.class_counts().iter().filter(|&&c| c > 0).count(), 2);
    // paced at 60x: about two seconds for two minutes of data
    assert!(
        check.elapsed.as_secs_f64() >= check.expected_secs * 0.95,
        "{:?}",
        check.elapsed
    );
    assert!(check.elapsed < Duration::from_secs(30));
}

fn small_source() -> stressnet::data::Session {
    let profile = &PopulationSpec::base().sample(1, "s", 3)[0];
    synth_generate(profile, &[(Phase::Relaxed, 30.0), (Phase::Stressed, 30.0)]).unwrap()
}

#[test]
fn no_keys_means_unlabeled_and_quit_stops_early() {
    let source = small_source();
    let mut model = build_base_model(400, 1).unwrap();
    model.norm_stats = Some(fit_normalizer(&segment_windows(&source, 400, 100).unwrap()).unwrap());
    let options = LiveOptions {
        speed: 1000.0,
        stride: 100,
        raw_terminal: false,
    };

    let mut buf = Vec::new();
    let mut sink = SessionCsvAppender::new(&mut buf, true).unwrap();
    let s = run_live(
        &model,
        &source,
        &mut ScriptedKeys::new(vec![]),
        &mut sink,
        &mut Vec::new(),
        &options,
    )
    .unwrap();
    assert_eq!(s.label_counts, [source.len(), 0, 0]);
    assert!(!s.quit_early);

    let mut buf = Vec::new();
    let mut sink = SessionCsvAppender::new(&mut buf, true).unwrap();
    let keys = vec![(0, LiveKey::Label(Label::Stressed)), (10_000, LiveKey::Quit)];
    let s = run_live(
        &model,
        &source,
        &mut ScriptedKeys::new(keys),
        &mut sink,
        &mut Vec::new(),
        &options,
    )
    .unwrap();
    assert!(s.quit_early);
    assert_eq!(s.label_counts[2], s.emitted);
    assert_eq!(s.emitted, 300);
}

#[test]
fn recording_can_be_fine_tuned() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.csv");
    common::live::scripted_replay(&path, 1000.0);
    let source = load_session_csv(&path).unwrap();
    let mut model = build_base_model(400, 1).unwrap();
    model.norm_stats = Some(fit_normalizer(&segment_windows(&source, 400, 100).unwrap()).unwrap());
    let cfg = CliConfig::parse("finetune_epochs = 2").unwrap();
    let outcome = finetune_recording(&model, &path, &cfg).unwrap();
    assert_eq!(outcome.personal.provenance.user_id, "rec");
}
