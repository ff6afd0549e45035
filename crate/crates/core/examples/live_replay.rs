//! Live labelling with scripted keypresses: replays a two-minute session at 30x, switches
//! labels along the way and writes the recording, like `stressnet live` does with a
//! keyboard.
//!
//! cargo run --release --example live_replay [-- recording.csv]

use stressnet::cli::{run_live, LiveKey, LiveOptions, ScriptedKeys};
use stressnet::data::{
    fit_normalizer, load_session_csv, segment_windows, synth_generate, Label, Phase, PopulationSpec, SessionCsvAppender,
};
use stressnet::model::build_base_model;

fn main() -> stressnet::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "live_demo.csv".into());
    let profile = &PopulationSpec::target().sample(1, "demo", 11)[0];
    let source = synth_generate(profile, &[(Phase::Relaxed, 60.0), (Phase::Stressed, 60.0)])?;

    // an untrained network is enough to show the display; use a trained one in practice
    let mut model = build_base_model(400, 1)?;
    model.norm_stats = Some(fit_normalizer(&segment_windows(&source, 400, 100)?)?);

    let mut keys = ScriptedKeys::new(vec![
        (5_000, LiveKey::Label(Label::Relaxed)),
        (62_000, LiveKey::Label(Label::Stressed)),
        (115_000, LiveKey::Quit),
    ]);
    let mut sink = SessionCsvAppender::new(std::io::BufWriter::new(std::fs::File::create(&path)?), true)?;
    let options = LiveOptions {
        speed: 30.0,
        stride: 100,
        raw_terminal: false,
    };
    let summary = run_live(&model, &source, &mut keys, &mut sink, &mut std::io::stdout(), &options)?;
    drop(sink);

    println!(
        "{} samples: {} unlabeled, {} relaxed, {} stressed",
        summary.emitted, summary.label_counts[0], summary.label_counts[1], summary.label_counts[2]
    );
    let recorded = segment_windows(&load_session_csv(&path)?, 400, 100)?;
    println!(
        "{path} reloads into {} labelled windows {:?}",
        recorded.len(),
        recorded.class_counts()
    );
    Ok(())
}
