//! Per-window predictions over a whole session with a freshly trained small model, the
//! library equivalent of `stressnet predict`.
//!
//! cargo run --release --example predict_session

use stressnet::data::{
    apply_normalizer, default_base_population, fit_normalizer, montreal_schedule, normalize_windows, segment_sessions,
    sliding_windows, synth_generate, window_count, Label, DEFAULT_STRIDE, DEFAULT_WINDOW,
};
use stressnet::model::{argmax, build_base_model, train, TrainConfig};

fn main() -> stressnet::Result<()> {
    let schedule = montreal_schedule();
    let population = default_base_population();
    let sessions = population[..6]
        .iter()
        .map(|p| synth_generate(p, &schedule))
        .collect::<stressnet::Result<Vec<_>>>()?;
    let raw = segment_sessions(&sessions, DEFAULT_WINDOW, DEFAULT_STRIDE)?;
    let stats = fit_normalizer(&raw)?;
    let mut model = build_base_model(DEFAULT_WINDOW, 1)?;
    train(
        &mut model,
        &apply_normalizer(&raw, &stats)?,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    )?;

    // an unseen subject
    let session = synth_generate(&population[19], &schedule)?;
    let (mut windows, starts) = sliding_windows(&session, DEFAULT_WINDOW, DEFAULT_STRIDE)?;
    assert_eq!(
        starts.len(),
        window_count(session.len(), DEFAULT_WINDOW, DEFAULT_STRIDE)
    );
    normalize_windows(&mut windows, &stats)?;
    let probs = model.predict_proba(&windows)?;

    println!("{:>8}  {:>9}  {:>9}  p(stressed)", "start s", "truth", "predicted");
    for (start, p) in starts.iter().zip(&probs).step_by(8) {
        let truth = session.samples[start + DEFAULT_WINDOW / 2].label;
        let predicted = Label::from_class(argmax(p));
        println!(
            "{:>8.1}  {:>9}  {:>9}  {:.2}",
            *start as f64 / 30.0,
            truth.name(),
            predicted.name(),
            p[1]
        );
    }
    Ok(())
}
