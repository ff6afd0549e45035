//! Personal models for the three target users evaluated on each other's held-out data,
//! laid out as a cross-user accuracy matrix.
//!
//! cargo run --release --example cross_user

use stressnet::data::{
    apply_normalizer, default_base_population, default_target_population, fit_normalizer, montreal_schedule,
    segment_sessions, segment_windows, synth_generate, DEFAULT_WINDOW,
};
use stressnet::eval::render_summary;
use stressnet::model::{build_base_model, train, TrainConfig};
use stressnet::transfer::{adapt_head, cross_user_matrix, finetune, AdaptationSpec};

fn main() -> stressnet::Result<()> {
    let schedule = montreal_schedule();
    let sessions = default_base_population()[..10]
        .iter()
        .map(|p| synth_generate(p, &schedule))
        .collect::<stressnet::Result<Vec<_>>>()?;
    let raw = segment_sessions(&sessions, DEFAULT_WINDOW, 100)?;
    let stats = fit_normalizer(&raw)?;
    let mut base = build_base_model(DEFAULT_WINDOW, 42)?;
    train(
        &mut base,
        &apply_normalizer(&raw, &stats)?,
        &TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        },
    )?;

    let spec = AdaptationSpec::default();
    let (mut models, mut held_out, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for user in default_target_population() {
        let data = segment_windows(&synth_generate(&user, &schedule)?, DEFAULT_WINDOW, 40)?;
        let outcome = finetune(&adapt_head(&base, &spec, &user.id)?, &data, &spec.finetune)?;
        rows.push((user.id.clone(), outcome.held_out));
        models.push(outcome.personal);
        held_out.push(outcome.test_data);
    }
    print!("{}", render_summary(&rows).text);
    println!();
    let matrix = cross_user_matrix(&models, &held_out)?;
    print!("{}", matrix.render().text);
    println!("diagonal dominates every row: {}", matrix.diagonal_dominates_rows());
    Ok(())
}
