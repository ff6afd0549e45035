//! Adapts a base model to one shifted target user: new head, frozen convolutions,
//! fine-tuning on 80% of the user's windows and a before/after comparison on the rest.
//!
//! cargo run --release --example personalise

use std::time::Instant;

use stressnet::data::{
    apply_normalizer, default_base_population, default_target_population, fit_normalizer, montreal_schedule,
    segment_sessions, segment_windows, synth_generate, DEFAULT_WINDOW,
};
use stressnet::eval::{compare_reports, render_report};
use stressnet::model::{build_base_model, train, TrainConfig};
use stressnet::transfer::{adapt_head, baseline_on_target, finetune, verify_against_base, AdaptationSpec};

fn main() -> stressnet::Result<()> {
    let schedule = montreal_schedule();
    let base_sessions = default_base_population()[..10]
        .iter()
        .map(|p| synth_generate(p, &schedule))
        .collect::<stressnet::Result<Vec<_>>>()?;
    let raw = segment_sessions(&base_sessions, DEFAULT_WINDOW, 100)?;
    let stats = fit_normalizer(&raw)?;
    let config = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let mut base = build_base_model(DEFAULT_WINDOW, config.seed)?;
    let base_time = train(&mut base, &apply_normalizer(&raw, &stats)?, &config)?.wall_time;

    let user = &default_target_population()[0];
    let user_data = segment_windows(&synth_generate(user, &schedule)?, DEFAULT_WINDOW, 40)?;
    let spec = AdaptationSpec::default();
    let personal = adapt_head(&base, &spec, &user.id)?;
    println!(
        "frozen layers {:?}, fine-tune lr {}",
        personal.provenance.frozen_layers, spec.finetune.learning_rate
    );

    let started = Instant::now();
    let outcome = finetune(&personal, &user_data, &spec.finetune)?;
    let tune_time = started.elapsed();
    verify_against_base(&outcome.personal, &base)?;

    let before = baseline_on_target(&base, &outcome.test_data)?;
    print!("{}", render_report("base model", &before).text);
    print!("{}", render_report(&user.id, &outcome.held_out).text);
    println!("{}", compare_reports(&before, &outcome.held_out));
    println!("fine-tuning took {tune_time:.2?}, base training {base_time:.1?}");
    Ok(())
}
