//! Trains the base classifier on part of the synthetic base population, with a short
//! cross-validation first, and saves it as a model container.
//!
//! cargo run --release --example train_base [-- out.stn]

use stressnet::data::{
    apply_normalizer, class_balance_report, default_base_population, fit_normalizer, montreal_schedule,
    segment_sessions, synth_generate, DEFAULT_WINDOW,
};
use stressnet::model::{build_base_model, cross_validate, save_model, train, TrainConfig};

fn main() -> stressnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "base.stn".into());
    let schedule = montreal_schedule();
    let sessions = default_base_population()[..8]
        .iter()
        .map(|p| synth_generate(p, &schedule))
        .collect::<stressnet::Result<Vec<_>>>()?;
    let raw = segment_sessions(&sessions, DEFAULT_WINDOW, 100)?;
    println!("{} windows, {}", raw.len(), class_balance_report(&raw)?);

    let config = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let cv = cross_validate(&raw, &config, 3)?;
    println!(
        "3-fold CV: {:.1}% in {:.1?}",
        cv.mean_accuracy().unwrap_or(0.0) * 100.0,
        cv.wall_time
    );

    let stats = fit_normalizer(&raw)?;
    let mut model = build_base_model(DEFAULT_WINDOW, config.seed)?;
    let report = train(&mut model, &apply_normalizer(&raw, &stats)?, &config)?;
    for e in report.epochs.iter().step_by(3) {
        println!(
            "  epoch {:>2}: loss {:.4}, accuracy {:.1}%",
            e.epoch,
            e.loss,
            e.accuracy * 100.0
        );
    }
    println!(
        "{} parameters, trained in {:.1?}",
        model.param_count(),
        report.wall_time
    );
    save_model(&model, &stats, &out)?;
    println!("wrote {out}");
    Ok(())
}
