//! Full personalisation experiment on the synthetic populations: 10-fold cross-validation
//! of the base model, the final base model, then one personal model per target user.
//!
//! Takes a while (about 25 minutes on one core). Pass `--quick` for a reduced run.
//!
//! ```text
//! cargo run --release --example reproduce [-- --quick] [-- --csv report.csv]
//! ```

use std::time::Instant;

use stressnet::eval::{compare_reports, render_summary};
use stressnet::experiment::{run_experiment, ExperimentConfig};
use stressnet::model::TrainConfig;

fn main() -> stressnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = ExperimentConfig::default();
    if args.iter().any(|a| a == "--quick") {
        config.stride = 100;
        config.folds = 3;
        config.train = TrainConfig {
            epochs: 10,
            ..config.train
        };
    }
    let csv_path = args.iter().position(|a| a == "--csv").and_then(|i| args.get(i + 1));

    let started = Instant::now();
    let report = run_experiment(&config)?;
    println!("base corpus: {} windows", report.base_windows);
    if let Some(cv) = &report.cv {
        let folds: Vec<String> = cv
            .fold_accuracies
            .iter()
            .map(|a| format!("{:.1}%", a * 100.0))
            .collect();
        println!("cross-validation folds: {}", folds.join(" "));
        println!(
            "mean CV accuracy: {:.1}% ({:.0?})",
            cv.mean_accuracy().unwrap_or(f64::NAN) * 100.0,
            cv.wall_time
        );
    }
    println!("base model trained in {:.1?}\n", report.base_report.wall_time);

    for user in &report.users {
        println!("{}", user.user_id);
        println!("{}", compare_reports(&user.baseline, &user.personal));
        println!("fine-tune time: {:.2?}\n", user.finetune_time);
    }
    let rows: Vec<_> = report.users.iter().map(|u| (u.user_id.clone(), u.personal)).collect();
    print!("{}", render_summary(&rows).text);
    println!();
    print!("{}", report.matrix.render().text);
    println!("\ntotal {:.0?}", started.elapsed());

    if let Some(path) = csv_path {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(())
}
