//! Finite-difference gradient check of the default network in double precision.
//!
//! cargo run --release --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stressnet::model::build_base_model;
use stressnet::nn::gradcheck::random_uniform;
use stressnet::nn::{grad_check, CheckLoss, GradCheckOptions};

fn main() -> stressnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = build_base_model(400, 1)?.network.cast::<f64>();
    let x = random_uniform(&[2, 3, 400], &mut rng);
    let opts = GradCheckOptions {
        max_per_tensor: Some(50),
        ..GradCheckOptions::default()
    };
    let report = grad_check(&net, &x, &CheckLoss::CrossEntropy(vec![0, 1]), &opts)?;
    println!(
        "checked {} coordinates ({} with a reduced step near a ReLU/max-pool kink, {} skipped), max relative error {:.2e} at {}",
        report.checked,
        report.refined,
        report.skipped_nonsmooth,
        report.max_rel_error,
        report.worst.unwrap_or_default()
    );
    Ok(())
}
