//! Generates the default base and target populations on the Montreal schedule and prints
//! pooled per-phase channel statistics.
//!
//! cargo run --release --example synth_population

use stressnet::data::{
    default_base_population, default_target_population, montreal_schedule, synth_generate, Label, SubjectProfile,
};

fn pooled(profiles: &[SubjectProfile]) -> stressnet::Result<()> {
    let schedule = montreal_schedule();
    // [label][channel] -> (sum, sum of squares, count)
    let mut acc = [[(0f64, 0f64, 0usize); 3]; 2];
    for p in profiles {
        let s = synth_generate(p, &schedule)?;
        for x in &s.samples {
            let Some(class) = x.label.class() else { continue };
            for (c, v) in x.channels().into_iter().enumerate() {
                let a = &mut acc[class][c];
                a.0 += v;
                a.1 += v * v;
                a.2 += 1;
            }
        }
    }
    for class in [0, 1] {
        print!("{:>9}:", Label::from_class(class).name());
        for (c, name) in ["HR", "HRV", "EDA"].iter().enumerate() {
            let (s, ss, n) = acc[class][c];
            let mean = s / n as f64;
            let sd = (ss / n as f64 - mean * mean).sqrt();
            print!("  {name} {mean:7.2} (SD {sd:6.2})");
        }
        println!();
    }
    Ok(())
}

fn main() -> stressnet::Result<()> {
    println!("base population (20 subjects)");
    pooled(&default_base_population())?;
    println!("target users (3)");
    pooled(&default_target_population())?;
    for p in default_target_population() {
        println!(
            "  {} baseline {:?}",
            p.id,
            p.baseline.map(|v| (v * 10.0).round() / 10.0)
        );
    }
    Ok(())
}
