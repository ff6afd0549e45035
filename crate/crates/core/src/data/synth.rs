//! Synthetic HR/HRV/EDA sessions.
//!
//! Each channel is `baseline + stress_shift * stressed + drift + noise`, where the drift is
//! a first-order mean-reverting (Ornstein-Uhlenbeck) process started from its stationary
//! distribution and the noise is white Gaussian. Values are quantised to the CSV resolution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::session::{quantize, Label, SensorSample, Session, NOMINAL_RATE_HZ};
use super::window::CHANNELS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Relaxed,
    Stressed,
}

impl Phase {
    pub fn label(self) -> Label {
        match self {
            Phase::Relaxed => Label::Relaxed,
            Phase::Stressed => Label::Stressed,
        }
    }
}

/// `(phase, duration in seconds)` segments, played in order.
pub type Schedule = Vec<(Phase, f64)>;

/// Rest, practice, rest, arithmetic under pressure, rest. The practice block counts as
/// relaxed.
pub fn montreal_schedule() -> Schedule {
    vec![
        (Phase::Relaxed, 180.0),
        (Phase::Relaxed, 180.0),
        (Phase::Relaxed, 180.0),
        (Phase::Stressed, 600.0),
        (Phase::Relaxed, 180.0),
    ]
}

pub fn schedule_duration_s(schedule: &[(Phase, f64)]) -> f64 {
    schedule.iter().map(|(_, d)| d).sum()
}

/// One simulated person. Channel arrays are ordered HR, HRV, EDA.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub id: String,
    pub baseline: [f64; CHANNELS],
    /// Added to the baseline while stressed.
    pub stress_shift: [f64; CHANNELS],
    /// Standard deviation of white measurement noise.
    pub noise: [f64; CHANNELS],
    /// Stationary standard deviation of the slow drift.
    pub drift: [f64; CHANNELS],
    pub drift_tau_s: f64,
    pub seed: u64,
}

impl SubjectProfile {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.noise.iter().all(|&v| positive(v)) {
            return Err(Error::InvalidArgument(format!(
                "noise scales must be > 0: {:?}",
                self.noise
            )));
        }
        if !self.drift.iter().all(|&v| v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "drift scales must be >= 0: {:?}",
                self.drift
            )));
        }
        if !positive(self.drift_tau_s) {
            return Err(Error::InvalidArgument(format!(
                "drift time constant must be > 0, got {}",
                self.drift_tau_s
            )));
        }
        Ok(())
    }
}

/// Floors keep generated values inside the sample invariants.
const FLOOR: [f64; CHANNELS] = [20.0, 0.0, 0.0];

pub fn synth_generate(profile: &SubjectProfile, schedule: &[(Phase, f64)]) -> Result<Session> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty schedule".into()));
    }
    if let Some((_, d)) = schedule.iter().find(|(_, d)| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidArgument(format!("phase duration must be > 0, got {d}")));
    }
    profile.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let dt = 1.0 / NOMINAL_RATE_HZ;
    let decay = (-dt / profile.drift_tau_s).exp();
    let innovation = (1.0 - decay * decay).sqrt();
    let mut drift: [f64; CHANNELS] = std::array::from_fn(|c| profile.drift[c] * gauss(&mut rng));

    let mut samples = Vec::new();
    let mut index: u64 = 0;
    for &(phase, duration) in schedule {
        let n = (duration * NOMINAL_RATE_HZ).round() as u64;
        let stressed = if phase == Phase::Stressed { 1.0 } else { 0.0 };
        for _ in 0..n {
            let mut value = [0.0; CHANNELS];
            for c in 0..CHANNELS {
                drift[c] = decay * drift[c] + profile.drift[c] * innovation * gauss(&mut rng);
                let v = profile.baseline[c]
                    + stressed * profile.stress_shift[c]
                    + drift[c]
                    + profile.noise[c] * gauss(&mut rng);
                value[c] = quantize(v.max(FLOOR[c]));
            }
            samples.push(SensorSample {
                timestamp_ms: (index as f64 * 1000.0 / NOMINAL_RATE_HZ).round() as i64,
                hr: value[0],
                hrv: value[1],
                eda: value[2],
                label: phase.label(),
            });
            index += 1;
        }
    }
    Session::new(profile.id.clone(), NOMINAL_RATE_HZ, samples)
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Distribution that subject profiles are drawn from. Baselines are centre plus spread;
/// the stress shift is proportional to the subject's own baseline
/// (`shift = baseline * response`), so people with higher resting values move further.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub baseline_center: [f64; CHANNELS],
    pub baseline_spread: [f64; CHANNELS],
    pub response_mean: [f64; CHANNELS],
    pub response_spread: [f64; CHANNELS],
    pub noise: [f64; CHANNELS],
    pub drift: [f64; CHANNELS],
    pub drift_tau_s: f64,
}

impl PopulationSpec {
    /// Controlled-experiment participants. Pooled over subjects this gives HR around 76.8
    /// relaxed and 81.2 stressed, EDA around 351.9 relaxed and 317.2 stressed, with spreads
    /// near 11-12 bpm and 150 units.
    pub fn base() -> Self {
        Self {
            baseline_center: [76.8, 55.0, 351.9],
            baseline_spread: [10.0, 12.0, 151.2],
            response_mean: [0.0573, -0.30, -0.0986],
            response_spread: [0.069, 0.08, 0.141],
            noise: [2.0, 3.0, 10.0],
            drift: [3.0, 2.5, 20.0],
            drift_tau_s: 30.0,
        }
    }

    /// Everyday-life users: offset resting levels, wider person-to-person spread and
    /// noisier signals than in the lab.
    pub fn target() -> Self {
        let base = Self::base();
        Self {
            baseline_center: [88.0, 30.0, 250.0],
            baseline_spread: [
                base.baseline_spread[0] * 2.5,
                base.baseline_spread[1],
                base.baseline_spread[2],
            ],
            noise: base.noise.map(|v| v * 1.5),
            drift: base.drift.map(|v| v * 1.5),
            ..base
        }
    }

    /// Draws `n` profiles named `{prefix}{i:02}`. Baselines and responses use stratified
    /// normal quantiles shuffled independently per channel, so even small populations
    /// have the intended centre and spread.
    pub fn sample(&self, n: usize, prefix: &str, seed: u64) -> Vec<SubjectProfile> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("standard normal");
        let quantiles: Vec<f64> = (0..n).map(|i| unit.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let mut draw = || {
            let mut q = quantiles.clone();
            q.shuffle(&mut rng);
            q
        };
        let baseline_z: Vec<Vec<f64>> = (0..CHANNELS).map(|_| draw()).collect();
        let response_z: Vec<Vec<f64>> = (0..CHANNELS).map(|_| draw()).collect();
        (0..n)
            .map(|i| {
                let baseline: [f64; CHANNELS] =
                    std::array::from_fn(|c| self.baseline_center[c] + self.baseline_spread[c] * baseline_z[c][i]);
                let stress_shift = std::array::from_fn(|c| {
                    baseline[c] * (self.response_mean[c] + self.response_spread[c] * response_z[c][i])
                });
                SubjectProfile {
                    id: format!("{prefix}{i:02}"),
                    baseline,
                    stress_shift,
                    noise: self.noise,
                    drift: self.drift,
                    drift_tau_s: self.drift_tau_s,
                    seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1),
                }
            })
            .collect()
    }
}

pub const DEFAULT_BASE_SEED: u64 = 2024;
pub const DEFAULT_TARGET_SEED: u64 = 4048;

/// The 20 default controlled-experiment subjects.
pub fn default_base_population() -> Vec<SubjectProfile> {
    PopulationSpec::base().sample(20, "subject", DEFAULT_BASE_SEED)
}

/// The 3 default shifted target users.
pub fn default_target_population() -> Vec<SubjectProfile> {
    PopulationSpec::target().sample(3, "user", DEFAULT_TARGET_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = montreal_schedule();
        assert_eq!(schedule_duration_s(&s), 1320.0);
        let stressed: f64 = s.iter().filter(|p| p.0 == Phase::Stressed).map(|p| p.1).sum();
        assert!((stressed / 1320.0 - 0.4545).abs() < 1e-4);
        assert_eq!(s, montreal_schedule());
    }

    #[test]
    fn one_minute_relaxed() {
        let p = &default_base_population()[0];
        let s = synth_generate(p, &[(Phase::Relaxed, 60.0)]).unwrap();
        assert_eq!(s.len(), 1800);
        assert!(s.samples.iter().all(|x| x.label == Label::Relaxed));
        assert_eq!(s.samples[1].timestamp_ms, 33);
        assert_eq!(s.samples[3].timestamp_ms, 100);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let mut p = default_base_population()[3].clone();
        let sched = [(Phase::Relaxed, 20.0), (Phase::Stressed, 20.0)];
        let a = synth_generate(&p, &sched).unwrap();
        let b = synth_generate(&p, &sched).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        p.seed += 1;
        assert_ne!(synth_generate(&p, &sched).unwrap().samples, a.samples);
    }

    #[test]
    fn rejects_bad_input() {
        let p = default_base_population()[0].clone();
        assert!(synth_generate(&p, &[]).is_err());
        assert!(synth_generate(&p, &[(Phase::Relaxed, 0.0)]).is_err());
        let mut q = p.clone();
        q.noise[1] = 0.0;
        assert!(synth_generate(&q, &[(Phase::Relaxed, 1.0)]).is_err());
    }

    #[test]
    fn stratified_population_has_exact_centre() {
        let pop = PopulationSpec::base().sample(20, "s", 1);
        let mean_hr: f64 = pop.iter().map(|p| p.baseline[0]).sum::<f64>() / 20.0;
        assert!((mean_hr - 76.8).abs() < 1e-9);
        let ids: std::collections::BTreeSet<_> = pop.iter().map(|p| p.id.clone()).collect();
        assert_eq!(ids.len(), 20);
    }
}
