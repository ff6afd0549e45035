//! The end-to-end personalisation experiment on the synthetic populations: cross-validate
//! and train a base model, then adapt, fine-tune and cross-evaluate one personal model per
//! target user.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::data::{
    apply_normalizer, default_base_population, default_target_population, fit_normalizer, montreal_schedule,
    segment_sessions, segment_windows, synth_generate, NormStats, Phase, Schedule, Session, SubjectProfile,
    DEFAULT_WINDOW,
};
use crate::error::Result;
use crate::eval::{render_summary, CrossMatrix, EvalReport};
use crate::model::{build_base_model, cross_validate, train, StressNet, TrainConfig, TrainReport};
use crate::transfer::{adapt_head, baseline_on_target, cross_user_matrix, finetune, AdaptationSpec, PersonalModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub window: usize,
    /// Stride for both the base corpus and the target users.
    pub stride: usize,
    /// Cross-validation folds; 0 skips cross-validation.
    pub folds: usize,
    pub train: TrainConfig,
    pub adaptation: AdaptationSpec,
    pub schedule: Schedule,
    pub base_population: Vec<SubjectProfile>,
    pub target_population: Vec<SubjectProfile>,
}

impl Default for ExperimentConfig {
    /// About 20k base windows.
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: 40,
            folds: 10,
            train: TrainConfig::default(),
            adaptation: AdaptationSpec::default(),
            schedule: montreal_schedule(),
            base_population: default_base_population(),
            target_population: default_target_population(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserOutcome {
    pub user_id: String,
    /// Base model on the user's held-out windows.
    pub baseline: EvalReport,
    /// Personal model on the same windows.
    pub personal: EvalReport,
    pub finetune_time: Duration,
    pub model: PersonalModel,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub base_windows: usize,
    pub cv: Option<TrainReport>,
    pub base_model: StressNet,
    pub base_stats: NormStats,
    pub base_report: TrainReport,
    pub users: Vec<UserOutcome>,
    pub matrix: CrossMatrix,
}

impl ExperimentReport {
    /// Every number the experiment produces except wall times, so equal seeds give equal
    /// bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# base windows,{}", self.base_windows);
        if let Some(cv) = &self.cv {
            out.push_str("# cross-validation\n");
            out.push_str(&cv.to_csv());
        }
        out.push_str("# base training\n");
        out.push_str(&self.base_report.to_csv());
        out.push_str("# base model on held-out user data\n");
        out.push_str(&render_summary(&self.rows(|u| &u.baseline)).csv);
        out.push_str("# personal model on held-out user data\n");
        out.push_str(&render_summary(&self.rows(|u| &u.personal)).csv);
        out.push_str("# cross-user matrix\n");
        out.push_str(&self.matrix.render().csv);
        out
    }

    fn rows(&self, pick: impl Fn(&UserOutcome) -> &EvalReport) -> Vec<(String, EvalReport)> {
        self.users.iter().map(|u| (u.user_id.clone(), *pick(u))).collect()
    }
}

pub fn generate_sessions(profiles: &[SubjectProfile], schedule: &[(Phase, f64)]) -> Result<Vec<Session>> {
    profiles.iter().map(|p| synth_generate(p, schedule)).collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let base_sessions = generate_sessions(&config.base_population, &config.schedule)?;
    let base = segment_sessions(&base_sessions, config.window, config.stride)?;

    let cv = if config.folds > 0 {
        Some(cross_validate(&base, &config.train, config.folds)?)
    } else {
        None
    };

    let base_stats = fit_normalizer(&base)?;
    let mut base_model = build_base_model(config.window, config.train.seed)?;
    let base_report = train(&mut base_model, &apply_normalizer(&base, &base_stats)?, &config.train)?;

    let mut users = Vec::with_capacity(config.target_population.len());
    let mut held_out = Vec::with_capacity(config.target_population.len());
    for profile in &config.target_population {
        let session = synth_generate(profile, &config.schedule)?;
        let data = segment_windows(&session, config.window, config.stride)?;
        let personal = adapt_head(&base_model, &config.adaptation, &profile.id)?;
        let started = Instant::now();
        let outcome = finetune(&personal, &data, &config.adaptation.finetune)?;
        let finetune_time = started.elapsed();
        users.push(UserOutcome {
            user_id: profile.id.clone(),
            baseline: baseline_on_target(&base_model, &outcome.test_data)?,
            personal: outcome.held_out,
            finetune_time,
            model: outcome.personal,
        });
        held_out.push(outcome.test_data);
    }
    let models: Vec<PersonalModel> = users.iter().map(|u| u.model.clone()).collect();
    let matrix = cross_user_matrix(&models, &held_out)?;

    Ok(ExperimentReport {
        base_windows: base.len(),
        cv,
        base_model,
        base_stats,
        base_report,
        users,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PopulationSpec;

    fn small() -> ExperimentConfig {
        let schedule = vec![(Phase::Relaxed, 60.0), (Phase::Stressed, 60.0), (Phase::Relaxed, 30.0)];
        ExperimentConfig {
            window: 120,
            stride: 60,
            folds: 2,
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            adaptation: AdaptationSpec {
                finetune: TrainConfig {
                    epochs: 2,
                    learning_rate: 0.001,
                    ..TrainConfig::default()
                },
                ..AdaptationSpec::default()
            },
            schedule,
            base_population: PopulationSpec::base().sample(3, "s", 1),
            target_population: PopulationSpec::target().sample(2, "u", 2),
        }
    }

    #[test]
    fn small_run_is_complete_and_repeatable() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.cv.as_ref().unwrap().fold_accuracies.len(), 2);
        assert_eq!(a.users.len(), 2);
        assert_eq!(a.matrix.values.len(), 2);
        for (i, u) in a.users.iter().enumerate() {
            assert_eq!(a.matrix.values[i][i], u.personal.accuracy);
        }
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
