//! Sessions, windowing, normalisation, splits and the synthetic generator.

mod balance;
mod normalize;
mod session;
mod split;
mod synth;
mod window;

pub use balance::{class_balance_report, BalanceReport, MINORITY_WARN_FRACTION};
pub use normalize::{apply_normalizer, fit_normalizer, invert_normalizer, normalize_windows, normalized_with};
pub use session::{
    format_sample_row, load_session_csv, parse_session, quantize, Label, SensorSample, Session, SessionCsvAppender,
    CSV_HEADER, NOMINAL_RATE_HZ,
};
pub use split::{kfold_split, stratified_split, Fold};
pub use synth::{
    default_base_population, default_target_population, montreal_schedule, schedule_duration_s, synth_generate, Phase,
    PopulationSpec, Schedule, SubjectProfile, DEFAULT_BASE_SEED, DEFAULT_TARGET_SEED,
};
pub use window::{
    segment_sessions, segment_windows, sliding_windows, window_count, window_label, NormStats, WindowedDataset,
    CHANNELS, DEFAULT_STRIDE, DEFAULT_WINDOW,
};
