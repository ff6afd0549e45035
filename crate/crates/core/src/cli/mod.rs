//! Command-line surface: data synthesis, training, fine-tuning, evaluation, prediction and
//! live labelling.

mod config;
mod live;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

pub use config::CliConfig;
pub use live::{
    run_live, KeySource, LiveInference, LiveKey, LiveOptions, LiveSessionState, LiveSummary, ScriptedKeys, TerminalKeys,
};

use crate::data::{
    apply_normalizer, class_balance_report, fit_normalizer, load_session_csv, montreal_schedule, normalize_windows,
    segment_sessions, segment_windows, sliding_windows, synth_generate, Label, Session, SessionCsvAppender,
    WindowedDataset,
};
use crate::error::{Error, Result};
use crate::eval::{compare_reports, evaluate, render_report, CrossMatrix};
use crate::model::{argmax, build_base_model, cross_validate, read_model_file, save_model, train, StressNet};
use crate::transfer::{
    adapt_head, baseline_on_target, finetune, save_personal, user_split, FinetuneOutcome, Provenance,
};

#[derive(Debug, Parser)]
#[command(name = "stressnet", version, about = "Stress classification from HR/HRV/EDA windows")]
pub struct Cli {
    /// `key = value` configuration file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Window length in samples
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Window stride in samples
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Base learning rate (fine-tuning uses a tenth unless configured)
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Live replay speed multiplier
    #[arg(long, global = true)]
    pub speed: Option<f64>,
    /// Time fine-tuning three times and report the median
    #[arg(long, global = true)]
    pub benchmark: bool,
    /// Output file or directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic base-population and target-user session CSVs
    Synth,
    /// Cross-validate and train the base model
    Train {
        /// Session CSVs or directories of them (default: <data_dir>/base)
        data: Vec<PathBuf>,
    },
    /// Personalise a base model on one user's labelled session
    Finetune { base: PathBuf, user_data: PathBuf },
    /// Evaluate a model on labelled sessions
    Eval {
        model: PathBuf,
        #[arg(required = true)]
        data: Vec<PathBuf>,
    },
    /// Accuracy of every model on every user's data
    Crosseval {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
    },
    /// Per-window predictions for a session
    Predict { model: PathBuf, session: PathBuf },
    /// Replay a session and label it with the keyboard
    Live { model: PathBuf, session: PathBuf },
}

impl Cli {
    /// Config file (if any) with flags applied on top.
    pub fn effective_config(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(path) => CliConfig::from_file(path)?,
            None => CliConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.speed {
            cfg.speed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a parsed command. The effective configuration goes to `log` first, results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write, log: &mut dyn Write) -> Result<()> {
    let cfg = cli.effective_config()?;
    writeln!(log, "# effective config")?;
    write!(log, "{}", cfg.to_text())?;
    let o = cli.out.as_deref();
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, o, out).map(|_| ()),
        Command::Train { data } => cmd_train(&cfg, data, o, out).map(|_| ()),
        Command::Finetune { base, user_data } => cmd_finetune(&cfg, base, user_data, o, cli.benchmark, out).map(|_| ()),
        Command::Eval { model, data } => cmd_eval(&cfg, model, data, o, out),
        Command::Crosseval { models, data } => cmd_crosseval(&cfg, models, data, o, out).map(|_| ()),
        Command::Predict { model, session } => cmd_predict(&cfg, model, session, o, out).map(|_| ()),
        Command::Live { model, session } => cmd_live(&cfg, model, session, o, out),
    }
}

/// Session CSVs named directly or found (sorted) in the given directories.
pub fn collect_sessions(paths: &[PathBuf]) -> Result<Vec<Session>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Error::InvalidArgument(format!("{}: no .csv sessions", p.display())));
            }
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(Error::InvalidArgument(format!(
                "{}: no such file or directory",
                p.display()
            )));
        }
    }
    files.iter().map(load_session_csv).collect()
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_classifier(path: &Path) -> Result<(StressNet, Option<Provenance>)> {
    let file = read_model_file(path)?;
    let provenance = file.extra.as_deref().map(Provenance::from_bytes).transpose()?;
    let mut model = file.model;
    model.norm_stats = Some(file.norm_stats);
    Ok((model, provenance))
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub base_files: Vec<PathBuf>,
    pub target_files: Vec<PathBuf>,
}

/// Writes `<dir>/base/*.csv` and `<dir>/target/*.csv` and prints the class balance.
pub fn cmd_synth(cfg: &CliConfig, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<SynthOutput> {
    let dir = out_dir.unwrap_or(&cfg.data_dir);
    let schedule = montreal_schedule();
    let mut result = SynthOutput {
        base_files: Vec::new(),
        target_files: Vec::new(),
    };
    for (group, profiles) in [("base", cfg.base_population()), ("target", cfg.target_population())] {
        let group_dir = dir.join(group);
        fs::create_dir_all(&group_dir)?;
        let mut sessions = Vec::with_capacity(profiles.len());
        for p in &profiles {
            let session = synth_generate(p, &schedule)?;
            let path = group_dir.join(format!("{}.csv", p.id));
            session.write_csv(&path)?;
            match group {
                "base" => result.base_files.push(path),
                _ => result.target_files.push(path),
            }
            sessions.push(session);
        }
        let mut samples = [0usize; 2];
        for s in sessions.iter().flat_map(|s| &s.samples) {
            if let Some(c) = s.label.class() {
                samples[c] += 1;
            }
        }
        writeln!(out, "{group}: {} sessions in {}", sessions.len(), group_dir.display())?;
        writeln!(out, "  samples  relaxed {}  stressed {}", samples[0], samples[1])?;
        let windows = segment_sessions(&sessions, cfg.window, cfg.stride)?;
        writeln!(
            out,
            "  windows (W={}, S={}): {}",
            cfg.window,
            cfg.stride,
            class_balance_report(&windows)?
        )?;
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model_path: PathBuf,
    pub report_path: PathBuf,
    pub mean_cv_accuracy: Option<f64>,
}

/// Cross-validates (unless `folds = 0`), trains the final model on all data and writes
/// the model plus a `.report.csv` next to it.
pub fn cmd_train(
    cfg: &CliConfig,
    data: &[PathBuf],
    model_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<TrainOutput> {
    let paths = if data.is_empty() {
        vec![cfg.data_dir.join("base")]
    } else {
        data.to_vec()
    };
    let sessions = collect_sessions(&paths)?;
    let raw = segment_sessions(&sessions, cfg.window, cfg.stride)?;
    writeln!(out, "{} sessions, {}", sessions.len(), class_balance_report(&raw)?)?;
    let train_cfg = cfg.train_config();

    let mut csv = String::new();
    let mut mean = None;
    if cfg.folds > 0 {
        let cv = cross_validate(&raw, &train_cfg, cfg.folds)?;
        for (f, a) in cv.fold_accuracies.iter().enumerate() {
            writeln!(out, "fold {:>2}: {:.1}%", f + 1, a * 100.0)?;
        }
        mean = cv.mean_accuracy();
        writeln!(out, "mean CV accuracy: {:.1}%", mean.unwrap_or(f64::NAN) * 100.0)?;
        csv.push_str(&cv.to_csv());
    }

    let stats = fit_normalizer(&raw)?;
    let mut model = build_base_model(cfg.window, train_cfg.seed)?;
    let report = train(&mut model, &apply_normalizer(&raw, &stats)?, &train_cfg)?;
    if let Some(last) = report.final_epoch() {
        writeln!(
            out,
            "final model: training accuracy {:.1}% after {} epochs",
            last.accuracy * 100.0,
            last.epoch
        )?;
    }
    csv.push_str(&report.to_csv());

    let model_path = model_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("base.stn"));
    let report_path = model_path.with_extension("report.csv");
    save_model(&model, &stats, &model_path)?;
    fs::write(&report_path, csv)?;
    writeln!(out, "wrote {} and {}", model_path.display(), report_path.display())?;
    Ok(TrainOutput {
        model_path,
        report_path,
        mean_cv_accuracy: mean,
    })
}

/// Median of the given durations (upper middle for an even count).
pub fn median_duration(times: &[Duration]) -> Option<Duration> {
    let mut sorted = times.to_vec();
    sorted.sort();
    sorted.get(sorted.len() / 2).copied()
}

#[derive(Debug, Clone)]
pub struct FinetuneRun {
    pub outcome: FinetuneOutcome,
    pub baseline: crate::eval::EvalReport,
    pub times: Vec<Duration>,
    pub model_path: PathBuf,
}

/// Adapts `base` to one user's session, reports before/after accuracy on the user's
/// held-out windows and writes the personal model.
pub fn cmd_finetune(
    cfg: &CliConfig,
    base_path: &Path,
    user_path: &Path,
    model_out: Option<&Path>,
    benchmark: bool,
    out: &mut dyn Write,
) -> Result<FinetuneRun> {
    let (base, _) = load_classifier(base_path)?;
    let session = load_session_csv(user_path)?;
    let data = segment_windows(&session, base.window_len, cfg.stride)?;
    let spec = cfg.adaptation()?;
    let personal = adapt_head(&base, &spec, &session.subject_id)?;

    let runs = if benchmark { 3 } else { 1 };
    let mut times = Vec::with_capacity(runs);
    let mut outcome = None;
    for _ in 0..runs {
        let started = Instant::now();
        let o = finetune(&personal, &data, &spec.finetune)?;
        times.push(started.elapsed());
        outcome = Some(o);
    }
    let outcome = outcome.expect("at least one run");
    let baseline = baseline_on_target(&base, &outcome.test_data)?;

    writeln!(
        out,
        "{}: {} windows, {} held out",
        session.subject_id,
        data.len(),
        outcome.test_data.len()
    )?;
    writeln!(
        out,
        "base model     accuracy {:.1}%  f1 {:.2}",
        baseline.accuracy * 100.0,
        baseline.f1
    )?;
    writeln!(
        out,
        "personal model accuracy {:.1}%  f1 {:.2}",
        outcome.held_out.accuracy * 100.0,
        outcome.held_out.f1
    )?;
    writeln!(out, "{}", compare_reports(&baseline, &outcome.held_out))?;
    writeln!(out, "fine-tune wall time: {:.3} s", times[0].as_secs_f64())?;
    if benchmark {
        let all: Vec<String> = times.iter().map(|t| format!("{:.3}", t.as_secs_f64())).collect();
        let median = median_duration(&times).expect("three runs");
        writeln!(
            out,
            "benchmark: median of {runs} runs {:.3} s ({} s)",
            median.as_secs_f64(),
            all.join(", ")
        )?;
    }

    let model_path = model_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.stn", session.subject_id)));
    save_personal(&outcome.personal, &model_path)?;
    writeln!(out, "wrote {}", model_path.display())?;
    Ok(FinetuneRun {
        outcome,
        baseline,
        times,
        model_path,
    })
}

/// Evaluates one model on the pooled labelled windows of the given sessions.
pub fn cmd_eval(
    cfg: &CliConfig,
    model_path: &Path,
    data: &[PathBuf],
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let (model, _) = load_classifier(model_path)?;
    let sessions = collect_sessions(data)?;
    let windows = segment_sessions(&sessions, model.window_len, cfg.stride)?;
    let rendered = render_report(&file_label(model_path), &evaluate(&model, &windows)?);
    write!(out, "{}", rendered.text)?;
    if let Some(path) = csv_out {
        fs::write(path, rendered.csv)?;
    }
    Ok(())
}

/// Accuracy of every model on every session. When a personal model was fine-tuned on a
/// session's user, that row uses the same held-out split the fine-tuning used.
pub fn cmd_crosseval(
    cfg: &CliConfig,
    models: &[PathBuf],
    data: &[PathBuf],
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<CrossMatrix> {
    let loaded = models.iter().map(|p| load_classifier(p)).collect::<Result<Vec<_>>>()?;
    let window = loaded[0].0.window_len;
    if let Some((m, _)) = loaded.iter().find(|(m, _)| m.window_len != window) {
        return Err(Error::InvalidArgument(format!(
            "models disagree on window length ({window} vs {})",
            m.window_len
        )));
    }
    let sessions = collect_sessions(data)?;
    let mut values = Vec::with_capacity(sessions.len());
    let mut data_labels = Vec::with_capacity(sessions.len());
    for session in &sessions {
        let all = segment_windows(session, window, cfg.stride)?;
        let own = loaded
            .iter()
            .filter_map(|(_, p)| p.as_ref())
            .find(|p| p.user_id == session.subject_id);
        let rows: WindowedDataset = match own {
            Some(p) => user_split(&all, p.finetune.seed)?.1,
            None => all,
        };
        let row = loaded
            .iter()
            .map(|(m, _)| evaluate(m, &rows).map(|r| r.accuracy))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
        data_labels.push(session.subject_id.clone());
    }
    let model_labels = loaded
        .iter()
        .zip(models)
        .map(|((_, p), path)| {
            p.as_ref()
                .map(|p| p.user_id.clone())
                .unwrap_or_else(|| file_label(path))
        })
        .collect();
    let matrix = CrossMatrix {
        data_labels,
        model_labels,
        values,
    };
    let rendered = matrix.render();
    write!(out, "{}", rendered.text)?;
    if let Some(path) = csv_out {
        fs::write(path, rendered.csv)?;
    }
    Ok(matrix)
}

pub const PREDICT_CSV_HEADER: &str = "window,start_ms,end_ms,predicted,p_relaxed,p_stressed";

/// One row per window position, labelled or not.
pub fn cmd_predict(
    cfg: &CliConfig,
    model_path: &Path,
    session_path: &Path,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<usize> {
    let (model, _) = load_classifier(model_path)?;
    let session = load_session_csv(session_path)?;
    let (mut windows, starts) = sliding_windows(&session, model.window_len, cfg.stride)?;
    normalize_windows(
        &mut windows,
        model.norm_stats.as_ref().expect("loaded model has statistics"),
    )?;
    let probs = model.predict_proba(&windows)?;
    let mut csv = format!("{PREDICT_CSV_HEADER}\n");
    for (i, (p, &start)) in probs.iter().zip(&starts).enumerate() {
        let first = session.samples[start].timestamp_ms;
        let last = session.samples[start + model.window_len - 1].timestamp_ms;
        let _ = writeln!(
            csv,
            "{i},{first},{last},{},{},{}",
            Label::from_class(argmax(p)).name(),
            p[0],
            p[1]
        );
    }
    match csv_out {
        Some(path) => {
            fs::write(path, &csv)?;
            writeln!(out, "{} windows written to {}", probs.len(), path.display())?;
        }
        None => write!(out, "{csv}")?,
    }
    Ok(probs.len())
}

/// Fine-tunes `model` on a recording made in live mode.
pub fn finetune_recording(model: &StressNet, recording: &Path, cfg: &CliConfig) -> Result<FinetuneOutcome> {
    let session = load_session_csv(recording)?;
    let data = segment_windows(&session, model.window_len, cfg.stride)?;
    let spec = cfg.adaptation()?;
    finetune(&adapt_head(model, &spec, &session.subject_id)?, &data, &spec.finetune)
}

fn cmd_live(
    cfg: &CliConfig,
    model_path: &Path,
    session_path: &Path,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let (model, _) = load_classifier(model_path)?;
    let source = load_session_csv(session_path)?;
    let recording = csv_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("live_{}.csv", source.subject_id)));
    let mut keys = TerminalKeys::new()?;
    let is_new = fs::metadata(&recording).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new().create(true).append(true).open(&recording)?;
    let mut sink = SessionCsvAppender::new(std::io::BufWriter::new(file), is_new)?;
    let options = LiveOptions {
        speed: cfg.speed,
        stride: cfg.stride,
        raw_terminal: true,
    };
    let summary = run_live(&model, &source, &mut keys, &mut sink, out, &options);
    drop(keys);
    let summary = summary?;
    writeln!(
        out,
        "{} samples appended to {} (relaxed {}, stressed {}, unlabeled {})",
        summary.emitted,
        recording.display(),
        summary.label_counts[1],
        summary.label_counts[2],
        summary.label_counts[0]
    )?;

    write!(out, "fine-tune on the recorded labels now? [y/N] ")?;
    out.flush()?;
    let mut answer = String::new();
    std::io::stdin().lock().read_line(&mut answer)?;
    if !answer.trim().eq_ignore_ascii_case("y") {
        return Ok(());
    }
    let outcome = finetune_recording(&model, &recording, cfg)?;
    let personal_path = recording.with_extension("stn");
    save_personal(&outcome.personal, &personal_path)?;
    writeln!(
        out,
        "personal model held-out accuracy {:.1}%; wrote {}",
        outcome.held_out.accuracy * 100.0,
        personal_path.display()
    )?;
    Ok(())
}
