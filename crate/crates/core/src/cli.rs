//! The `ppm` command line: synth, train, predict, evaluate.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::{write_atomic, Checkpoint, CheckpointError};
use crate::eval::{evaluate, paired_t_test_samples, EvalError, EvalReport, TTestResult, Tail};
use crate::eventlog::{
    encode_sequence, generate_pairs, generate_synthetic_log, lookup_trace, parse_csv, temporal_split, write_csv,
    CsvSchema, EventLog, LogError, SyntheticSpec,
};
use crate::infer::{beam_search, greedy_decode, BeamConfig, PredictionRecord};
use crate::nn::ModelError;
use crate::pipeline::{train_on, Dataset};
use crate::train::{TrainConfig, TrainError, TrainMode};

/// Environment variable naming the default `train --config` file.
pub const CONFIG_ENV: &str = "PPM_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "ppm",
    version,
    about = "Predict activity suffixes and remaining time from event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// 5 layers × 200 units, 500 iterations.
    Full,
    /// 1 layer × 32 units, 50 iterations.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log from a TOML description.
    Synth {
        /// Variants, duration distributions and trace count.
        #[arg(long)]
        spec: PathBuf,
        /// Event-log CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the trace count given in the spec.
        #[arg(long)]
        traces: Option<usize>,
    },
    /// Split a log, build pairs and fit a generator.
    Train {
        /// Event-log CSV with case_id, activity and timestamp columns.
        #[arg(long)]
        log: PathBuf,
        /// `mle` or `mlmme`; overrides the config.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        /// TOML training config; defaults to $PPM_CONFIG when set.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Profile::Full)]
        profile: Profile,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss report CSV; defaults to `<out>.losses.csv`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Decode suffixes for every case of a prefix log.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// Event-log CSV; each case is one prefix.
        #[arg(long)]
        prefix_file: PathBuf,
        /// Beam size; 1 decodes greedily.
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// JSON-lines output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on one split of a log.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Full event log; it is split the same way as for training.
        #[arg(long)]
        log: PathBuf,
        /// Beam size; the max-SDL candidate is scored.
        #[arg(long, default_value_t = 1)]
        beam: usize,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// Second checkpoint for paired t-tests against the first.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// JSON report; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    s.parse()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| match e {
        CheckpointError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

/// Runs one command and returns the text meant for stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth {
            spec,
            out,
            seed,
            traces,
        } => synth(&spec, &out, seed, traces),
        Command::Train {
            log,
            mode,
            config,
            profile,
            seed,
            iterations,
            out,
            report,
            quiet,
        } => {
            let config = config.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
            let mut cfg = load_config(config.as_deref(), profile)?;
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            cfg.validate()?;
            let report = report.unwrap_or_else(|| {
                let mut name = out.clone().into_os_string();
                name.push(".losses.csv");
                PathBuf::from(name)
            });
            train(&log, &cfg, &out, &report, quiet)
        }
        Command::Predict {
            ckpt,
            prefix_file,
            beam,
            out,
        } => predict(&ckpt, &prefix_file, beam, out.as_deref()),
        Command::Evaluate {
            ckpt,
            log,
            beam,
            split,
            compare,
            out,
        } => evaluate_cmd(&ckpt, &log, beam, split, compare.as_deref(), out.as_deref()),
    }
}

/// Profile defaults with the keys of an optional TOML file laid over them.
pub fn load_config(path: Option<&Path>, profile: Profile) -> Result<TrainConfig> {
    let base = match profile {
        Profile::Full => TrainConfig::default(),
        Profile::Desk => TrainConfig::desk(),
    };
    let Some(path) = path else {
        return Ok(base);
    };
    let text = read_text(path)?;
    let overrides: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| TrainError::Config(format!("{}: {e}", path.display())))?;
    let mut merged = toml::Table::try_from(&base).map_err(|e| TrainError::Config(e.to_string()))?;
    merged.extend(overrides);
    let cfg: TrainConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| TrainError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn synth(spec: &Path, out: &Path, seed: u64, traces: Option<usize>) -> Result<String> {
    let spec = SyntheticSpec::from_toml(&read_text(spec)?)?;
    let n = traces
        .or(spec.traces)
        .ok_or_else(|| CliError::Usage("trace count missing: pass --traces or set `traces` in the spec".into()))?;
    let log = generate_synthetic_log(&spec, n, seed)?;
    let mut buf = Vec::new();
    write_csv(&log, &mut buf)?;
    write_output(out, &buf)?;
    Ok(format!(
        "wrote {} traces ({} events) to {}\n",
        log.len(),
        log.num_events(),
        out.display()
    ))
}

fn read_log(path: &Path) -> Result<EventLog> {
    if !path.exists() {
        return Err(CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    Ok(parse_csv(path, &CsvSchema::default())?)
}

fn train(log: &Path, cfg: &TrainConfig, out: &Path, report: &Path, quiet: bool) -> Result<String> {
    let log = read_log(log)?;
    let dataset = Dataset::prepare(&log)?;
    let trained = train_on(&dataset, cfg, |r| {
        if !quiet {
            eprintln!(
                "iter {:>4}  tau {:.4}  loss {:.6}  val {:.6}",
                r.iteration, r.temperature, r.supervised_loss, r.validation_loss
            );
        }
    })?;
    let mut csv = Vec::new();
    trained.report.write_csv(&mut csv).map_err(io_err(report))?;
    let ckpt = Checkpoint::from_trained(&trained);
    write_output(report, &csv)?;
    if let Err(e) = write_output(out, &ckpt.to_bytes()) {
        let _ = std::fs::remove_file(report);
        return Err(e);
    }
    Ok(format!(
        "trained {} iterations (best {} with validation loss {:.6}); checkpoint {}, losses {}\n",
        trained.report.iterations.len(),
        trained.report.best_iteration,
        trained.report.best_validation_loss,
        out.display(),
        report.display()
    ))
}

fn beam_config(beam: usize, cap: usize) -> Result<BeamConfig> {
    if beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    Ok(BeamConfig::new(beam, cap))
}

fn predict(ckpt: &Path, prefix_file: &Path, beam: usize, out: Option<&Path>) -> Result<String> {
    let ck = Checkpoint::load(ckpt)?;
    let cfg = beam_config(beam, ck.max_length)?;
    let prefixes = read_log(prefix_file)?;
    let mut records = Vec::new();
    for trace in &prefixes.traces {
        let events = lookup_trace(trace, &ck.vocab)?;
        let encoded = encode_sequence(&events, &ck.vocab, &ck.scaler)?;
        let preds = if beam == 1 {
            vec![greedy_decode(&ck.generator, &encoded, cfg.max_length)?]
        } else {
            beam_search(&ck.generator, &encoded, cfg)?
        };
        for (rank, p) in preds.iter().enumerate() {
            records.push(PredictionRecord::new(
                &trace.case_id,
                rank + 1,
                p,
                &ck.vocab,
                &ck.scaler,
            ));
        }
    }
    let mut buf = Vec::new();
    crate::infer::write_records(&records, &mut buf).expect("writing to memory");
    match out {
        Some(path) => {
            write_output(path, &buf)?;
            Ok(format!("wrote {} predictions to {}\n", records.len(), path.display()))
        }
        None => Ok(String::from_utf8(buf).expect("JSON is UTF-8")),
    }
}

#[derive(Debug, Serialize)]
struct Comparison {
    checkpoint: String,
    mean_sdl: f64,
    mae_days: f64,
    /// `d = SDL(first) − SDL(second)`, alternative mean > 0.
    sdl_test: Option<TTestResult>,
    /// `d = AE(first) − AE(second)`, alternative mean < 0.
    ae_test: Option<TTestResult>,
    notes: Vec<String>,
}

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    checkpoint: String,
    split: String,
    #[serde(flatten)]
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn evaluate_split(ck: &Checkpoint, log: &EventLog, beam: usize, split: SplitName) -> Result<EvalReport> {
    let parts = temporal_split(log)?;
    let part = match split {
        SplitName::Train => &parts.train,
        SplitName::Validation => &parts.validation,
        SplitName::Test => &parts.test,
    };
    let pairs = generate_pairs(part, &ck.vocab)?;
    Ok(evaluate(
        &ck.generator,
        &pairs,
        &ck.vocab,
        &ck.scaler,
        beam_config(beam, ck.max_length)?,
    )?)
}

fn evaluate_cmd(
    ckpt: &Path,
    log: &Path,
    beam: usize,
    split: SplitName,
    compare: Option<&Path>,
    out: Option<&Path>,
) -> Result<String> {
    let ck = Checkpoint::load(ckpt)?;
    let log = read_log(log)?;
    let report = evaluate_split(&ck, &log, beam, split)?;
    let comparison = match compare {
        None => None,
        Some(other_path) => {
            let other = Checkpoint::load(other_path)?;
            let other_report = evaluate_split(&other, &log, beam, split)?;
            let mut notes = Vec::new();
            let mut test = |a: Vec<f64>, b: Vec<f64>, tail, what: &str| match paired_t_test_samples(&a, &b, tail) {
                Ok(t) => Some(t),
                Err(e) => {
                    notes.push(format!("{what}: {e}"));
                    None
                }
            };
            let sdl_test = test(report.sdl_values(), other_report.sdl_values(), Tail::Upper, "sdl_test");
            let ae_test = test(report.abs_errors(), other_report.abs_errors(), Tail::Lower, "ae_test");
            Some(Comparison {
                checkpoint: other_path.display().to_string(),
                mean_sdl: other_report.mean_sdl,
                mae_days: other_report.mae_days,
                sdl_test,
                ae_test,
                notes,
            })
        }
    };
    let mut summary = format!(
        "{} prefixes, beam {}: mean SDL {:.4}, MAE {:.4} days\n",
        report.count, report.beam_size, report.mean_sdl, report.mae_days
    );
    if let Some(c) = &comparison {
        summary.push_str(&format!(
            "compared with {}: mean SDL {:.4}, MAE {:.4} days\n",
            c.checkpoint, c.mean_sdl, c.mae_days
        ));
        for t in c.sdl_test.iter().chain(&c.ae_test) {
            summary.push_str(&format!("  {t}\n"));
        }
        for n in &c.notes {
            summary.push_str(&format!("  {n}\n"));
        }
    }
    let output = EvaluationOutput {
        checkpoint: ckpt.display().to_string(),
        split: format!("{split:?}").to_lowercase(),
        report,
        comparison,
    };
    let mut json = serde_json::to_vec_pretty(&output).expect("report serializes");
    json.push(b'\n');
    match out {
        Some(path) => {
            write_output(path, &json)?;
            Ok(summary)
        }
        None => Ok(String::from_utf8(json).expect("JSON is UTF-8")),
    }
}
