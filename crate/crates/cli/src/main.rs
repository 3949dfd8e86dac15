//! coughnet: synthesize a corpus, train the segment CNN, run the
//! evaluation experiments, detect events in a WAV, or check gradients.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use coughnet_core::audio::{load_corpus, write_corpus};
use coughnet_core::cnn::{label_for, reduced_stack};
use coughnet_core::dsp::{self, DEFAULT_ADMIT_THRESHOLD, EVAL_HOP_FRAMES, TRAIN_HOP_FRAMES};
use coughnet_core::eval::experiments::{
    labeled_segments, render_table, run_all, write_artifacts, TEST_FRACTION,
    VAL_FRACTION_OF_BUILD,
};
use coughnet_core::nn::gradcheck;
use coughnet_core::nn::sgd::SgdConfig;
use coughnet_core::storage;
use coughnet_core::{
    load_wav, split_dataset, synth_corpus, CnnModel, Error, EvalReport, Label, SeededRng, Tensor,
};

#[derive(Parser)]
#[command(name = "coughnet", version, about = "Cough detection on short audio clips")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic corpus of cough and speech WAVs
    Synth(SynthArgs),
    /// Train the segment CNN; writes the model and its training history
    Train(TrainArgs),
    /// Run both experiments on a corpus and write the CSV artifacts
    Eval(EvalArgs),
    /// List detected events in one WAV, one admitted window per line
    Detect(DetectArgs),
    /// Compare analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// File of key=value lines supplying defaults; explicit flags win
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for every random choice
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the WAVs and manifest.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Clips per class
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory containing manifest.csv
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Where to write the trained model
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Where to write the per-epoch history CSV (default: model path
    /// with a .history.csv extension)
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus directory containing manifest.csv
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Directory for the table and ROC CSVs
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained model file
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// 16 kHz mono WAV to scan
    #[arg(long, value_name = "FILE")]
    wav: PathBuf,
    /// RMS admission threshold; windows at or below it are skipped
    #[arg(long)]
    threshold: Option<f64>,
    /// Also write each admitted window's spectrogram here as a .dcsg matrix
    #[arg(long, value_name = "DIR")]
    dump_spectrograms: Option<PathBuf>,
    /// File of key=value lines supplying defaults; explicit flags win
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Convolution filters per layer in the reduced network
    #[arg(long)]
    filters: Option<usize>,
    /// Units in each dense layer of the reduced network
    #[arg(long)]
    dense: Option<usize>,
    /// Finite-difference step
    #[arg(long)]
    step: Option<f64>,
    /// Maximum acceptable relative error
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    common: Common,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Defaults read from a --config file. Lookup order is flag, then file,
/// then the built-in default.
struct Overrides {
    map: BTreeMap<String, String>,
}

impl Overrides {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Core(Error::io(path, e)))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "{}:{}: expected key=value, got {:?}",
                        path.display(),
                        lineno + 1,
                        line
                    )));
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Overrides { map })
    }

    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(raw) => raw.parse().map_err(|_| {
                CliError::Usage(format!("config key {key}: cannot parse {raw:?}"))
            }),
            None => Ok(default),
        }
    }

    fn sgd(
        &self,
        learning_rate: Option<f64>,
        momentum: Option<f64>,
        batch_size: Option<usize>,
        epochs: Option<usize>,
        seed: u64,
    ) -> Result<SgdConfig, CliError> {
        let d = SgdConfig::default();
        Ok(SgdConfig {
            learning_rate: self.resolve(learning_rate, "learning_rate", d.learning_rate)?,
            momentum: self.resolve(momentum, "momentum", d.momentum)?,
            batch_size: self.resolve(batch_size, "batch_size", d.batch_size)?,
            epochs: self.resolve(epochs, "epochs", d.epochs)?,
            seed,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_numeric() { 3 } else { 2 })
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Core(Error::io(path, e)))
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, CliError> {
    let cfg = Overrides::load(args.common.config.as_deref())?;
    let n = cfg.resolve(args.n, "n", 200)?;
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let seed = cfg.resolve(args.common.seed, "seed", 42)?;
    let corpus = synth_corpus(n, seed);
    write_corpus(&corpus, &args.out)?;
    let (cough, speech) = corpus.class_counts();
    println!(
        "wrote {cough} cough and {speech} speech clips to {}",
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Segment-level report for one trained model on one test set.
fn segment_report(model: &CnnModel, test: &[(Tensor, Label)]) -> Result<EvalReport, CliError> {
    let mut preds = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    for (seg, _) in test {
        let (p_cough, _) = model.predict_segment(seg)?;
        preds.push(label_for(p_cough));
        scores.push(p_cough);
    }
    let truth: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    Ok(EvalReport::new("stft_cnn", &truth, &preds, &scores)?)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, CliError> {
    let cfg = Overrides::load(args.common.config.as_deref())?;
    let seed = cfg.resolve(args.common.seed, "seed", 42)?;
    let sgd = cfg.sgd(
        args.learning_rate,
        args.momentum,
        args.batch_size,
        args.epochs,
        seed,
    )?;
    let corpus = load_corpus(&args.corpus)?;
    let (train, val, test) = split_dataset(&corpus, TEST_FRACTION, VAL_FRACTION_OF_BUILD, seed)?;
    let train_segs = labeled_segments(&train, TRAIN_HOP_FRAMES)?;
    let val_segs = labeled_segments(&val, EVAL_HOP_FRAMES)?;
    let test_segs = labeled_segments(&test, EVAL_HOP_FRAMES)?;
    println!(
        "training on {} segments, validating on {}, testing on {}",
        train_segs.len(),
        val_segs.len(),
        test_segs.len()
    );
    let model = CnnModel::train(&train_segs, &val_segs, &sgd)?;
    model.save(&args.model)?;

    let hist_path = args
        .history
        .unwrap_or_else(|| args.model.with_extension("history.csv"));
    let mut csv = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for e in &model.history {
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6}",
            e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
        )
        .expect("string write");
    }
    write_file(&hist_path, &csv)?;

    let report = segment_report(&model, &test_segs)?;
    print!("{}", render_table("held-out segment metrics", &[report]));
    println!("model: {}", args.model.display());
    println!("history: {}", hist_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, CliError> {
    let cfg = Overrides::load(args.common.config.as_deref())?;
    let seed = cfg.resolve(args.common.seed, "seed", 42)?;
    let sgd = cfg.sgd(
        args.learning_rate,
        args.momentum,
        args.batch_size,
        args.epochs,
        seed,
    )?;
    let corpus = load_corpus(&args.corpus)?;
    let results = run_all(&corpus, seed, &sgd)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Core(Error::io(&args.out, e)))?;
    write_artifacts(&args.out, &results)?;
    print!("{}", render_table("experiment 1: per-segment models", &results.exp1));
    println!();
    print!("{}", render_table("experiment 2: per-clip decisions", &results.exp2));
    println!();
    let c = results.counts;
    println!(
        "segments: {} train / {} val / {} test; test clips: {}",
        c.train, c.val, c.test, c.test_clips
    );
    println!("artifacts written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_detect(args: DetectArgs) -> Result<ExitCode, CliError> {
    let cfg = Overrides::load(args.config.as_deref())?;
    let threshold = cfg.resolve(args.threshold, "threshold", DEFAULT_ADMIT_THRESHOLD)?;
    if !(threshold >= 0.0) {
        return Err(CliError::Usage("--threshold must be nonnegative".into()));
    }
    let model = CnnModel::load(&args.model)?;
    let clip = load_wav(&args.wav)?;
    let frames = dsp::frame_signal(&clip)?;
    if let Some(dir) = &args.dump_spectrograms {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Core(Error::io(dir, e)))?;
    }
    for window in dsp::admit_windows(&frames, threshold) {
        let segment = window.stft();
        let (p_cough, _) = model.predict_segment(&segment.values)?;
        println!(
            "{},{},{},{p_cough:.4}",
            window.start_ms(),
            window.end_ms(),
            label_for(p_cough)
        );
        if let Some(dir) = &args.dump_spectrograms {
            let path = dir.join(format!("segment_{:06}.dcsg", window.start_ms()));
            let t = &segment.values;
            storage::write_matrix(&path, t.shape()[0], t.shape()[1], t.data())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode, CliError> {
    let cfg = Overrides::load(args.common.config.as_deref())?;
    let filters = cfg.resolve(args.filters, "filters", 4)?;
    let dense = cfg.resolve(args.dense, "dense", 16)?;
    let seed = cfg.resolve(args.common.seed, "seed", 42)?;
    let step = cfg.resolve(args.step, "step", 1e-5)?;
    let tolerance = cfg.resolve(args.tolerance, "tolerance", 1e-4)?;
    if filters == 0 || dense == 0 {
        return Err(CliError::Usage("--filters and --dense must be positive".into()));
    }

    let mut net = reduced_stack(filters, dense, seed);
    let mut rng = SeededRng::new(seed);
    let data: Vec<f64> = (0..64 * 16).map(|_| rng.normal()).collect();
    let input = Tensor::from_vec(&[1, 64, 16], data).expect("input shape");
    println!(
        "checking {} parameters ({filters} filters, {dense} dense units, h={step:.1e})",
        net.param_count()
    );
    let mut worst = 0.0f64;
    for label in 0..2 {
        let err = gradcheck::gradient_check(&mut net, &input, label, step)
            .map_err(CliError::Core)?;
        println!("label {label}: max relative error {err:.3e}");
        worst = worst.max(err);
    }
    if worst < tolerance {
        println!("PASS (worst {worst:.3e} < {tolerance:.1e})");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL (worst {worst:.3e} >= {tolerance:.1e})");
        Ok(ExitCode::from(3))
    }
}
