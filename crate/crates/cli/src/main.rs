//! `rawseq`: generate data, train, evaluate and decode raw-signal sequence
//! labelers.
//!
//! Exit status is 0 on success, 1 when a check or evaluation fails to meet
//! its threshold, and 2 for usage, configuration, data or I/O errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rawseq::data::{
    collapse_repeats, load_dataset, read_signal, save_dataset, synth_generate, SynthConfig,
};
use rawseq::gradcheck;
use rawseq::model::Recognizer;
use rawseq::numkernels::window_count;
use rawseq::trainer::{evaluate, prepare, train_observed};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "rawseq", version, about = "Raw-signal CNN + CRF sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tone corpus.
    Synth {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        utts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20.0)]
        snr: f64,
        #[arg(long, default_value_t = 8000)]
        sample_rate: u32,
        /// Output directory; the manifest is `<out>/manifest.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and save the best validation checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label accuracy of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Exit with status 1 if accuracy is below this value.
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
    /// Decode one signal file.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        /// Print one label per frame instead of the collapsed sequence.
        #[arg(long)]
        frames: bool,
    },
    /// Finite-difference check of every gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    /// Ran fine but did not meet a threshold.
    Check(String),
    Usage(String),
}

impl From<rawseq::Error> for Failure {
    fn from(e: rawseq::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            classes,
            utts,
            seed,
            snr,
            sample_rate,
            out,
        } => synth(classes, utts, seed, snr, sample_rate, &out),
        Command::Train {
            config,
            train,
            valid,
            out,
        } => run_train(&config, &train, &valid, &out),
        Command::Eval {
            model,
            data,
            min_accuracy,
        } => run_eval(&model, &data, min_accuracy),
        Command::Decode {
            model,
            signal,
            frames,
        } => decode(&model, &signal, frames),
        Command::Gradcheck { seed } => run_gradcheck(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("rawseq: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("rawseq: error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn synth(
    classes: usize,
    utts: usize,
    seed: u64,
    snr: f64,
    sample_rate: u32,
    out: &Path,
) -> CmdResult {
    let cfg = SynthConfig {
        classes,
        utterances: utts,
        seed,
        snr_db: snr,
        sample_rate,
        ..SynthConfig::default()
    };
    let data = synth_generate(&cfg)?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
    let manifest = out.join("manifest.txt");
    save_dataset(&data, &manifest)?;
    let frames: usize = data.utterances.iter().map(|u| u.labels.len()).sum();
    println!(
        "wrote {} utterances ({frames} frames, {} classes) to {}",
        data.len(),
        data.alphabet.len(),
        manifest.display()
    );
    Ok(())
}

fn run_train(config: &Path, train_path: &Path, valid_path: &Path, out: &Path) -> CmdResult {
    let text = fs::read_to_string(config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", config.display())))?;
    let mut resolved = RunConfig::parse(&text)
        .and_then(|c| c.resolve())
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    if resolved.train.metrics_path.is_none() {
        let mut p = out.as_os_str().to_owned();
        p.push(".metrics.tsv");
        resolved.train.metrics_path = Some(PathBuf::from(p));
    }

    let train_data = load_dataset(train_path)?;
    let valid_data = load_dataset(valid_path)?.remap_to(&train_data.alphabet)?;
    let alphabet = train_data.alphabet.clone();
    let net = resolved.network(alphabet.len());
    let rec = Recognizer::build(net, alphabet, resolved.framing, resolved.init_seed)?;

    let cfg = rec.network.config();
    println!(
        "framing: {} Hz, window {} samples, hop {} samples",
        resolved.framing.sample_rate, resolved.framing.window_samples, resolved.framing.hop_samples
    );
    let mut len = cfg.window_frames();
    for (i, s) in cfg.stages.iter().enumerate() {
        len = window_count(len, s.conv_kw, s.conv_dw)
            .and_then(|t| window_count(t, s.pool_kw, s.pool_dw))
            .unwrap_or(0);
        println!(
            "stage {}: conv kW={} dW={} filters={}, pool kW={} dW={} -> {len}x{}",
            i + 1,
            s.conv_kw,
            s.conv_dw,
            s.filters,
            s.pool_kw,
            s.pool_dw,
            s.filters
        );
    }
    println!(
        "classifier: {} -> {} -> {}, receptive field {} samples",
        cfg.classifier_inputs()?,
        cfg.hidden_units,
        cfg.num_classes,
        rec.network.receptive_field()
    );
    match resolved.preset.as_ref().and_then(|p| p.reference_params) {
        Some(r) => println!("parameters: {} (reference {r})", rec.param_count()),
        None => println!("parameters: {}", rec.param_count()),
    }

    let train_set = prepare(&rec, &train_data)?;
    let valid_set = prepare(&rec, &valid_data)?;
    println!("epoch\tnll\tvalid_acc");
    let outcome = train_observed(rec, &train_set, &valid_set, &resolved.train, |m| {
        println!("{}", m.log_line())
    })?;
    outcome.model.save(out)?;
    println!(
        "best validation accuracy {:.4} at epoch {}; saved {}",
        outcome.state.best_accuracy,
        outcome.state.best_epoch,
        out.display()
    );
    Ok(())
}

fn run_eval(model: &Path, data: &Path, min_accuracy: Option<f64>) -> CmdResult {
    let rec = Recognizer::load(model)?;
    let dataset = load_dataset(data)?.remap_to(&rec.alphabet)?;
    let report = evaluate(&rec, &dataset)?;
    println!("id\tS\tD\tI\tN");
    for u in &report.utterances {
        let c = &u.counts;
        println!(
            "{}\t{}\t{}\t{}\t{}",
            u.id, c.substitutions, c.deletions, c.insertions, c.reference_len
        );
    }
    let t = &report.totals;
    println!(
        "total\t{}\t{}\t{}\t{}",
        t.substitutions, t.deletions, t.insertions, t.reference_len
    );
    println!("accuracy {:.6}", report.accuracy);
    match min_accuracy {
        Some(min) if report.accuracy < min => Err(Failure::Check(format!(
            "accuracy {:.6} is below {min}",
            report.accuracy
        ))),
        _ => Ok(()),
    }
}

fn decode(model: &Path, signal: &Path, frames: bool) -> CmdResult {
    let rec = Recognizer::load(model)?;
    let id = signal.display().to_string();
    let (rate, samples) = read_signal(signal, &id)?;
    let path = rec.decode_windows(&rec.signal_windows(&samples, rate)?)?;
    let path = if frames { path } else { collapse_repeats(&path) };
    println!("{}", rec.alphabet.decode(&path).join(" "));
    Ok(())
}

fn run_gradcheck(seed: u64) -> CmdResult {
    let results = gradcheck::run_all(seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<8} instances={:<4} max_rel_err={:.3e} tol={:.0e}",
            r.name, r.instances, r.max_rel_error, r.tolerance
        );
        if !r.passed() {
            println!("     worst: {}", r.worst);
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed: {}",
            failed.join(", ")
        )))
    }
}
