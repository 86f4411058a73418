//! Command-line workflows: synthesize corpora, train the generator and the
//! detector bank, evaluate detectors, decode, and run the full benchmark.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use spoofguide::armodel::NGramModel;
use spoofguide::detector::{
    evaluate_detector, train_bank, BankMember, CropMode, DetectorBank, FeatureLogisticDetector,
};
use spoofguide::harness::{
    decode_corpus_logged, run_benchmark, summary_table, synthesize_data, write_reports, Scheme,
};
use spoofguide::hierdecode::write_round_logs;
use spoofguide::token::{read_corpus, read_corpus_with_vocab, write_corpus};
use spoofguide::Error;

use config::{CliConfig, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "spoofguide",
    version,
    about = "Detector-guided decoding for autoregressive token models",
    after_help = "Configuration precedence: flag > --config file > built-in default.\n\
                  Exit codes: 0 success, 1 validation error, 2 benchmark ordering failed, 3 I/O error."
)]
struct Cli {
    /// JSON configuration file; see `show-config` for its layout
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample real corpora from the synthetic source and generated corpora
    /// from an n-gram model fitted to them
    GenData {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the n-gram generator to a corpus
    TrainAr {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the five-member detector bank
    TrainDetectors {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print AUROC, accuracy and macro-F1 of each bank member
    EvalDetectors {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
    },
    /// Generate sequences with one decoding scheme
    Decode {
        /// n-gram model file
        #[arg(long)]
        model: PathBuf,
        /// original (top-k), ras (RAS-style windowed penalty), eas,
        /// hier-ras or hier-eas
        #[arg(long)]
        scheme: Scheme,
        /// Detector bank directory; required by hier-ras and hier-eas,
        /// rejected by the others
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-round search logs (JSON lines) of hierarchical schemes
        #[arg(long)]
        round_log: Option<PathBuf>,
    },
    /// Run the synthetic benchmark over all configured seeds
    Benchmark {
        #[arg(long)]
        out_dir: PathBuf,
        /// Start from the small preset instead of the full defaults
        #[arg(long)]
        smoke: bool,
    },
    /// Print the effective configuration as JSON
    ShowConfig {
        #[arg(long)]
        smoke: bool,
    },
}

/// A benchmark ordering did not hold.
#[derive(Debug)]
struct AssertionFailed(String);

impl std::fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AssertionFailed>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_validation() { 1 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

/// The error chain on one line, skipping causes already quoted by their
/// parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn settings(cli: &Cli, smoke: bool) -> anyhow::Result<CliConfig> {
    let mut cfg = config::load(cli.config.as_deref(), smoke)?;
    cli.overrides.apply(&mut cfg);
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenData { out_dir } => {
            let cfg = settings(&cli, false)?;
            let data = synthesize_data(&cfg.benchmark, cfg.run.seed)?;
            create_dir(out_dir)?;
            let v = cfg.benchmark.vocab_size;
            write_corpus(out_dir.join("real.txt"), v, &data.real_train)?;
            write_corpus(out_dir.join("fake.txt"), v, &data.fake_train)?;
            write_corpus(out_dir.join("heldout_real.txt"), v, &data.real_held)?;
            write_corpus(out_dir.join("heldout_fake.txt"), v, &data.fake_held)?;
            data.model.save(out_dir.join("model.json"))?;
            println!(
                "wrote {} real / {} fake training and {} real / {} fake held-out sequences to {}",
                data.real_train.len(),
                data.fake_train.len(),
                data.real_held.len(),
                data.fake_held.len(),
                out_dir.display()
            );
        }
        Command::TrainAr { corpus, out } => {
            let cfg = settings(&cli, false)?;
            let (vocab, seqs) = read_corpus_with_vocab(corpus)?;
            let model = NGramModel::train(&seqs, vocab, cfg.benchmark.ar_order, cfg.benchmark.ar_lambda)?;
            model.save(out)?;
            println!(
                "trained order-{} model on {} sequences (vocab {vocab})",
                model.order(),
                seqs.len()
            );
        }
        Command::TrainDetectors { real, fake, out_dir } => {
            let cfg = settings(&cli, false)?;
            let real = read_corpus(real)?;
            let fake = read_corpus(fake)?;
            let (bank, reports) = train_bank(&real, &fake, CropMode::Hop(cfg.benchmark.crop_hop), &cfg.benchmark.train)?;
            create_dir(out_dir)?;
            bank.save(out_dir)?;
            for (member, report) in reports {
                println!("{:<7} final loss {:.4}", member.name(), report.final_loss);
            }
        }
        Command::EvalDetectors { bank, real, fake } => {
            let bank = DetectorBank::<FeatureLogisticDetector>::load(bank)?;
            let real = read_corpus(real)?;
            let fake = read_corpus(fake)?;
            println!(
                "{:<7} {:<8} {:>8} {:>8} {:>8} {:>7} {:>7}",
                "member", "spec", "auroc", "acc", "macroF1", "n_real", "n_fake"
            );
            for m in BankMember::ALL {
                let e = evaluate_detector(m, bank.get(m), &real, &fake)?;
                println!(
                    "{:<7} {:<8} {:>8.4} {:>8.4} {:>8.4} {:>7} {:>7}",
                    m.name(),
                    e.spec.to_string(),
                    e.auroc,
                    e.accuracy,
                    e.macro_f1,
                    e.n_real,
                    e.n_fake
                );
            }
        }
        Command::Decode {
            model,
            scheme,
            bank,
            out,
            round_log,
        } => {
            let cfg = settings(&cli, false)?;
            let scheme = *scheme;
            match (scheme.is_hierarchical(), bank) {
                (true, None) => {
                    return Err(Error::Validation(format!("scheme {scheme} requires --bank <DIR>")).into())
                }
                (false, Some(_)) => {
                    return Err(Error::Validation(format!(
                        "scheme {scheme} does not use a detector bank; drop --bank"
                    ))
                    .into())
                }
                _ => {}
            }
            let model = NGramModel::load(model)?;
            let bank = bank
                .as_ref()
                .map(DetectorBank::<FeatureLogisticDetector>::load)
                .transpose()?;
            let run = cfg.run;
            let (seqs, logs) = decode_corpus_logged(
                &model,
                bank.as_ref(),
                scheme,
                &cfg.benchmark.decoding,
                run.n,
                run.len,
                run.seed,
            )?;
            write_corpus(out, spoofguide::armodel::NextTokenModel::vocab_size(&model), &seqs)?;
            if let Some(path) = round_log {
                let flat: Vec<_> = logs.into_iter().flatten().collect();
                let file = fs::File::create(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                write_round_logs(std::io::BufWriter::new(file), &flat)?;
            }
            println!("wrote {} sequences of {} tokens to {}", seqs.len(), run.len, out.display());
        }
        Command::Benchmark { out_dir, smoke } => {
            let cfg = settings(&cli, *smoke)?;
            let outcome = run_benchmark(&cfg.benchmark)?;
            write_reports(&outcome, out_dir)?;
            print!("{}", summary_table(&outcome));
            if !outcome.all_hold() {
                let failed: Vec<&str> = outcome
                    .checks
                    .iter()
                    .filter(|c| !c.holds())
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(AssertionFailed(format!("orderings failed: {}", failed.join("; "))).into());
            }
        }
        Command::ShowConfig { smoke } => {
            let cfg = settings(&cli, *smoke)?;
            println!("{}", serde_json::to_string_pretty(&cfg).context("serializing config")?);
        }
    }
    Ok(())
}
