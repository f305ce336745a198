use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use digit_triad::bench::{self, Event, ModelSelector, RunConfig};

#[derive(Parser)]
#[command(name = "digit-triad", version, about = "Train and compare SVM, MLP and CNN digit classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the selected models and write a JSON report.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// svm, mlp, cnn or all (trained in that order).
    #[arg(long)]
    model: ModelSelector,
    /// Epochs for the neural models.
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, env = "DIGIT_TRIAD_DATA")]
    data_dir: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Writes `<model>_curves.csv` per neural model.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
    /// Label histogram of the training set; the test set goes to `<stem>.test.<ext>`.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Writes svm.dsvm, mlp.dnet and cnn.dnet.
    #[arg(long)]
    save_models: Option<PathBuf>,
    /// Evaluation worker threads.
    #[arg(long, default_value_t = 1)]
    parallel_eval: usize,
    /// Train on only the first N training images.
    #[arg(long)]
    train_limit: Option<usize>,
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        RunConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: a.seed,
            curves_dir: a.curves_dir,
            stats: a.stats,
            save_models: a.save_models,
            parallel_eval: a.parallel_eval,
            train_limit: a.train_limit,
            ..RunConfig::new(a.model, a.data_dir, a.report)
        }
    }
}

fn progress(event: Event<'_>) {
    match event {
        Event::Loaded { train, test, seconds } => {
            eprintln!("loaded {train} training and {test} test images in {seconds:.1}s")
        }
        Event::Training(kind) => eprintln!("training {kind}"),
        Event::Epoch(kind, r) => eprintln!(
            "  {kind} epoch {:>3}  loss {:.4}  acc {:.4}  {:.1}s",
            r.epoch, r.loss, r.accuracy, r.seconds
        ),
        Event::Finished(r) => eprintln!("  {} done in {:.1}s", r.model, r.train_seconds),
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved for bad data.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run(args) = cli.command;
    let cfg = RunConfig::from(args);
    match bench::run(&cfg, &mut progress) {
        Ok(report) => {
            println!("{:<6}{:>12}{:>12}{:>14}", "model", "train %", "test %", "train secs");
            for r in &report.runs {
                println!(
                    "{:<6}{:>12.3}{:>12.3}{:>14.1}",
                    r.model.name(),
                    100.0 * r.train_accuracy,
                    100.0 * r.test_accuracy,
                    r.train_seconds
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("digit-triad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
