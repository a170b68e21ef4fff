use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfattn_dialogue::cli::{self, Direction, Models};
use selfattn_dialogue::config::RunConfig;
use selfattn_dialogue::metrics::format_table;

/// Seq2seq dialogue generation with selectable first-context strategies.
#[derive(Parser)]
#[command(name = "s2sa", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Decoding worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Deduplicate, filter and split a pair file; build the vocabulary.
    Prepare {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forward or reverse model on a prepared directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "forward")]
        direction: String,
    },
    /// Decode one message per line.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        messages: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// standard, hard-bos, positional:<k>, random:<seed>, selfattn-max, selfattn-min
        #[arg(long)]
        strategy: Option<String>,
        /// Reverse checkpoint enabling MMI reranking.
        #[arg(long)]
        reverse: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run every method on a test pair file and write the reports.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reverse: Option<PathBuf>,
    },
    /// Score a response file against a pair file's references.
    Evaluate {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        responses: PathBuf,
    },
    /// Print a checkpoint's dimensions and size.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Interactive single-turn chat; type `exit` to leave.
    Chat {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        reverse: Option<PathBuf>,
        /// Print the selected encoder position for hard strategies.
        #[arg(long)]
        verbose: bool,
    },
}

fn load_config(g: &Global) -> selfattn_dialogue::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    for o in &g.overrides {
        cfg.set_assignment(o)?;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> selfattn_dialogue::Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Prepare { pairs, out } => {
            let s = cli::cmd_prepare(&pairs, &out, &cfg)?;
            println!(
                "loaded {} pairs ({} duplicates, {} empty lines skipped); kept {} within length {}",
                s.loaded, s.duplicates, s.skipped_empty, s.kept, cfg.length_cap
            );
            println!("train {}  test {}  valid {}  vocabulary {}", s.train, s.test, s.valid, s.vocab_size);
        }
        Command::Train { data, out, direction } => {
            let direction: Direction = direction.parse()?;
            let s = cli::cmd_train(&data, &out, &cfg, direction, |e| {
                eprintln!("epoch {:>3}  train {:.6}  valid {:.6}", e.epoch, e.train_loss, e.valid_loss);
            })?;
            match s.best_epoch {
                Some(b) => println!("kept epoch {b} of {}; {} parameters", s.log.len(), s.num_params),
                None => println!("no epochs run; {} parameters", s.num_params),
            }
        }
        Command::Decode {
            checkpoint,
            messages,
            out,
            strategy,
            reverse,
            lambda,
        } => {
            if let Some(s) = strategy {
                cfg.set("strategy", &s)?;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            let r = cli::cmd_decode(&checkpoint, &messages, &out, &cfg, reverse.as_deref())?;
            println!("decoded {} messages", r.len());
        }
        Command::Compare {
            checkpoint,
            test,
            out,
            reverse,
        } => {
            let s = cli::cmd_compare(&checkpoint, &test, &out, &cfg, reverse.as_deref())?;
            print!("{}", s.table);
        }
        Command::Evaluate { pairs, responses } => {
            let r = cli::cmd_evaluate(&pairs, &responses)?;
            let name = responses.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            print!("{}", format_table(&[(name, r)]));
        }
        Command::Inspect { checkpoint } => print!("{}", cli::cmd_inspect(&checkpoint)?),
        Command::Chat {
            checkpoint,
            strategy,
            reverse,
            verbose,
        } => {
            if let Some(s) = strategy {
                cfg.set("strategy", &s)?;
            }
            let models = Models::load(&checkpoint, reverse.as_deref())?;
            cli::cmd_chat(&models, &cfg.strategy, &cfg, verbose, io::stdin().lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("s2sa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
