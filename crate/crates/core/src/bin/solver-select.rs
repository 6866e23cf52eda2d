use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solver_select::harness::{self, compare, Experiment, ExperimentConfig, HarnessError, RunReport};
use solver_select::perfdata::{summarize, Dataset};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit code for unreadable or invalid inputs.
const EXIT_CONFIG: u8 = 2;
/// Exit code for failures while running an environment.
const EXIT_ENV: u8 = 3;

#[derive(Parser)]
#[command(version, about = "Online solver selection experiments")]
struct Cli {
    /// Seed for all randomness; overrides the experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summary table of a performance dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Compare run reports (report.json files).
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// Write aligned cumulative-cost curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// List the configurations of a space with their encodings.
    Enumerate {
        /// Shipped space name or JSON file.
        #[arg(long)]
        space: String,
        #[arg(long)]
        limit: Option<usize>,
        /// Draw this many uniform samples instead of listing in order.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Check a space definition and print its size and fingerprint.
    Validate {
        #[arg(long)]
        space: String,
    },
}

struct Failure(u8, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match e {
            HarnessError::Env(_) | HarnessError::Selector(_) => EXIT_ENV,
            _ => EXIT_CONFIG,
        };
        Failure(code, e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_CONFIG, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if output.is_some() {
                cfg.output = output;
            }
            let exp = Experiment::new(cfg)?;
            let outs = exp.run(None)?;
            let reports: Vec<RunReport> = outs.into_iter().map(|o| o.report).collect();
            let cmp = compare(&reports).map_err(config_err)?;
            print!("{}", cmp.to_text());
            for r in &reports {
                for e in &r.errors {
                    eprintln!("repeat {}: {e}", r.repeat);
                }
            }
            if let Some(dir) = &exp.config().output {
                println!("wrote {}", dir.display());
            }
            if reports.iter().any(|r| !r.errors.is_empty()) {
                return Err(Failure(EXIT_ENV, "environment errors during the run".into()));
            }
        }
        Cmd::Stats { dataset, csv } => {
            let ds = Dataset::load(&dataset).map_err(config_err)?;
            let s = summarize(&ds);
            print!("{}", if csv { s.to_csv() } else { s.to_text() });
        }
        Cmd::Compare { reports, curves } => {
            let mut rs = Vec::new();
            for p in &reports {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                rs.push(
                    RunReport::from_json(&text)
                        .map_err(|e| config_err(format!("{}: {e}", p.display())))?,
                );
            }
            let cmp = compare(&rs).map_err(config_err)?;
            print!("{}", cmp.to_text());
            if let Some(path) = curves {
                std::fs::write(&path, cmp.curves_csv())
                    .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            }
        }
        Cmd::Enumerate {
            space,
            limit,
            sample,
        } => {
            let space = harness::load_space(&space)?;
            println!("# {}", space.slot_labels().join(","));
            let configs = match sample {
                Some(n) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
                    (0..n).map(|_| space.sample_random(&mut rng)).collect()
                }
                None => space.enumerate(),
            };
            for c in configs.iter().take(limit.unwrap_or(usize::MAX)) {
                let enc = space.encode(c).map_err(config_err)?;
                let cells: Vec<String> = enc.as_slice().iter().map(|v| v.to_string()).collect();
                println!("{}\t{}", cells.join(","), c);
            }
        }
        Cmd::Validate { space } => {
            let s = harness::load_space(&space)?;
            println!("size {}", s.size());
            println!("encoding_length {}", s.encoding_length());
            println!("fingerprint {}", s.fingerprint());
        }
    }
    Ok(())
}
