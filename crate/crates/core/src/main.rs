use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fclsim::cli::{self, RunArgs, TickFormat};

#[derive(Parser)]
#[command(name = "fclsim", version, about = "Limit order book market simulator with FCN/FCL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run N simulation trials with consecutive seeds.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Maximum number of trials running at once.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overwrite an existing run in the output directory.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value_t = TickFormat::Csv)]
        format: TickFormat,
        /// Override a config key, e.g. `--set n_fcl=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compute stylized facts and ATH regressions for a finished run.
    Analyze {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,15,30")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        steps_per_bar: u64,
    },
    /// Run the four single-decision scenarios for each configured provider.
    SingleTurn {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            jobs,
            force,
            format,
            overrides,
        } => {
            let args = RunArgs {
                config,
                trials,
                seed,
                out,
                jobs,
                force,
                format,
                overrides,
            };
            cli::cmd_run(&args).map(|m| {
                println!(
                    "wrote {} trial(s) (seeds {:?}) to {} in {:.1}s",
                    m.trials.len(),
                    m.seeds,
                    m.out_dir,
                    m.wall_seconds
                );
            })
        }
        Command::Analyze {
            dir,
            horizons,
            steps_per_bar,
        } => cli::cmd_analyze(&dir, &horizons, steps_per_bar).map(|r| {
            println!("{:<16} {:>12} {:>12} {:>4}", "metric", "mean", "sd", "n");
            for row in &r.summary {
                let sd = row.stats.sd.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
                println!("{:<16} {:>12.4} {:>12} {:>4}", row.metric, row.stats.mean, sd, row.stats.n);
            }
            for t in &r.trials {
                for (h, e) in &t.report.regression_errors {
                    eprintln!("trial {}: beta_h_{h} unavailable: {e}", t.trial);
                }
                if let Some(e) = &t.report.stylized_facts_error {
                    eprintln!("trial {}: stylized facts unavailable: {e}", t.trial);
                }
            }
        }),
        Command::SingleTurn { config, overrides } => cli::cmd_single_turn(&config, &overrides).map(|o| {
            if let Some(w) = &o.warning {
                eprintln!("{w}");
            }
            print!("{}", o.table);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
