use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use xfolio_cli::config::SEED_ENV;
use xfolio_cli::{cmd_explain, cmd_ingest, cmd_report, cmd_trade, cmd_train, CliError, ExplainFlags, OutputLock, RunConfig};

#[derive(Parser)]
#[command(name = "xfolio", version, about = "Portfolio RL agent with post-hoc explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value by dotted path, e.g. `ppo.gamma=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse CSVs and write the panel cache and feature table.
    Ingest(Common),
    /// Train the policy with PPO on the training period.
    Train(Common),
    /// Run the trained policy over the trading period.
    Trade {
        #[command(flatten)]
        common: Common,
        /// Hold cash on every step (accounting check).
        #[arg(long)]
        all_cash: bool,
    },
    /// Explain the logged decisions.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Comma-separated decision dates to explain.
        #[arg(long, value_delimiter = ',')]
        instances: Option<Vec<NaiveDate>>,
        /// Explain only this output (0 = cash, k = k-th ticker).
        #[arg(long)]
        output: Option<usize>,
        /// Restrict force plots to one feature.
        #[arg(long, requires = "force_plot")]
        feature: Option<String>,
        /// Print force-plot data for each explained instance.
        #[arg(long)]
        force_plot: bool,
    },
    /// Render SVG charts from the explanation bundle.
    Report(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Ingest(c) | Command::Train(c) | Command::Report(c) => c,
        Command::Trade { common, .. } | Command::Explain { common, .. } => common,
    };
    let seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::load(&common.config, &common.set, seed.as_deref())?;
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Ingest(_) => cmd_ingest(&cfg, &mut out),
        Command::Train(_) => cmd_train(&cfg, &mut out),
        Command::Trade { all_cash, .. } => cmd_trade(&cfg, all_cash, &mut out),
        Command::Explain {
            instances,
            output,
            feature,
            force_plot,
            ..
        } => {
            let flags = ExplainFlags {
                instances,
                output,
                feature,
                force_plot,
            };
            cmd_explain(&cfg, &flags, &mut out).map(|_| ())
        }
        Command::Report(_) => cmd_report(&cfg, &mut out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xfolio: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
