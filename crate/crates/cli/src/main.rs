//! `hyperetc`: run event-triggered boundary control scenarios from a TOML
//! configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperbolic_etc::experiment::{
    compare_modes, comparison_csv, constants_report, prepare, run_scenario, Mode, RunConfig,
};
use hyperbolic_etc::output::{ensure_dir, write_atomic};
use hyperbolic_etc::Error;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "hyperetc",
    version,
    about = "Event-triggered boundary control of 2x2 hyperbolic PDEs"
)]
struct Cli {
    /// Print the default canal configuration as TOML and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and print its summary as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the mode in the file.
        #[arg(long)]
        mode: Option<Mode>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Print design and self-triggered constants with the assumption checks.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several modes on the same configuration and tabulate them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "cetc,petc,stc")]
        modes: Vec<Mode>,
        /// Each mode writes into `<out>/<mode>`; the table goes to
        /// `<out>/comparison.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(cli: Cli) -> Result<(), Error> {
    if cli.print_defaults {
        let text = toml::to_string(&RunConfig::default())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::InvalidConfig(
            "no subcommand given (try --help)".into(),
        ));
    };
    match command {
        Command::Simulate {
            config,
            mode,
            out,
            stride,
        } => {
            let mut cfg = load(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if out.is_some() {
                cfg.output.dir = out;
            }
            if let Some(s) = stride {
                cfg.output.stride = s;
            }
            let outcome = run_scenario(&cfg)?;
            println!("{}", json(&outcome.summary));
        }
        Command::Constants { config } => {
            let cfg = load(&config)?;
            let prep = prepare(&cfg.with_mode(Mode::OpenLoop))?;
            println!("{}", json(&constants_report(&prep, &cfg)?));
        }
        Command::Compare { config, modes, out } => {
            let cfg = load(&config)?;
            if modes.is_empty() {
                return Err(Error::InvalidConfig("no modes to compare".into()));
            }
            let out = out.or_else(|| cfg.output.dir.clone());
            let configs: Vec<RunConfig> = modes
                .iter()
                .map(|&m| {
                    let mut c = cfg.with_mode(m);
                    c.output.dir = out.as_ref().map(|d| d.join(m.as_str()));
                    c
                })
                .collect();
            let (rows, _) = compare_modes(&configs)?;
            let table = comparison_csv(&rows);
            if let Some(dir) = &out {
                ensure_dir(dir)?;
                write_atomic(&dir.join("comparison.csv"), table.as_bytes())?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = ErrorLine {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&line).expect("serializable"));
            ExitCode::FAILURE
        }
    }
}
