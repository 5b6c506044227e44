use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vbess_core::app::{cmd_generate, cmd_run, cmd_sweep, exit_code, ControllerName, Overrides, RunConfig};
use vbess_core::forecast::Forecaster;
use vbess_core::study::SchemeName;
use vbess_core::timeseries::Season;
use vbess_core::Result;

#[derive(Parser)]
#[command(name = "vbess", version, about = "Shared residential battery scheduling studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic half-hourly profiles CSV.
    Generate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        homes: usize,
        #[arg(long, default_value_t = 28)]
        days: usize,
        #[arg(long, default_value = "summer")]
        season: Season,
        #[arg(long, default_value = "profiles.csv")]
        out: PathBuf,
    },
    /// Run the scheme comparison study.
    Run(StudyArgs),
    /// Sweep the shared fraction of each battery under the hybrid scheme.
    Sweep {
        #[command(flatten)]
        study: StudyArgs,
        /// Comma-separated shared fractions; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// JSON config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeName>>,
    #[arg(long)]
    controller: Option<ControllerName>,
    #[arg(long)]
    forecaster: Option<Forecaster>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, env = "VBESS_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl StudyArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            schemes: self.schemes,
            controller: self.controller,
            forecaster: self.forecaster,
            trials: self.trials,
            jobs: self.jobs,
            out_dir: self.out_dir,
            seed: self.seed,
        })?;
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            seed,
            homes,
            days,
            season,
            out,
        } => {
            cmd_generate(seed, homes, days, season, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Run(study) => {
            let outputs = cmd_run(&study.resolve()?)?;
            println!(
                "wrote {} ({} rows) and {}",
                outputs.report_csv.display(),
                outputs.rows.len(),
                outputs.summary_json.display()
            );
        }
        Command::Sweep { study, fractions } => {
            let (path, rows) = cmd_sweep(&study.resolve()?, fractions.as_deref())?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
