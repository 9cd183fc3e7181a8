use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use interpfn_cli::config::RunConfig;
use interpfn_cli::error::CliError;
use interpfn_cli::{ingest, pipeline, report, study, verify};

#[derive(Parser)]
#[command(name = "interpfn", version, about = "Interpretable two-layer function selection by cross-validated Mallows' Cp")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; keys it omits take the study's defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Study name, overriding the config file
    #[arg(long)]
    study: Option<String>,
    /// Master seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest the study dataset and write dataset.csv
    Gen(Common),
    /// Run the full pipeline and write report.csv, report.json and dataset.csv
    Run(Common),
    /// Run the pipeline and write heatmap grids of the selected model
    Heatmap(Common),
    /// Run the oracle suites
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print a study's complete default configuration
    Defaults {
        #[arg(long)]
        study: String,
    },
    /// List registered studies
    Studies,
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match (&c.config, &c.study) {
        (Some(path), s) => RunConfig::load(path, s.as_deref())?,
        (None, Some(s)) => RunConfig::defaults(s)?,
        (None, None) => return Err(CliError::Config("pass --config or --study".into())),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = load(&c)?;
            let data = pipeline::load_data(&cfg)?;
            std::fs::create_dir_all(&c.out)
                .map_err(|source| CliError::Output { path: c.out.display().to_string(), source })?;
            let path = c.out.join("dataset.csv");
            ingest::write_dataset_file(&data.dataset, &path)?;
            println!("wrote {} rows to {}", data.dataset.len(), path.display());
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            let run = pipeline::run_pipeline(&cfg)?;
            let files = pipeline::write_artifacts(&run, &c.out)?;
            let sel = run.report.selected();
            println!(
                "selected model {} {} (r = {}), lambda_opt = {}, {} candidates",
                sel.model_id,
                sel.form,
                sel.r.value,
                run.report.lambda_opt,
                run.report.records.len()
            );
            println!("wrote {} to {}", files.join(", "), c.out.display());
        }
        Command::Heatmap(c) => {
            let cfg = load(&c)?;
            let run = pipeline::run_pipeline(&cfg)?;
            let files = pipeline::write_heatmaps(&run, &c.out)?;
            report::write_json_file(&run, &c.out.join("report.json"))?;
            println!("wrote {} to {}", files.join(", "), c.out.display());
        }
        Command::Verify { seed } => {
            let results = verify::run_all(seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Err(CliError::Selection("oracle suite reported failures".into()));
            }
        }
        Command::Defaults { study } => print!("{}", RunConfig::defaults(&study)?.to_toml()),
        Command::Studies => {
            for s in study::registry().iter() {
                println!("{:<8} {}", s.name(), s.summary());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("interpfn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
