//! `hypermix <suite> [--config file] [overrides]`
//!
//! Exit status: 0 on success, 2 when the configuration is invalid, 3 when a
//! resource limit or I/O error stops the run.

mod config;
mod output;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::Config;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Resource(String),
}

impl From<hypermix::Error> for CliError {
    fn from(e: hypermix::Error) -> Self {
        match e {
            hypermix::Error::Resource(_) => CliError::Resource(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hypermix", version, about = "Experiments on the alternating-shear map of the torus")]
struct Cli {
    /// One of: hyperbolicity, complexity, overlap, mixscale, correlation,
    /// jacobian, pulsed, continuous, compare, doeblin.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(suites::SUITES))]
    suite: String,
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<u32>,
    /// Comma-separated viscosities.
    #[arg(long)]
    nu: Option<String>,
    /// Grid side `M`, a power of two.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(&cli.suite, path)?,
        None => Config::new(&cli.suite),
    };
    if let Some(a) = cli.alpha {
        cfg.set("alpha", &a.to_string())?;
    }
    if let Some(nu) = &cli.nu {
        cfg.set("nu", nu)?;
    }
    if let Some(m) = cli.grid {
        cfg.set("grid", &m.to_string())?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", &o.to_string_lossy())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    if let Some(t) = cfg.raw("threads") {
        let t: usize = t.parse().map_err(|_| CliError::Validation(format!("cannot parse threads = '{t}'")))?;
        // read by the thread pool on first use
        std::env::set_var("RAYON_NUM_THREADS", t.max(1).to_string());
    }
    let mut out = output::Output::create(&cfg)?;
    let summary = suites::run(&cfg, &mut out)?;
    println!("{} {} {}", cfg.suite, out.dir.display(), summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error kind=validation suite={} message={msg:?}", cli.suite);
            ExitCode::from(2)
        }
        Err(CliError::Resource(msg)) => {
            eprintln!("error kind=resource suite={} message={msg:?}", cli.suite);
            ExitCode::from(3)
        }
    }
}
