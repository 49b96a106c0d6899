use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dmimo::fixtures::{bless, load_fixtures, verify_all};
use dmimo::scenario::{
    monte_carlo_csv, run_peb_map, run_scenario_monte_carlo, run_tracking_episode, select_at_start, selection_csv,
    write_text, Scenario, SelectionMethod,
};
use dmimo::Error;

#[derive(Parser)]
#[command(name = "dmimo", version, about = "Distributed MIMO position error bounds, tracking and AP scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Greedy,
    Brute,
}

#[derive(Subcommand)]
enum Command {
    /// PEB of the first UE over a horizontal grid of the surveillance box.
    PebMap {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        /// Height of the grid plane (default: the first UE's height).
        #[arg(long)]
        z: Option<f64>,
    },
    /// Monte Carlo ML positioning RMSE next to the PEB.
    MonteCarlo {
        config: PathBuf,
        /// Comma-separated SNRs in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full tracking episode; writes <prefix>_track.csv, <prefix>_activation.csv
    /// and <prefix>_summary.txt.
    Track {
        config: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// AP subset for the UEs at their starting positions.
    SelectAps {
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "greedy")]
        method: Method,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parses and builds a config without running anything.
    Validate { config: PathBuf },
    /// Regenerates every golden fixture in a directory and compares.
    VerifyFixtures {
        #[arg(default_value = "crates/core/fixtures")]
        dir: PathBuf,
        /// Rewrite goldens and digests instead of comparing.
        #[arg(long)]
        bless: bool,
    },
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::PebMap { config, out, nx, ny, z } => {
            let s = Scenario::from_path(&config)?;
            let pm = &s.config.peb_map;
            let map = run_peb_map(&s, nx.unwrap_or(pm.nx), ny.unwrap_or(pm.ny), z.or(pm.z));
            write_text(&out, &map.to_csv())?;
        }
        Command::MonteCarlo { config, snr, trials, out } => {
            let s = Scenario::from_path(&config)?;
            let snr = snr.unwrap_or_else(|| s.config.estimator.snr_db.clone());
            let reports = run_scenario_monte_carlo(&s, &snr, trials.unwrap_or(s.config.estimator.trials))?;
            write_text(&out, &monte_carlo_csv(&reports))?;
        }
        Command::Track { config, out_prefix } => {
            let s = Scenario::from_path(&config)?;
            let log = run_tracking_episode(&s)?;
            write_text(&with_suffix(&out_prefix, "_track.csv"), &log.track_csv())?;
            write_text(&with_suffix(&out_prefix, "_activation.csv"), &log.activation_csv())?;
            let summary = log.summary();
            write_text(&with_suffix(&out_prefix, "_summary.txt"), &summary)?;
            print!("{summary}");
        }
        Command::SelectAps { config, k, method, out } => {
            let s = Scenario::from_path(&config)?;
            let method = match method {
                Method::Greedy => SelectionMethod::Greedy,
                Method::Brute => SelectionMethod::Brute,
            };
            let (selection, objective) = select_at_start(&s, k, method)?;
            let csv = selection_csv(method, &selection, objective);
            match out {
                Some(p) => write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Validate { config } => {
            let s = Scenario::from_path(&config)?;
            println!(
                "ok: {} APs, {} UEs, {} steps, seed {}",
                s.aps.len(),
                s.ues.len(),
                s.config.tracking.steps,
                s.config.seed
            );
        }
        Command::VerifyFixtures { dir, bless: rewrite } => {
            let mut fixtures = load_fixtures(&dir)?;
            if rewrite {
                for f in &mut fixtures {
                    let g = bless(f)?;
                    println!("blessed {}: {:?}", f.fixture.name, g.statistics);
                }
                return Ok(true);
            }
            let reports = verify_all(&fixtures);
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} fixtures, {failed} failed", reports.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                e if e.is_numerical() => 3,
                Error::Config { .. }
                | Error::ConfigParse { .. }
                | Error::Io { .. }
                | Error::PatternFormat { .. }
                | Error::InvalidInput(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
