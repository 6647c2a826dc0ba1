//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors (reported
//! before any compute), 2 for numerical failures, including runs where more
//! than 1% of the paths were flagged as non-finite.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config;
use crate::error::{Error, Result};
use crate::experiments::{
    self, case_dir, malliavin_tables, poisson_table, render_malliavin, render_poisson, render_variance_reports,
    run_spec, snapshot_tables, variance_reports, write_all, write_file, Overrides, RunSpec, FLAGGED_LIMIT,
};

#[derive(Debug, Parser)]
#[command(name = "sgdct", version, about = "Continuous-time SGD experiments", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory
    #[arg(long, global = true, default_value = "sgdct-out")]
    out: PathBuf,

    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (falls back to SGDCT_THREADS)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Number of simulated paths
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Variance of the Gaussian target, replacing the closed-form value
    #[arg(long = "sigma-bar", global = true)]
    sigma_bar: Option<f64>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate ensembles and write snapshots.csv
    Simulate(ConfigArg),
    /// Closed-form constants and limiting variance
    Variance(ConfigArg),
    /// W1 and variance series per learning rate
    Rates(ConfigArg),
    /// Tabulate a Poisson-equation solution on the density grid
    Poisson(ConfigArg),
    /// Malliavin derivative moments and their scaling in t
    Malliavin(ConfigArg),
    /// Run a built-in example
    Preset {
        /// example1, example2_ou or example3_cubic
        name: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
    /// Full bundle from a configuration file
    Custom(ConfigArg),
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { n_paths: self.paths, seed: self.seed, ..Default::default() }
    }

    fn load(&self, path: &Path) -> Result<RunSpec> {
        let mut spec = config::load(path)?;
        spec.apply(&self.overrides())?;
        self.apply_sigma_bar(&mut spec)?;
        Ok(spec)
    }

    fn apply_sigma_bar(&self, spec: &mut RunSpec) -> Result<()> {
        if let Some(s) = self.sigma_bar {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("--sigma-bar: must be positive, got {s}")));
            }
            spec.sigma_bar_override = Some(s);
        }
        Ok(())
    }
}

/// Outcome of a subcommand that completed its computation.
struct Done {
    written: Vec<PathBuf>,
    flagged_fraction: f64,
    stdout: String,
}

fn execute(cli: &Cli) -> Result<Done> {
    let out = &cli.out;
    let workers = cli.workers;
    let mut done = Done { written: Vec::new(), flagged_fraction: 0.0, stdout: String::new() };
    match &cli.command {
        Command::Simulate(a) => {
            let spec = cli.load(&a.config)?;
            let (files, worst) = snapshot_tables(&spec, workers)?;
            done.written = write_all(out, &files)?;
            done.flagged_fraction = worst;
        }
        Command::Variance(a) => {
            let spec = cli.load(&a.config)?;
            let text = render_variance_reports(&spec, &variance_reports(&spec)?);
            done.written.push(write_file(out, Path::new("variance.csv"), &text)?);
            done.stdout = text;
        }
        Command::Rates(a) => {
            let bundle = run_spec(&cli.load(&a.config)?, workers)?;
            let files: Vec<_> = bundle.files().into_iter().filter(|(p, _)| p != Path::new("summary.csv")).collect();
            done.written = write_all(out, &files)?;
            done.flagged_fraction = bundle.max_flagged_fraction();
            done.stdout = bundle.render_summary();
        }
        Command::Poisson(a) => {
            let spec = cli.load(&a.config)?;
            let text = render_poisson(&spec, &poisson_table(&spec)?);
            done.written.push(write_file(out, Path::new("poisson.csv"), &text)?);
        }
        Command::Malliavin(a) => {
            let spec = cli.load(&a.config)?;
            for r in malliavin_tables(&spec, workers)? {
                let rel = PathBuf::from(case_dir(r.c_alpha)).join("malliavin.csv");
                done.written.push(write_file(out, &rel, &render_malliavin(&spec, &r))?);
            }
        }
        Command::Preset { name, dt, t_end } => {
            let overrides = Overrides { dt: *dt, t_end: *t_end, ..cli.overrides() };
            let mut spec = experiments::preset(name)?.spec(&overrides)?;
            cli.apply_sigma_bar(&mut spec)?;
            let bundle = run_spec(&spec, workers)?;
            done.written = write_all(out, &bundle.files())?;
            done.flagged_fraction = bundle.max_flagged_fraction();
        }
        Command::Custom(a) => {
            let bundle = run_spec(&cli.load(&a.config)?, workers)?;
            done.written = write_all(out, &bundle.files())?;
            done.flagged_fraction = bundle.max_flagged_fraction();
        }
    }
    Ok(done)
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match execute(&cli) {
        Ok(done) => {
            let _ = write!(stdout, "{}", done.stdout);
            for p in &done.written {
                let _ = writeln!(stderr, "wrote {}", p.display());
            }
            if done.flagged_fraction > FLAGGED_LIMIT {
                let _ = writeln!(
                    stderr,
                    "error: {:.2}% of paths were flagged as non-finite (limit {}%)",
                    100.0 * done.flagged_fraction,
                    100.0 * FLAGGED_LIMIT
                );
                return 2;
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}
