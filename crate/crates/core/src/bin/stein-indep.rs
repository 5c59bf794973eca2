use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stein_indep::experiments::{cmd_gamma2d, cmd_lognormal, cmd_measure, cmd_stein_verify, cmd_uniform, ExperimentConfig, Overrides};
use stein_indep::mc::{with_workers, worker_count};
use stein_indep::measure::{by_name, load_density_config};
use stein_indep::report::Report;
use stein_indep::selftest::{self, Fault};
use stein_indep::Error;

/// Stein factors, Malliavin bound terms and asymptotic-independence experiments.
///
/// Worker threads come from STEIN_WORKERS (default: available parallelism).
/// Exit status is 0 on success, 1 when a check fails and 2 on a configuration error.
#[derive(Parser)]
#[command(name = "stein-indep", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Shared {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Flat TOML experiment config; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reduced schedules and sample sizes.
    #[arg(long, global = true)]
    quick: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate pdf, cdf, a(x) and S(x) on a quantile grid.
    Measure {
        /// Built-in name: gaussian, centered_gamma, uniform01, beta:A,B, lognormal01.
        name: Option<String>,
        /// Density file instead of a built-in name.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
    /// Stein solution checks.
    Stein {
        #[command(subcommand)]
        cmd: SteinCmd,
    },
    /// Gamma pair (U_N, V_N) built from overlapping sums.
    Gamma2d,
    /// Pair of exp-quadratic functionals with correlation rho.
    Uniform,
    /// Lognormal limit built from a normalized chi-square.
    Lognormal,
    /// Run the invariant suite.
    Selftest {
        /// Deliberate defect, e.g. skip-symmetrization.
        #[arg(long)]
        inject_fault: Option<String>,
    },
}

#[derive(Subcommand)]
enum SteinCmd {
    /// Check the sup-norm bounds for the standard test functions.
    Verify {
        #[arg(long)]
        measure: String,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
}

fn summarize(r: &Report) -> bool {
    for c in &r.checks {
        println!("{:<6} {}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &r.files {
        println!("wrote {f}");
    }
    r.passed()
}

fn run(cli: Cli) -> Result<bool, Error> {
    let s = &cli.shared;
    let overrides = Overrides {
        seed: s.seed,
        samples: s.samples,
        quick: s.quick,
    };
    match cli.cmd {
        Cmd::Measure { name, density, grid } => {
            let m = match (name, density) {
                (Some(n), None) => by_name(&n)?,
                (None, Some(p)) => load_density_config(&p)?,
                _ => return Err(Error::Config("give exactly one of a measure name or --density".into())),
            };
            Ok(summarize(&cmd_measure(&m, grid, &s.out)?))
        }
        Cmd::Stein {
            cmd: SteinCmd::Verify { measure, grid },
        } => {
            let m = by_name(&measure)?;
            // `--out` names the report file here; a directory gets `stein_verify.json`.
            let path = if s.out.extension().is_some_and(|e| e == "json") {
                s.out.clone()
            } else {
                s.out.join("stein_verify.json")
            };
            let r = cmd_stein_verify(&m, grid, &path)?;
            for b in &r.bounds {
                println!("{:<6} {}  {}", if b.pass { "PASS" } else { "FAIL" }, b.name, b.test_function);
            }
            println!("sup S = {:e} (refined {:e}), wrote {}", r.sup_s, r.sup_s_refined, path.display());
            Ok(r.pass)
        }
        Cmd::Gamma2d => {
            let cfg = ExperimentConfig::resolve(s.config.as_deref(), &overrides)?;
            Ok(summarize(&cmd_gamma2d(&cfg, &s.out)?))
        }
        Cmd::Uniform => {
            let cfg = ExperimentConfig::resolve(s.config.as_deref(), &overrides)?;
            Ok(summarize(&cmd_uniform(&cfg, &s.out)?))
        }
        Cmd::Lognormal => {
            let cfg = ExperimentConfig::resolve(s.config.as_deref(), &overrides)?;
            Ok(summarize(&cmd_lognormal(&cfg, &s.out)?))
        }
        Cmd::Selftest { inject_fault } => {
            let fault = inject_fault.map(|f| f.parse::<Fault>()).transpose()?;
            let cfg = ExperimentConfig::resolve(s.config.as_deref(), &overrides)?;
            let r = selftest::run_to(cfg.seed, s.quick, fault, &s.out)?;
            print!("{}", r.table());
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_workers(worker_count(), || run(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_) | Error::Expression { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
