use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phstring::audit::{audit, DEFAULT_SEED};
use phstring::config::{FrameworkChoice, SimConfig, PRESETS};
use phstring::integrate::Integrator;
use phstring::io::{write_atomic, write_run, Summary};
use phstring::{Error, Result};

/// Simulate and audit the observer-based energy-Casimir control of an
/// in-domain actuated string.
#[derive(Debug, Parser)]
#[command(name = "phstring", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the closed loop and write trajectory, snapshots and manifest.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write plot.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Run the invariant audit; exits with 4 if any check fails.
    Check {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Seed for the random field pairs.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run one simulation per parameter value, concurrently.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, value_enum)]
    framework: Option<FrameworkArg>,
    /// Number of grid cells.
    #[arg(long)]
    n: Option<usize>,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, value_enum)]
    integrator: Option<IntegratorArg>,
    /// Snapshot times, e.g. `0,2.5,10`.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FrameworkArg {
    Jb,
    Sd,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Rk4,
    Midpoint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepParam {
    C1,
    C2,
    K,
    N,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::C1 => "c1",
            SweepParam::C2 => "c2",
            SweepParam::K => "k",
            SweepParam::N => "n",
        }
    }

    fn apply(self, config: &mut SimConfig, v: f64) -> Result<()> {
        match self {
            SweepParam::C1 => config.controller.c1 = v,
            SweepParam::C2 => config.controller.c2 = v,
            SweepParam::K => config.observer.k = v,
            SweepParam::N => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::Validation(format!(
                        "n must be a whole number (got {v})"
                    )));
                }
                config.sim.n_cells = v as usize;
            }
        }
        config.validate()
    }
}

fn load(source: &Source, overrides: &Overrides) -> Result<SimConfig> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), _) => SimConfig::from_path(path)?,
        (None, Some(name)) => SimConfig::preset(name)?,
        (None, None) => {
            return Err(Error::Validation(format!(
                "give --config <path> or --preset ({})",
                PRESETS.join(", ")
            )))
        }
    };
    let o = overrides;
    if let Some(f) = o.framework {
        config.sim.framework = match f {
            FrameworkArg::Jb => FrameworkChoice::Jb,
            FrameworkArg::Sd => FrameworkChoice::Sd,
            FrameworkArg::Both => FrameworkChoice::Both,
        };
    }
    if let Some(n) = o.n {
        config.sim.n_cells = n;
    }
    if let Some(dt) = o.dt {
        config.set_dt(dt);
    }
    if let Some(t) = o.t_final {
        config.sim.t_final = t;
    }
    if let Some(i) = o.integrator {
        config.sim.integrator = match i {
            IntegratorArg::Rk4 => Integrator::Rk4,
            IntegratorArg::Midpoint => Integrator::ImplicitMidpoint,
        };
    }
    if let Some(s) = &o.snapshots {
        config.sim.snapshots = s.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(out: &Path, s: &Summary) {
    println!("wrote {}", out.display());
    println!("  final w(L)           {:.6}", s.final_w_l);
    println!("  final H_tilde        {:.6e}", s.final_htilde);
    println!("  max Casimir drift    {:.3e}", s.max_casimir_drift);
    println!("  max balance residual {:.3e}", s.max_balance_residual);
    if let Some(d) = s.max_equivalence_deviation {
        println!("  max |u_JB - u_SD|    {d:.3e}");
    }
}

fn sweep(config: &SimConfig, param: SweepParam, values: &[f64], out: &Path) -> Result<()> {
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            param.apply(&mut c, v)?;
            Ok((v, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<Summary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(v, c)| {
                let dir = out.join(format!("{}_{v}", param.name()));
                scope.spawn(move || write_run(c, &dir, false).map(|m| m.summary))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut table = format!(
        "{},final_w_L,final_Htilde,max_casimir_drift,max_balance_residual\n",
        param.name()
    );
    for ((v, _), r) in configs.iter().zip(results) {
        let s = r?;
        table.push_str(&format!(
            "{v},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.final_w_l, s.final_htilde, s.max_casimir_drift, s.max_balance_residual
        ));
    }
    write_atomic(&out.join("sweep.csv"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            source,
            overrides,
            out,
            svg,
        } => {
            let config = load(&source, &overrides)?;
            let manifest = write_run(&config, &out, svg)?;
            print_summary(&out, &manifest.summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            source,
            overrides,
            seed,
        } => {
            let config = load(&source, &overrides)?;
            let report = audit(&config, seed)?;
            println!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            })
        }
        Command::Sweep {
            source,
            overrides,
            param,
            values,
            out,
        } => {
            let config = load(&source, &overrides)?;
            sweep(&config, param, &values, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
