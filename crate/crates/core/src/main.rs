use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use privquad::audit::{self, AuditReport};
use privquad::channel_ni::{NiConfig, SigmaVariant};
use privquad::harness::{self, ExperimentConfig, Execution};
use privquad::rng::seeded;
use privquad::{Error, Protocol};

#[derive(Parser)]
#[command(name = "privquad", version, about = "Locally private estimation of the integral of f squared")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Ni,
    Rr,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Normalized,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write one CSV row per replication.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run replications on a single thread.
        #[arg(long)]
        serial: bool,
    },
    /// Fit the log-log MSE slope for one protocol.
    Ratefit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        protocol: Protocol,
        /// Privacy level to fit; required when the CSV holds several.
        #[arg(long)]
        alpha: Option<f64>,
        /// Smoothness to fit; required when the CSV holds several.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Certify a channel's privacy level.
    Audit {
        #[arg(long)]
        channel: ChannelArg,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Resolution of the non-interactive channel.
        #[arg(long, default_value_t = 8)]
        levels: u32,
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, value_enum, default_value_t = SigmaArg::Normalized)]
        sigma: SigmaArg,
        /// Sampled triples for the non-interactive audit.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Clamp level of the randomized response.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Grid size of the randomized-response audit.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the CSV row instead of the text report.
        #[arg(long)]
        csv: bool,
    },
    /// Goodness-of-fit test of the uniform null against the configured generator.
    Gof {
        #[arg(long)]
        config: PathBuf,
        /// CSV to append to; defaults to `gof_output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a matplotlib script plotting MSE against n alpha^2.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out, serial } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::Config {
                    line: 0,
                    message: "no output path: pass --out or set `output`".into(),
                })?;
            let exec = if serial { Execution::Serial } else { Execution::Parallel };
            let rows = harness::run_experiment(&cfg, exec)?;
            harness::write_rows_to(&rows, &out)?;
            for c in harness::summarize(&rows) {
                println!(
                    "{:<3} n={:<8} alpha={:<5} s={:<5} mse={:.6e} (se {:.2e})",
                    c.protocol, c.n, c.alpha, c.s, c.mse, c.se
                );
            }
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Ratefit { input, protocol, alpha, s } => {
            let rows = harness::read_rows_from(&input)?;
            let alpha = match alpha {
                Some(a) => a,
                None => {
                    let mut alphas: Vec<f64> = rows.iter().filter(|r| r.protocol == protocol).map(|r| r.alpha).collect();
                    alphas.sort_by(f64::total_cmp);
                    alphas.dedup();
                    match alphas.as_slice() {
                        [a] => *a,
                        [] => return Err(Error::DegenerateFit(format!("no {protocol} rows"))),
                        _ => return Err(Error::DegenerateFit("several alpha values; pass --alpha".into())),
                    }
                }
            };
            let fit = harness::fit_rate(&rows, protocol, alpha, s)?;
            println!(
                "{protocol} alpha={alpha}: slope {:.4} (se {:.4}), intercept {:.4}, {} points",
                fit.slope, fit.slope_se, fit.intercept, fit.points
            );
            match fit.elbow {
                Some(e) => println!(
                    "elbow at n alpha^2 = {}: slopes {:.4} / {:.4} (F = {:.2}, p = {:.2e})",
                    e.at, e.left_slope, e.right_slope, e.f_statistic, e.p_value
                ),
                None => println!("no elbow"),
            }
        }
        Command::Audit {
            channel,
            alpha,
            levels,
            a,
            sigma,
            trials,
            tau,
            grid,
            seed,
            csv,
        } => {
            let report: AuditReport = match channel {
                ChannelArg::Ni => {
                    let variant = match sigma {
                        SigmaArg::Normalized => SigmaVariant::Normalized,
                        SigmaArg::Paper => SigmaVariant::Paper,
                    };
                    let cfg = NiConfig::with_variant(alpha, a, levels, variant)?;
                    audit::audit_ni(&cfg, trials, &mut seeded(seed))?
                }
                ChannelArg::Rr => audit::audit_rr(tau, alpha, grid)?,
            };
            if csv {
                println!("{}", AuditReport::CSV_HEADER);
                println!("{}", report.csv_row());
            } else {
                println!("{report}");
            }
            if !report.pass {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    reason: "audit failed".into(),
                });
            }
        }
        Command::Gof { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = harness::run_gof(&cfg, Execution::Parallel)?;
            for r in &rows {
                println!(
                    "{} n={} alpha={} s={} separation={:.6} statistic={:.6e} threshold={:.6e} decision={}",
                    r.protocol, r.n, r.alpha, r.s, r.separation, r.statistic, r.threshold, r.decision
                );
            }
            if let Some(path) = out.or_else(|| cfg.test.output.clone()) {
                harness::append_gof_rows(&rows, &path)?;
            }
        }
        Command::Plot { input, out } => {
            let rows = harness::read_rows_from(&input)?;
            harness::emit_plot_script(&rows, &input.display().to_string(), &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
