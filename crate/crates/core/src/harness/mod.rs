//! Monte Carlo sweeps over `(protocol, n, α, s)` with CSV persistence.
//!
//! Every replication draws from its own ChaCha stream keyed by the cell's
//! parameters and the replication index, so results do not depend on the
//! execution order or on which other cells are in the grid.

pub mod config;
pub mod fit;
pub mod plot;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_ni::{self, select_j_ni, NiConfig};
use crate::channel_si::{run_si_protocol, select_j_si, SiConfig};
use crate::density::{self, DyadicDensity};
use crate::error::Result;
use crate::gof::{self, GofConfig};
use crate::rng::{cell_key, task_rng};
use crate::Protocol;

pub use config::{ChannelConfig, ExperimentConfig, GeneratorConfig, TestSettings};
pub use fit::{fit_log_log, fit_rate, fit_rate_log_corrected, Elbow, RateFit};
pub use plot::{emit_plot_script, render_plot_script};

/// How replications are scheduled. Both give identical rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// One replication of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub protocol: Protocol,
    pub n: usize,
    pub alpha: f64,
    pub s: f64,
    pub replication: usize,
    pub estimate: f64,
    pub true_d: f64,
    pub squared_error: f64,
}

impl ResultRow {
    pub fn new(protocol: Protocol, n: usize, alpha: f64, s: f64, replication: usize, estimate: f64, true_d: f64) -> Self {
        Self {
            protocol,
            n,
            alpha,
            s,
            replication,
            estimate,
            true_d,
            squared_error: (estimate - true_d).powi(2),
        }
    }
}

/// Resolution used by `protocol` for a sample of `n` individuals. The
/// interactive protocol spends `n / 2` on each stage.
pub fn protocol_levels(protocol: Protocol, n: usize, alpha: f64, s_eff: f64, a: f64) -> Result<u32> {
    match protocol {
        Protocol::Ni => select_j_ni(n, alpha, s_eff, a),
        Protocol::Si => select_j_si(n / 2, alpha, s_eff),
    }
}

/// One estimate of `D(f)` from `n` fresh draws of `density`. `upper` is
/// the sup-norm bound `M` that sets the clamp level.
#[allow(clippy::too_many_arguments)]
pub fn simulate_once<R: Rng + ?Sized>(
    protocol: Protocol,
    n: usize,
    alpha: f64,
    s_eff: f64,
    density: &DyadicDensity,
    upper: f64,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<f64> {
    let levels = protocol_levels(protocol, n, alpha, s_eff, channel.a)?;
    let ni = NiConfig::with_variant(alpha, channel.a, levels, channel.sigma)?;
    let sample = density::sample(density, n, rng);
    match protocol {
        Protocol::Ni => channel_ni::estimate_from_sample(&sample, &ni, None, rng),
        Protocol::Si => {
            let si = SiConfig::tuned(ni, channel.k, upper, s_eff)?
                .with_stage1(channel.stage1);
            run_si_protocol(&sample, &si, rng)
        }
    }
}

struct Cell {
    protocol: Protocol,
    n: usize,
    alpha: f64,
    s: f64,
    s_eff: f64,
    density: Arc<DyadicDensity>,
    key: u64,
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for &s in &cfg.generator.s {
        let density = Arc::new(cfg.generator.density(s)?);
        let s_eff = cfg.generator.effective_smoothness(s);
        for &protocol in &cfg.protocols {
            for &n in &cfg.n {
                for &alpha in &cfg.alpha {
                    out.push(Cell {
                        protocol,
                        n,
                        alpha,
                        s,
                        s_eff,
                        density: Arc::clone(&density),
                        key: cell_key(&[protocol as u64, n as u64, alpha.to_bits(), s.to_bits()]),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Runs every `(cell, replication)` pair. Rows are ordered by `s`,
/// protocol, `n`, `α`, replication, whatever the execution mode.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let cells = cells(cfg)?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let run = |&(c, r): &(usize, usize)| -> Result<ResultRow> {
        let cell = &cells[c];
        let mut rng = task_rng(cfg.seed, cell.key, r as u64);
        let est = simulate_once(
            cell.protocol,
            cell.n,
            cell.alpha,
            cell.s_eff,
            &cell.density,
            cfg.generator.upper,
            &cfg.channel,
            &mut rng,
        )?;
        Ok(ResultRow::new(
            cell.protocol,
            cell.n,
            cell.alpha,
            cell.s,
            r,
            est,
            cell.density.quad_functional(),
        ))
    };
    match exec {
        Execution::Serial => tasks.iter().map(run).collect(),
        Execution::Parallel => tasks.par_iter().map(run).collect(),
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "protocol",
            "n",
            "alpha",
            "s",
            "replication",
            "estimate",
            "true_d",
            "squared_error",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

pub fn write_rows_to(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_rows(rows, std::io::BufWriter::new(file))
}

pub fn read_rows_from(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(std::fs::File::open(path)?)
}

/// Mean squared error of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub protocol: Protocol,
    pub n: usize,
    pub alpha: f64,
    pub s: f64,
    pub replications: usize,
    pub mse: f64,
    /// Standard error of `mse`.
    pub se: f64,
}

/// Cell means of the squared errors, sorted by protocol, `s`, `α`, `n`.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(Protocol, u64, u64, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.protocol, r.s.to_bits(), r.alpha.to_bits(), r.n))
            .or_default()
            .push(r.squared_error);
    }
    groups
        .into_iter()
        .map(|((protocol, s, alpha, n), errs)| {
            let m = errs.len() as f64;
            let mse = errs.iter().sum::<f64>() / m;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            CellSummary {
                protocol,
                n,
                alpha: f64::from_bits(alpha),
                s: f64::from_bits(s),
                replications: errs.len(),
                mse,
                se: (var / m).sqrt(),
            }
        })
        .collect()
}

/// Statistics of the test in `cfg` on `replications` samples of size
/// `cfg.n` from `density`.
pub fn gof_statistics(
    cfg: &GofConfig,
    density: &DyadicDensity,
    replications: usize,
    seed: u64,
    stream: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let sampler = density.sampler();
    let key = cell_key(&[stream, cfg.protocol as u64, cfg.n as u64, cfg.alpha.to_bits()]);
    let run = |r: usize| -> Result<f64> {
        let mut rng = task_rng(seed, key, r as u64);
        let sample: Vec<f64> = (0..cfg.n).map(|_| sampler.draw(&mut rng)).collect();
        gof::gof_statistic(&sample, cfg, &mut rng)
    };
    match exec {
        Execution::Serial => (0..replications).map(run).collect(),
        Execution::Parallel => (0..replications).into_par_iter().map(run).collect(),
    }
}

/// Fraction of statistics above `threshold`.
pub fn rejection_rate(statistics: &[f64], threshold: f64) -> f64 {
    statistics.iter().filter(|&&s| s > threshold).count() as f64 / statistics.len().max(1) as f64
}

/// Outcome of one `gof` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub protocol: Protocol,
    pub n: usize,
    pub alpha: f64,
    pub s: f64,
    pub separation: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub decision: u8,
}

/// Stream tags separating calibration draws from test draws.
const CALIBRATION_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Test of the uniform null against the configured generator, one per
/// protocol, at the first grid values of `n`, `α` and `s`. Without a
/// configured `C` the constant is first calibrated under the null.
pub fn run_gof(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<GofRow>> {
    cfg.validate()?;
    let (n, alpha, s) = (cfg.n[0], cfg.alpha[0], cfg.generator.s[0]);
    let alt = cfg.generator.density(s)?;
    let null = DyadicDensity::uniform(0);
    let s_eff = cfg.generator.effective_smoothness(s);
    let mut rows = Vec::new();
    for &protocol in &cfg.protocols {
        let mut g = GofConfig {
            protocol,
            null: null.clone(),
            c: 1.0,
            gamma: cfg.test.gamma,
            s_eff,
            a: cfg.channel.a,
            alpha,
            n,
            k: cfg.channel.k,
            upper: cfg.generator.upper,
            stage1: cfg.channel.stage1,
        };
        g.c = match cfg.test.c {
            Some(c) => c,
            None => {
                let stats = gof_statistics(&g, &null, cfg.test.calibration, cfg.seed, CALIBRATION_STREAM, exec)?;
                gof::calibrate_constant(&stats, &g)?
            }
        };
        let key = cell_key(&[TEST_STREAM, protocol as u64, n as u64, alpha.to_bits(), s.to_bits()]);
        let mut rng = task_rng(cfg.seed, key, 0);
        let sample = density::sample(&alt, n, &mut rng);
        let out = gof::gof_test(&sample, &g, &mut rng)?;
        rows.push(GofRow {
            protocol,
            n,
            alpha,
            s,
            separation: alt.l2_distance(&null),
            statistic: out.statistic,
            threshold: out.threshold,
            decision: out.decision(),
        });
    }
    Ok(rows)
}

/// Appends rows to a CSV file, writing the header only for a new or empty file.
pub fn append_gof_rows(rows: &[GofRow], path: &Path) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(vec![Protocol::Ni, Protocol::Si], vec![64, 128], vec![1.0], 2, 5);
        c.generator.levels = vec![];
        c
    }

    #[test]
    fn uniform_cell_rows() {
        let mut c = small();
        c.protocols = vec![Protocol::Ni];
        c.n = vec![64];
        let rows = run_experiment(&c, Execution::Serial).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.true_d == 1.0));
        assert!(rows.iter().all(|r| r.squared_error == (r.estimate - 1.0).powi(2)));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let c = small();
        let a = run_experiment(&c, Execution::Serial).unwrap();
        let b = run_experiment(&c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cells_are_independent_of_grid_layout() {
        let c = small();
        let full = run_experiment(&c, Execution::Serial).unwrap();
        let mut only = c.clone();
        only.protocols = vec![Protocol::Si];
        only.n = vec![128];
        let sub = run_experiment(&only, Execution::Serial).unwrap();
        let matching: Vec<_> = full
            .into_iter()
            .filter(|r| r.protocol == Protocol::Si && r.n == 128)
            .collect();
        assert_eq!(matching, sub);
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_experiment(&small(), Execution::Serial).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("protocol,n,alpha,s,replication,estimate,true_d,squared_error\n"));
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
        let mut empty = Vec::new();
        write_rows(&[], &mut empty).unwrap();
        assert_eq!(empty.iter().filter(|&&b| b == b'\n').count(), 1);
    }

    #[test]
    fn summary_means() {
        let rows = vec![
            ResultRow::new(Protocol::Ni, 8, 1.0, 0.5, 0, 2.0, 1.0),
            ResultRow::new(Protocol::Ni, 8, 1.0, 0.5, 1, 4.0, 1.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mse, 5.0);
    }
}
