//! Privacy audits and the pointwise concentration check.
//!
//! Both channels have closed-form conditional densities, so the audits
//! evaluate likelihood ratios exactly instead of estimating set
//! probabilities.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::channel_ni::{self, laplace, NiConfig};
use crate::channel_si::response_scale;
use crate::density::DyadicDensity;
use crate::error::{invalid, Result};
use crate::haar::{self, exact_coeffs, project_eval};

/// Slack allowed on sampled log-ratios.
pub const EMPIRICAL_SLACK: f64 = 1e-12;

/// Outcome of a privacy audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub channel: String,
    pub alpha: f64,
    /// Certified bound on `sup log q(z|x)/q(z|x')`.
    pub analytic_bound: f64,
    /// Largest log-ratio observed.
    pub empirical_max: f64,
    /// Largest likelihood ratio observed, `exp(empirical_max)` up to rounding.
    pub worst_ratio: f64,
    pub samples: usize,
    pub pass: bool,
}

impl AuditReport {
    fn new(channel: String, alpha: f64, analytic_bound: f64, worst_ratio: f64, samples: usize) -> Self {
        let empirical_max = worst_ratio.ln();
        let pass = analytic_bound <= alpha && empirical_max <= alpha + EMPIRICAL_SLACK;
        Self {
            channel,
            alpha,
            analytic_bound,
            empirical_max,
            worst_ratio,
            samples,
            pass,
        }
    }

    pub const CSV_HEADER: &'static str = "channel,alpha,analytic_bound,empirical_max,samples,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.channel, self.alpha, self.analytic_bound, self.empirical_max, self.samples, self.pass
        )
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}{}", "channel", self.channel)?;
        writeln!(f, "{:<16}{}", "alpha", self.alpha)?;
        writeln!(f, "{:<16}{:.12}", "analytic bound", self.analytic_bound)?;
        writeln!(f, "{:<16}{:.12}", "empirical max", self.empirical_max)?;
        writeln!(f, "{:<16}{}", "samples", self.samples)?;
        write!(f, "{:<16}{}", "result", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Log-ratio `log q(z|x) - log q(z|x')` with `z ~ q(·|x)`, drawn only on
/// the coordinates where `ψ_{jk}(x) ≠ ψ_{jk}(x')`. All other coordinates
/// contribute exactly zero, so this has the same law as the full-record
/// ratio but costs `O(J)`.
pub fn sampled_log_ratio<R: Rng + ?Sized>(x: f64, x_prime: f64, cfg: &NiConfig, rng: &mut R) -> f64 {
    let mut total = 0.0;
    for level in 0..cfg.levels() {
        let b = cfg.noise_scale(level as i32);
        let kx = haar::active_position(level, x);
        let ky = haar::active_position(level, x_prime);
        let mut coord = |k: usize| {
            let px = haar::psi(level, k, x);
            let py = haar::psi(level, k, x_prime);
            if px == py {
                return;
            }
            if b == 0.0 {
                total = f64::INFINITY;
                return;
            }
            let z = px + b * laplace(rng);
            total += ((z - py).abs() - (z - px).abs()) / b;
        };
        match (kx, ky) {
            (Some(a), Some(c)) if a == c => coord(a),
            _ => {
                kx.into_iter().for_each(&mut coord);
                ky.into_iter().for_each(&mut coord);
            }
        }
    }
    total
}

/// Analytic bound plus the maximum exact log-ratio over `trials` random
/// triples `(x, x', z ~ q(·|x))`.
pub fn audit_ni<R: Rng + ?Sized>(cfg: &NiConfig, trials: usize, rng: &mut R) -> Result<AuditReport> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        worst = worst.max(sampled_log_ratio(x, y, cfg, rng));
    }
    let name = format!("ni(J={},a={},sigma={:?})", cfg.levels(), cfg.a(), cfg.variant()).to_lowercase();
    Ok(AuditReport::new(
        name,
        cfg.alpha(),
        channel_ni::ni_logratio_bound(cfg),
        worst.exp(),
        trials,
    ))
}

/// Probability of releasing `+c` for a clamped value `u`.
pub fn rr_head_probability(u: f64, tau: f64, alpha: f64) -> f64 {
    0.5 * (1.0 + u / response_scale(tau, alpha))
}

/// Exact ratio check of the two-point randomized response over a grid of
/// clamped values in `[-τ, τ]`.
pub fn audit_rr(tau: f64, alpha: f64, grid: usize) -> Result<AuditReport> {
    if grid < 2 {
        return Err(invalid("grid", "must be at least 2"));
    }
    if !(tau > 0.0) || !(alpha > 0.0) {
        return Err(invalid("tau", "tau and alpha must be positive"));
    }
    let probs: Vec<f64> = (0..grid)
        .map(|i| {
            let u = -tau + 2.0 * tau * i as f64 / (grid - 1) as f64;
            rr_head_probability(u, tau, alpha)
        })
        .collect();
    let mut worst: f64 = 1.0;
    for &p in &probs {
        for &q in &probs {
            worst = worst.max(p / q).max((1.0 - p) / (1.0 - q));
        }
    }
    // The ratio is monotone in u - u', so the sup sits at u = τ, u' = -τ:
    // (1 + t)/(1 - t) with t = τ/c = tanh(α/2), which is e^α.
    let analytic = alpha;
    Ok(AuditReport::new(
        format!("rr(tau={tau})"),
        alpha,
        analytic,
        worst,
        grid * grid,
    ))
}

/// One row of the concentration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub u: f64,
    /// Fraction of replications with `|f̂(x) - E f̂(x)|` above the threshold.
    pub empirical: f64,
    /// `4 e^{-u/2}`.
    pub bound: f64,
    pub threshold: f64,
}

/// Point at which the projection estimator is examined.
pub const CONCENTRATION_POINT: f64 = 0.5;

/// Constants `(c₁, c₂)` of the deviation threshold for a density bounded
/// by `upper`.
pub fn concentration_constants(sigma: f64, upper: f64) -> (f64, f64) {
    (
        2.0 * sigma + 2.0 * (std::f64::consts::E * upper).sqrt(),
        2.0 * sigma + 1.0,
    )
}

/// `[c₁ J^a 2^J √u / (α√n)] ∨ [c₂ J^a 2^J u / (nα)]`.
pub fn concentration_threshold(n: usize, cfg: &NiConfig, upper: f64, u: f64) -> f64 {
    let (c1, c2) = concentration_constants(cfg.sigma(), upper);
    let j = f64::from(cfg.levels());
    let scale = j.powf(cfg.a()) * j.exp2() / cfg.alpha();
    let n = n as f64;
    (c1 * scale * u.sqrt() / n.sqrt()).max(c2 * scale * u / n)
}

/// `f̂(x)` at a single point from `n` sanitized records, generating only the
/// `J + 1` coordinates whose basis functions are nonzero at `x`.
pub fn pointwise_estimate<R: Rng + ?Sized>(sample: &[f64], x: f64, cfg: &NiConfig, rng: &mut R) -> f64 {
    let n = sample.len() as f64;
    let mut total = 0.0;
    // Scaling level: φ ≡ 1.
    let b = cfg.noise_scale(-1);
    for _ in sample {
        total += 1.0 + b * laplace(rng);
    }
    for level in 0..cfg.levels() {
        let Some(k) = haar::active_position(level, x) else {
            continue;
        };
        let weight = haar::psi(level, k, x);
        let b = cfg.noise_scale(level as i32);
        let mut coeff = 0.0;
        for &xi in sample {
            let signal = if haar::active_position(level, xi) == Some(k) {
                haar::psi(level, k, xi)
            } else {
                0.0
            };
            coeff += signal + b * laplace(rng);
        }
        total += weight * coeff;
    }
    total / n
}

/// Empirical tail frequencies of `|f̂(½) - P_J f(½)|` against `4 e^{-u/2}`.
pub fn concentration_check<R: Rng + ?Sized>(
    n: usize,
    cfg: &NiConfig,
    density: &DyadicDensity,
    u_values: &[f64],
    replications: usize,
    rng: &mut R,
) -> Result<Vec<TailRow>> {
    if replications < 1000 {
        return Err(invalid("replications", "must be at least 1000"));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    if u_values.iter().any(|&u| !(u > 0.0)) {
        return Err(invalid("u", "values must be positive"));
    }
    let x = CONCENTRATION_POINT;
    let mean = project_eval(&exact_coeffs(density, cfg.levels()), x);
    let sampler = density.sampler();
    let mut deviations = Vec::with_capacity(replications);
    let mut buf = vec![0.0; n];
    for _ in 0..replications {
        buf.iter_mut().for_each(|v| *v = sampler.draw(rng));
        deviations.push((pointwise_estimate(&buf, x, cfg, rng) - mean).abs());
    }
    let upper = density.max_value();
    Ok(u_values
        .iter()
        .map(|&u| {
            let threshold = concentration_threshold(n, cfg, upper, u);
            let hits = deviations.iter().filter(|&&d| d >= threshold).count();
            TailRow {
                u,
                empirical: hits as f64 / replications as f64,
                bound: 4.0 * (-u / 2.0).exp(),
                threshold,
            }
        })
        .collect())
}
