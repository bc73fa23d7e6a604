//! Goodness-of-fit tests of `H₀: f = f₀` against `‖f - f₀‖₂` large.
//!
//! Both statistics estimate `‖f - f₀‖²` restricted to the first `J` levels
//! and reject when the estimate exceeds `C t_n`.

use rand::Rng;

use crate::channel_ni::{self, NiConfig};
use crate::channel_si::{
    self, clamp, select_j_si, stage1_from_sample, SiConfig, Stage1Estimate, Stage1Mode,
};
use crate::density::{linear_functional, DyadicDensity};
use crate::error::{invalid, Error, Result};
use crate::haar::{exact_coeffs, CoeffTable};
use crate::Protocol;

/// Test parameters. For the interactive protocol half of the sample feeds
/// each stage, so the stage size is `n / 2`.
#[derive(Debug, Clone)]
pub struct GofConfig {
    pub protocol: Protocol,
    pub null: DyadicDensity,
    /// Threshold constant `C`.
    pub c: f64,
    /// Target level `γ`.
    pub gamma: f64,
    pub s_eff: f64,
    pub a: f64,
    pub alpha: f64,
    /// Total number of individuals.
    pub n: usize,
    pub k: f64,
    /// Sup-norm bound `M` for the clamp level.
    pub upper: f64,
    pub stage1: Stage1Mode,
}

impl GofConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(invalid("C", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1)"));
        }
        if self.protocol == Protocol::Si && self.n < 4 {
            return Err(Error::SampleTooSmall { got: self.n, need: 4 });
        }
        Ok(())
    }

    /// Individuals per estimation stage.
    pub fn stage_size(&self) -> usize {
        match self.protocol {
            Protocol::Ni => self.n,
            Protocol::Si => self.n / 2,
        }
    }

    /// Resolution `J` used by the statistic.
    pub fn levels(&self) -> Result<u32> {
        match self.protocol {
            Protocol::Ni => channel_ni::select_j_ni(self.n, self.alpha, self.s_eff, self.a),
            Protocol::Si => select_j_si(self.stage_size(), self.alpha, self.s_eff),
        }
    }

    pub fn ni_config(&self) -> Result<NiConfig> {
        NiConfig::new(self.alpha, self.a, self.levels()?)
    }

    pub fn si_config(&self) -> Result<SiConfig> {
        Ok(SiConfig::tuned(self.ni_config()?, self.k, self.upper, self.s_eff)?.with_stage1(self.stage1))
    }

    /// `C t_n`.
    pub fn critical_value(&self) -> Result<f64> {
        Ok(self.c * gof_threshold(self.protocol, self.n, self.alpha, self.s_eff, self.a)?)
    }
}

/// `t_n^{(NI)} = (nα²)^{-2s'/(4s'+3)} ln(nα²)^{a+¼}` and
/// `t_n^{(SI)} = (nα²)^{-2s'/(4s'+2)} ln(nα²)^{a/2+¼}`.
pub fn gof_threshold(protocol: Protocol, n: usize, alpha: f64, s_eff: f64, a: f64) -> Result<f64> {
    let budget = n as f64 * alpha * alpha;
    if !(budget > std::f64::consts::E) {
        return Err(Error::InsufficientBudget(budget));
    }
    let (exponent, log_power) = match protocol {
        Protocol::Ni => (-2.0 * s_eff / (4.0 * s_eff + 3.0), a + 0.25),
        Protocol::Si => (-2.0 * s_eff / (4.0 * s_eff + 2.0), 0.5 * a + 0.25),
    };
    Ok(budget.powf(exponent) * budget.ln().powf(log_power))
}

/// Decision with the statistic and the critical value it was compared to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub reject: bool,
    pub statistic: f64,
    pub threshold: f64,
}

impl TestOutcome {
    pub fn new(statistic: f64, threshold: f64) -> Self {
        Self {
            reject: statistic > threshold,
            statistic,
            threshold,
        }
    }

    pub fn decision(&self) -> u8 {
        u8::from(self.reject)
    }
}

fn null_coeffs(cfg: &GofConfig, levels: u32) -> CoeffTable {
    exact_coeffs(&cfg.null, levels)
}

/// U-statistic of the arrays centered at `β(f₀)`.
pub fn gof_statistic_ni<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<f64> {
    let ni = cfg.ni_config()?;
    let center = null_coeffs(cfg, ni.levels());
    channel_ni::estimate_from_sample(sample, &ni, Some(&center), rng)
}

/// Interactive statistic: stage 1 estimates `ĝ = f̂ - P_J f₀`, stage 2
/// releases randomized responses around `Π_τ[ĝ(x)]`, and the known
/// `∫ Π_τ[ĝ] f₀` is subtracted from their mean.
pub fn gof_statistic_si<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<f64> {
    let si = cfg.si_config()?;
    let half = sample.len() / 2;
    if half < 2 {
        return Err(Error::SampleTooSmall {
            got: sample.len(),
            need: 4,
        });
    }
    let (first, second) = (&sample[..half], &sample[half..2 * half]);
    let f_hat = stage1_from_sample(first, si.ni(), si.stage1_mode(), rng)?;
    let mut g = f_hat.coeffs().clone();
    let center = null_coeffs(cfg, g.levels());
    g.values_mut().iter_mut().zip(center.values()).for_each(|(v, b)| *v -= b);
    let g = Stage1Estimate::from_coeffs(g)?;
    let clipped = g.steps().map(|v| clamp(v, si.tau()));
    let correction = linear_functional(&cfg.null, &clipped);
    let mut total = 0.0;
    for &x in second {
        total += channel_si::stage2_sanitize(x, &g, &si, rng)?.value();
    }
    Ok(total / second.len() as f64 - correction)
}

pub fn gof_test_ni<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<TestOutcome> {
    cfg.validate()?;
    Ok(TestOutcome::new(gof_statistic_ni(sample, cfg, rng)?, cfg.critical_value()?))
}

pub fn gof_test_si<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<TestOutcome> {
    cfg.validate()?;
    Ok(TestOutcome::new(gof_statistic_si(sample, cfg, rng)?, cfg.critical_value()?))
}

/// Dispatches on `cfg.protocol`.
pub fn gof_test<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<TestOutcome> {
    match cfg.protocol {
        Protocol::Ni => gof_test_ni(sample, cfg, rng),
        Protocol::Si => gof_test_si(sample, cfg, rng),
    }
}

pub fn gof_statistic<R: Rng + ?Sized>(sample: &[f64], cfg: &GofConfig, rng: &mut R) -> Result<f64> {
    match cfg.protocol {
        Protocol::Ni => gof_statistic_ni(sample, cfg, rng),
        Protocol::Si => gof_statistic_si(sample, cfg, rng),
    }
}

/// Smallest `C` whose rejection rate on `null_statistics` is at most `γ`:
/// the empirical `(1-γ)` quantile divided by `t_n`.
pub fn calibrate_constant(null_statistics: &[f64], cfg: &GofConfig) -> Result<f64> {
    if null_statistics.is_empty() {
        return Err(Error::SampleTooSmall { got: 0, need: 1 });
    }
    let mut sorted = null_statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // Reject iff stat > q: at most floor(γ m) statistics may exceed q.
    let allowed = (cfg.gamma * m as f64).floor() as usize;
    let q = sorted[m - 1 - allowed.min(m - 1)];
    let t = gof_threshold(cfg.protocol, cfg.n, cfg.alpha, cfg.s_eff, cfg.a)?;
    // C must stay positive even if the null quantile is negative.
    Ok((q / t).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn cfg(protocol: Protocol) -> GofConfig {
        GofConfig {
            protocol,
            null: DyadicDensity::uniform(0),
            c: 1.0,
            gamma: 0.05,
            s_eff: 0.5,
            a: 2.0,
            alpha: 1.0,
            n: 1 << 10,
            k: 2.0,
            upper: 2.0,
            stage1: Stage1Mode::PerRecord,
        }
    }

    #[test]
    fn threshold_values() {
        let n = 1 << 14;
        let ni = gof_threshold(Protocol::Ni, n, 1.0, 0.5, 2.0).unwrap();
        let l = (n as f64).ln();
        assert!((ni - 2f64.powf(-2.8) * l.powf(2.25)).abs() < 1e-12);
        assert!((ni - 23.86).abs() < 0.01);
        let si = gof_threshold(Protocol::Si, n, 1.0, 0.5, 2.0).unwrap();
        assert!((si - 2f64.powf(-3.5) * l.powf(1.25)).abs() < 1e-12);
        assert!(gof_threshold(Protocol::Ni, 2, 1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn decision_follows_statistic() {
        assert!(TestOutcome::new(2.0, 1.0).reject);
        assert!(!TestOutcome::new(1.0, 1.0).reject);
        assert_eq!(TestOutcome::new(0.5, 1.0).decision(), 0);
    }

    #[test]
    fn calibration_hits_the_quantile() {
        let c = cfg(Protocol::Ni);
        let stats: Vec<f64> = (0..100).map(f64::from).collect();
        let cc = calibrate_constant(&stats, &c).unwrap();
        let t = gof_threshold(Protocol::Ni, c.n, 1.0, 0.5, 2.0).unwrap();
        let rejections = stats.iter().filter(|&&s| s > cc * t).count();
        assert_eq!(rejections, 5);
    }

    #[test]
    fn noise_free_centered_statistic_is_small_under_null() {
        let c = cfg(Protocol::Ni);
        let ni = c.ni_config().unwrap().without_noise();
        let sample: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        let center = exact_coeffs(&c.null, ni.levels());
        let stat = channel_ni::estimate_from_sample(&sample, &ni, Some(&center), &mut seeded(1)).unwrap();
        // Evenly spread points: the centered arrays are tiny on average.
        assert!(stat.abs() < 1e-2, "{stat}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg(Protocol::Si);
        c.gamma = 1.5;
        assert!(gof_test_si(&[0.5; 8], &c, &mut seeded(0)).is_err());
        let mut c = cfg(Protocol::Ni);
        c.c = 0.0;
        assert!(gof_test_ni(&[0.5; 8], &c, &mut seeded(0)).is_err());
    }
}
