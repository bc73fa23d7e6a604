//! Sequentially interactive two-stage protocol.
//!
//! The first half of the individuals releases non-interactive arrays, from
//! which the wavelet estimate `f̂` is formed. Each individual of the second
//! half then releases a single randomized response `±c`,
//! `c = τ (e^α + 1)/(e^α - 1)`, whose conditional mean is `Π_τ[f̂(X)]`.
//! The estimate of `∫ f²` is the mean of those responses.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::channel_ni::{self, check_budget, round_levels, NiConfig, NiRecord, NoiseMode};
use crate::density::{Steps, StepFunction};
use crate::error::{invalid, Error, Result};
use crate::haar::{self, coeff_count, CoeffTable};

/// `Π_τ[y] = (τ ∧ y) ∨ (-τ)`.
#[inline]
pub fn clamp(y: f64, tau: f64) -> f64 {
    y.min(tau).max(-tau)
}

/// `τ² = [K² M² (1 ∨ J^{2a+1} 2^{J(1 - 2(s' ∧ ½))})] ∨ 1`.
pub fn select_tau(k: f64, m: f64, levels: u32, a: f64, s_eff: f64) -> Result<f64> {
    if !(k >= 2.0) {
        return Err(invalid("K", format!("{k} must be at least 2")));
    }
    if !(m > 0.0) {
        return Err(invalid("M", format!("{m} must be positive")));
    }
    let j = f64::from(levels);
    let growth = j.powf(2.0 * a + 1.0) * (j * (1.0 - 2.0 * s_eff.min(0.5))).exp2();
    let tau2 = (k * k * m * m * growth.max(1.0)).max(1.0);
    Ok(tau2.sqrt())
}

/// Resolution for the interactive protocol: `2^J = (nα²)^{1/(2(s'∧1)+1)}`.
pub fn select_j_si(n: usize, alpha: f64, s_eff: f64) -> Result<u32> {
    let budget = check_budget(n, alpha)?;
    Ok(round_levels(budget.log2() / (2.0 * s_eff.min(1.0) + 1.0)))
}

/// Magnitude `τ (e^α + 1)/(e^α - 1)` of a randomized response with bound `τ`.
pub fn response_scale(tau: f64, alpha: f64) -> f64 {
    tau / (alpha * 0.5).tanh()
}

/// Two-point release with mean `value`: `+c` with probability
/// `½(1 + value/c)`, else `-c`, where `c = response_scale(bound, α)`.
pub fn randomized_response<R: Rng + ?Sized>(
    value: f64,
    bound: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let c = response_scale(bound, alpha);
    if c == 0.0 {
        return Ok(0.0);
    }
    let p = 0.5 * (1.0 + value / c);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(if rng.random::<f64>() < p { c } else { -c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampMode {
    Clamp,
    /// Test hook: `f̂` is passed through unclipped. Draws fail if the
    /// response probability leaves `[0, 1]`.
    Off,
}

/// How stage 1 is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Mode {
    /// Every individual's array is drawn and averaged.
    PerRecord,
    /// The coefficient means are drawn from their exact joint law: the sum
    /// of `n` standard Laplace variables is `G₁ - G₂` with
    /// `G₁, G₂ ~ Gamma(n, 1)` independent.
    Aggregated,
}

/// Parameters of the interactive protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SiConfig {
    ni: NiConfig,
    tau: f64,
    clamp: ClampMode,
    stage1: Stage1Mode,
}

impl SiConfig {
    /// Uses `τ` from [`select_tau`].
    pub fn tuned(ni: NiConfig, k: f64, m: f64, s_eff: f64) -> Result<Self> {
        let tau = select_tau(k, m, ni.levels(), ni.a(), s_eff)?;
        Ok(Self {
            ni,
            tau,
            clamp: ClampMode::Clamp,
            stage1: Stage1Mode::PerRecord,
        })
    }

    pub fn with_tau(ni: NiConfig, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid("tau", format!("{tau} must be positive")));
        }
        Ok(Self {
            ni,
            tau,
            clamp: ClampMode::Clamp,
            stage1: Stage1Mode::PerRecord,
        })
    }

    pub fn without_clamp(mut self) -> Self {
        self.clamp = ClampMode::Off;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.ni = self.ni.without_noise();
        self
    }

    pub fn with_stage1(mut self, mode: Stage1Mode) -> Self {
        self.stage1 = mode;
        self
    }

    pub fn ni(&self) -> &NiConfig {
        &self.ni
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.ni.alpha()
    }

    pub fn clamp_mode(&self) -> ClampMode {
        self.clamp
    }

    pub fn stage1_mode(&self) -> Stage1Mode {
        self.stage1
    }

    /// `c = τ (e^α + 1)/(e^α - 1)`.
    pub fn response_scale(&self) -> f64 {
        response_scale(self.tau, self.alpha())
    }
}

/// Stage-1 wavelet estimate `f̂ = Σ β̂_{jk} ψ_{jk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Estimate {
    coeffs: CoeffTable,
    cells: Vec<f64>,
}

impl Stage1Estimate {
    pub fn from_coeffs(coeffs: CoeffTable) -> Result<Self> {
        if coeffs.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("coeffs", "non-finite coefficient"));
        }
        let cells = coeffs.to_cells();
        Ok(Self { coeffs, cells })
    }

    pub fn coeffs(&self) -> &CoeffTable {
        &self.coeffs
    }

    /// `f̂(x)`, constant on the `2^J` cells.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.cells.len();
        self.cells[((x * n as f64) as usize).min(n - 1)]
    }

    pub fn steps(&self) -> Steps {
        Steps::new(self.cells.clone()).expect("2^J cells")
    }
}

impl StepFunction for Stage1Estimate {
    fn step_resolution(&self) -> u32 {
        self.coeffs.levels()
    }

    fn step_values(&self) -> std::borrow::Cow<'_, [f64]> {
        std::borrow::Cow::Borrowed(&self.cells)
    }
}

/// Coefficient-wise mean `β̂_{jk} = (1/n) Σ_i Z_{ijk}`.
pub fn stage1_estimate(records: &[NiRecord]) -> Result<Stage1Estimate> {
    let first = records.first().ok_or(Error::SampleTooSmall { got: 0, need: 1 })?;
    let mut sum = vec![0.0; first.values().len()];
    for r in records {
        if r.levels() != first.levels() {
            return Err(Error::ShapeMismatch);
        }
        sum.iter_mut().zip(r.values()).for_each(|(s, v)| *s += v);
    }
    let n = records.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Stage1Estimate::from_coeffs(CoeffTable::from_values(first.levels(), sum)?)
}

/// Empirical coefficients `(1/n) Σ_i ψ_{jk}(X_i)` via a histogram at resolution `J`.
pub fn empirical_coeffs(sample: &[f64], levels: u32) -> CoeffTable {
    let cells = 1usize << levels;
    let mut masses = vec![0.0; cells];
    let w = 1.0 / sample.len().max(1) as f64;
    for &x in sample {
        masses[((x * cells as f64) as usize).min(cells - 1)] += w;
    }
    // ψ_{jk}(1) = 0 for every j ≥ 0, so a datum exactly at 1 only feeds φ.
    let mut table = haar::coeffs_from_masses(&masses, levels);
    let at_one = sample.iter().filter(|&&x| x >= 1.0).count();
    if at_one > 0 {
        let mut shifted = masses.clone();
        shifted[cells - 1] -= at_one as f64 * w;
        let adj = haar::coeffs_from_masses(&shifted, levels);
        let s = table.values()[0];
        table = adj;
        table.values_mut()[0] = s;
    }
    table
}

/// Stage 1 run directly from raw data, without keeping the records.
pub fn stage1_from_sample<R: Rng + ?Sized>(
    sample: &[f64],
    cfg: &NiConfig,
    mode: Stage1Mode,
    rng: &mut R,
) -> Result<Stage1Estimate> {
    if sample.is_empty() {
        return Err(Error::SampleTooSmall { got: 0, need: 1 });
    }
    if let Some(&x) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("x", format!("{x} is outside [0, 1]")));
    }
    let n = sample.len();
    match mode {
        Stage1Mode::PerRecord => {
            let mut acc = channel_ni::QuadraticAccumulator::new(cfg.levels());
            let mut buf = vec![0.0; coeff_count(cfg.levels())];
            for &x in sample {
                channel_ni::sanitize_into(x, cfg, rng, &mut buf);
                acc.push(&buf);
            }
            Stage1Estimate::from_coeffs(CoeffTable::from_values(cfg.levels(), acc.mean())?)
        }
        Stage1Mode::Aggregated => {
            let mut coeffs = empirical_coeffs(sample, cfg.levels());
            if cfg.noise() == NoiseMode::Laplace {
                let gamma = Gamma::new(n as f64, 1.0).expect("positive shape");
                for (flat, v) in coeffs.values_mut().iter_mut().enumerate() {
                    let level = haar::WaveletIndex::from_flat(flat).level();
                    let b = cfg.noise_scale(level);
                    if b > 0.0 {
                        let s = gamma.sample(rng) - gamma.sample(rng);
                        *v += b * s / n as f64;
                    }
                }
            }
            Stage1Estimate::from_coeffs(coeffs)
        }
    }
}

/// A stage-2 release, `±c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Record(f64);

impl Stage2Record {
    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Stage-2 release for datum `x` given the published `f̂`.
pub fn stage2_sanitize<R: Rng + ?Sized>(
    x: f64,
    estimate: &Stage1Estimate,
    cfg: &SiConfig,
    rng: &mut R,
) -> Result<Stage2Record> {
    let raw = estimate.eval(x);
    let u = match cfg.clamp {
        ClampMode::Clamp => clamp(raw, cfg.tau),
        ClampMode::Off => raw,
    };
    randomized_response(u, cfg.tau, cfg.alpha(), rng).map(Stage2Record)
}

/// `D̃ = (1/n) Σ Z_i^{(2)}`.
pub fn estimate_quadratic_si(records: &[Stage2Record]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::SampleTooSmall { got: 0, need: 1 });
    }
    Ok(records.iter().map(|r| r.0).sum::<f64>() / records.len() as f64)
}

fn split_halves(sample: &[f64]) -> Result<(&[f64], &[f64])> {
    if sample.len() < 4 {
        return Err(Error::SampleTooSmall {
            got: sample.len(),
            need: 4,
        });
    }
    if !sample.len().is_multiple_of(2) {
        return Err(Error::OddSample(sample.len()));
    }
    Ok(sample.split_at(sample.len() / 2))
}

/// Runs both stages on `2n` data points and returns `D̃`.
///
/// The first `n` points go through the non-interactive channel; `f̂` is
/// materialized before any stage-2 draw, and the last `n` points only see
/// `f̂`.
pub fn run_si_protocol<R: Rng + ?Sized>(sample: &[f64], cfg: &SiConfig, rng: &mut R) -> Result<f64> {
    let (first, second) = split_halves(sample)?;
    let estimate = stage1_from_sample(first, &cfg.ni, cfg.stage1, rng)?;
    let mut total = 0.0;
    for &x in second {
        total += stage2_sanitize(x, &estimate, cfg, rng)?.value();
    }
    Ok(total / second.len() as f64)
}

/// Full record of one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub stage1: Vec<NiRecord>,
    pub stage2: Vec<Stage2Record>,
    pub estimate: f64,
}

/// Like [`run_si_protocol`], keeping every release.
pub fn run_si_transcript<R: Rng + ?Sized>(
    sample: &[f64],
    cfg: &SiConfig,
    rng: &mut R,
) -> Result<Transcript> {
    let (first, second) = split_halves(sample)?;
    let stage1 = channel_ni::sanitize_sample(first, &cfg.ni, rng)?;
    let estimate = stage1_estimate(&stage1)?;
    let stage2 = second
        .iter()
        .map(|&x| stage2_sanitize(x, &estimate, cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    let estimate = estimate_quadratic_si(&stage2)?;
    Ok(Transcript {
        stage1,
        stage2,
        estimate,
    })
}

impl Transcript {
    /// CSV rows `individual,stage,value`: every stage-1 coefficient in flat
    /// order, then one row per stage-2 response.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["individual", "stage", "value"])?;
        for (i, r) in self.stage1.iter().enumerate() {
            for v in r.values() {
                w.write_record([i.to_string(), "1".into(), v.to_string()])?;
            }
        }
        let offset = self.stage1.len();
        for (i, r) in self.stage2.iter().enumerate() {
            w.write_record([(offset + i).to_string(), "2".into(), r.0.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp(0.5, 1.0), 0.5);
        assert_eq!(clamp(3.0, 1.0), 1.0);
        assert_eq!(clamp(-3.0, 1.0), -1.0);
    }

    #[test]
    fn tau_examples() {
        assert!((select_tau(2.0, 2.0, 4, 2.0, 0.5).unwrap() - 128.0).abs() < 1e-12);
        assert_eq!(select_tau(2.0, 0.1, 1, 2.0, 0.5).unwrap(), 1.0);
        assert!(select_tau(1.5, 1.0, 3, 2.0, 0.5).is_err());
        for j in 1..=24 {
            for &a in &[1.5, 2.0, 3.0] {
                for s in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
                    for &m in &[0.5, 2.0, 8.0] {
                        let tau = select_tau(2.0, m, j, a, s).unwrap();
                        assert!(tau >= 2.0 * m && tau >= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn bandwidth_selection() {
        assert_eq!(select_j_si(1 << 14, 1.0, 0.5).unwrap(), 7);
        assert_eq!(select_j_si(1 << 12, 1.0, 1.0).unwrap(), 4);
        assert!(select_j_si(1, 1.0, 0.5).is_err());
    }

    #[test]
    fn response_scale_value() {
        let e = std::f64::consts::E;
        assert!((response_scale(1.0, 1.0) - (e + 1.0) / (e - 1.0)).abs() < 1e-14);
        assert!((response_scale(1.0, 1.0) - 2.16395).abs() < 1e-5);
    }

    #[test]
    fn symmetric_response_has_half_probability() {
        // value 0 → each sign with probability ½; check exact draw law via
        // the comparison threshold.
        let mut rng = seeded(4);
        let n = 20_000;
        let plus = (0..n)
            .filter(|_| randomized_response(0.0, 1.0, 1.0, &mut rng).unwrap() > 0.0)
            .count();
        let se = (0.25 / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 4.0 * se);
        assert!(randomized_response(5.0, 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn identical_records_reproduce_their_values() {
        let r = NiRecord::from_values(2, vec![1.0, 0.5, -0.25, 0.75]).unwrap();
        let est = stage1_estimate(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert_eq!(est.coeffs().values(), r.values());
        assert!(stage1_estimate(&[]).is_err());
    }

    #[test]
    fn estimator_on_fixed_records() {
        let c = 2.5;
        assert_eq!(estimate_quadratic_si(&[Stage2Record(c), Stage2Record(c)]).unwrap(), c);
        assert_eq!(estimate_quadratic_si(&[Stage2Record(c), Stage2Record(-c)]).unwrap(), 0.0);
        assert!(estimate_quadratic_si(&[]).is_err());
    }

    #[test]
    fn empirical_coeffs_match_noise_free_records() {
        let sample = [0.05, 0.3, 0.31, 0.5, 0.77, 0.999, 1.0];
        let cfg = NiConfig::new(1.0, 2.0, 4).unwrap().without_noise();
        let recs = channel_ni::sanitize_sample(&sample, &cfg, &mut seeded(0)).unwrap();
        let via_records = stage1_estimate(&recs).unwrap();
        let direct = empirical_coeffs(&sample, 4);
        for (a, b) in via_records.coeffs().values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn protocol_rejects_bad_samples() {
        let cfg = SiConfig::tuned(NiConfig::new(1.0, 2.0, 2).unwrap(), 2.0, 2.0, 0.5).unwrap();
        assert!(matches!(
            run_si_protocol(&[0.1, 0.2, 0.3], &cfg, &mut seeded(1)),
            Err(Error::SampleTooSmall { .. })
        ));
        assert!(matches!(
            run_si_protocol(&[0.1, 0.2, 0.3, 0.4, 0.5], &cfg, &mut seeded(1)),
            Err(Error::OddSample(5))
        ));
    }

    #[test]
    fn protocol_is_deterministic_and_bounded() {
        let cfg = SiConfig::tuned(NiConfig::new(1.0, 2.0, 3).unwrap(), 2.0, 2.0, 0.5).unwrap();
        let sample: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let a = run_si_protocol(&sample, &cfg, &mut seeded(9)).unwrap();
        let b = run_si_protocol(&sample, &cfg, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.abs() <= cfg.response_scale());
    }

    #[test]
    fn stage1_modes_agree_in_law() {
        let cfg = NiConfig::new(1.0, 2.0, 3).unwrap();
        let sample: Vec<f64> = (0..100).map(|i| (i as f64 + 0.3) / 100.0).collect();
        let exact = empirical_coeffs(&sample, 3);
        let reps = 4000;
        for mode in [Stage1Mode::PerRecord, Stage1Mode::Aggregated] {
            let mut rng = seeded(5);
            for flat in [0usize, 1, 5] {
                let b = cfg.noise_scale(haar::WaveletIndex::from_flat(flat).level());
                let var = 2.0 * b * b / sample.len() as f64;
                let draws: Vec<f64> = (0..reps)
                    .map(|_| stage1_from_sample(&sample, &cfg, mode, &mut rng).unwrap().coeffs().values()[flat])
                    .collect();
                let mean = draws.iter().sum::<f64>() / reps as f64;
                let v = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
                assert!((mean - exact.values()[flat]).abs() < 4.0 * (var / reps as f64).sqrt(), "{mode:?} {flat}");
                assert!((v / var - 1.0).abs() < 0.1, "{mode:?} {flat}: {v} vs {var}");
            }
        }
    }

    #[test]
    fn transcript_csv_layout() {
        let cfg = SiConfig::tuned(NiConfig::new(1.0, 2.0, 1).unwrap(), 2.0, 2.0, 0.5).unwrap();
        let t = run_si_transcript(&[0.1, 0.6, 0.2, 0.9], &cfg, &mut seeded(2)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "individual,stage,value");
        // 2 individuals × 2 coefficients, then 2 responses.
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert!(lines[5].starts_with("2,2,"));
        assert!(lines[6].starts_with("3,2,"));
    }
}
