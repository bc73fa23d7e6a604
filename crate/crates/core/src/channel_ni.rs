//! Non-interactive channel: Laplace noise on the full Haar coefficient array,
//! and the order-2 U-statistic estimator of `∫ f²`.
//!
//! Individual `i` releases
//! `Z_{jk} = ψ_{jk}(X_i) + σ_j (σ/α) W_{jk}` with `W` standard Laplace
//! (density `½ e^{-|w|}`), `σ_{-1} = 1` and `σ_j = (1∨j)^a 2^{j/2}`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Error, Result};
use crate::haar::{self, coeff_count, level_offset, CoeffTable, WaveletIndex};

/// Largest resolution accepted by the bandwidth rules.
pub const MAX_LEVELS: u32 = 24;

/// Which normalizing constant `σ` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaVariant {
    /// `4 + 4 Σ j^{-a}`: certifies α-DP for the amplitude-1 basis.
    Normalized,
    /// `4 + 2 Σ j^{-a}`: only valid for a half-amplitude mother wavelet.
    Paper,
}

impl std::str::FromStr for SigmaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "paper" => Ok(Self::Paper),
            other => Err(invalid("sigma", format!("unknown variant `{other}`"))),
        }
    }
}

/// `Σ_{j≥1} j^{-a}` for `a > 1`.
///
/// Direct sum up to `N` plus an Euler–Maclaurin tail. For `t ↦ t^{-a}` the
/// remainder after the `B_4` term is bounded by the next term, which is
/// below `1e-20` at `N = 64` for every `a > 1`.
pub fn zeta(a: f64) -> Result<f64> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(Error::DivergentSeries(a));
    }
    const N: u32 = 64;
    let head: f64 = (1..N).rev().map(|j| f64::from(j).powf(-a)).sum();
    let n = f64::from(N);
    let tail = n.powf(1.0 - a) / (a - 1.0) + 0.5 * n.powf(-a) + a / 12.0 * n.powf(-a - 1.0)
        - a * (a + 1.0) * (a + 2.0) / 720.0 * n.powf(-a - 3.0);
    Ok(head + tail)
}

/// Normalizing constant `σ` of the channel.
pub fn sigma_constant(a: f64, variant: SigmaVariant) -> Result<f64> {
    let z = zeta(a)?;
    Ok(match variant {
        SigmaVariant::Normalized => 4.0 + 4.0 * z,
        SigmaVariant::Paper => 4.0 + 2.0 * z,
    })
}

/// Per-level scale `σ_j` (`σ_{-1} = 1`).
pub fn level_scale(level: i32, a: f64) -> f64 {
    if level < 0 {
        1.0
    } else {
        f64::from(level.max(1)).powf(a) * haar::amplitude(level as u32)
    }
}

/// Noise switch. `Off` exists for oracle validation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Laplace,
    Off,
}

/// Parameters of the non-interactive channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NiConfig {
    alpha: f64,
    a: f64,
    levels: u32,
    variant: SigmaVariant,
    sigma: f64,
    noise: NoiseMode,
    scaling_noise: bool,
    /// Laplace scale `σ_j σ / α` indexed by `level + 1`.
    scales: Vec<f64>,
}

impl NiConfig {
    /// Channel with the normalized `σ`.
    pub fn new(alpha: f64, a: f64, levels: u32) -> Result<Self> {
        Self::with_variant(alpha, a, levels, SigmaVariant::Normalized)
    }

    pub fn with_variant(alpha: f64, a: f64, levels: u32, variant: SigmaVariant) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", format!("{alpha} must be positive")));
        }
        if !(1..=MAX_LEVELS).contains(&levels) {
            return Err(invalid("levels", format!("{levels} outside 1..={MAX_LEVELS}")));
        }
        let sigma = sigma_constant(a, variant)?;
        let mut cfg = Self {
            alpha,
            a,
            levels,
            variant,
            sigma,
            noise: NoiseMode::Laplace,
            scaling_noise: true,
            scales: Vec::new(),
        };
        cfg.rebuild_scales();
        Ok(cfg)
    }

    fn rebuild_scales(&mut self) {
        self.scales = (-1..self.levels as i32)
            .map(|j| {
                let off = self.noise == NoiseMode::Off || (j < 0 && !self.scaling_noise);
                if off {
                    0.0
                } else {
                    level_scale(j, self.a) * self.sigma / self.alpha
                }
            })
            .collect();
    }

    /// Disables all noise (test hook; the result is not private).
    pub fn without_noise(mut self) -> Self {
        self.noise = NoiseMode::Off;
        self.rebuild_scales();
        self
    }

    /// Skips noise on the scaling coefficient, which carries no information
    /// about the datum since `φ ≡ 1`.
    pub fn without_scaling_noise(mut self) -> Self {
        self.scaling_noise = false;
        self.rebuild_scales();
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variant(&self) -> SigmaVariant {
        self.variant
    }

    pub fn noise(&self) -> NoiseMode {
        self.noise
    }

    /// Laplace scale `σ_j σ/α` used at `level` (0 when disabled).
    pub fn noise_scale(&self, level: i32) -> f64 {
        self.scales[(level + 1) as usize]
    }
}

/// One individual's sanitized coefficient array.
#[derive(Debug, Clone, PartialEq)]
pub struct NiRecord {
    levels: u32,
    values: Vec<f64>,
}

impl NiRecord {
    pub fn from_values(levels: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != coeff_count(levels) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch);
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: WaveletIndex) -> f64 {
        self.values[idx.flat()]
    }
}

/// Standard Laplace draw (density `½ e^{-|w|}`, variance 2).
#[inline]
pub fn laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    if rng.random::<bool>() {
        e
    } else {
        -e
    }
}

/// Writes the sanitized array for datum `x` into `out` (length `2^J`).
pub fn sanitize_into<R: Rng + ?Sized>(x: f64, cfg: &NiConfig, rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(out.len(), coeff_count(cfg.levels));
    let b = cfg.noise_scale(-1);
    out[0] = 1.0 + if b > 0.0 { b * laplace(rng) } else { 0.0 };
    for level in 0..cfg.levels {
        let b = cfg.noise_scale(level as i32);
        let start = level_offset(level as i32);
        let slots = &mut out[start..start + (1usize << level)];
        if b > 0.0 {
            for s in slots.iter_mut() {
                *s = b * laplace(rng);
            }
        } else {
            slots.fill(0.0);
        }
        if let Some(k) = haar::active_position(level, x) {
            slots[k] += haar::psi(level, k, x);
        }
    }
}

/// Sanitizes one datum.
pub fn sanitize_ni<R: Rng + ?Sized>(x: f64, cfg: &NiConfig, rng: &mut R) -> Result<NiRecord> {
    haar::check_unit(x)?;
    let mut values = vec![0.0; coeff_count(cfg.levels)];
    sanitize_into(x, cfg, rng, &mut values);
    Ok(NiRecord {
        levels: cfg.levels,
        values,
    })
}

pub fn sanitize_sample<R: Rng + ?Sized>(
    sample: &[f64],
    cfg: &NiConfig,
    rng: &mut R,
) -> Result<Vec<NiRecord>> {
    sample.iter().map(|&x| sanitize_ni(x, cfg, rng)).collect()
}

/// Rounded, clamped base-2 logarithm of a prescribed `2^J`.
pub(crate) fn round_levels(log2_target: f64) -> u32 {
    if !log2_target.is_finite() {
        return if log2_target > 0.0 { MAX_LEVELS } else { 1 };
    }
    log2_target.round().clamp(1.0, f64::from(MAX_LEVELS)) as u32
}

pub(crate) fn check_budget(n: usize, alpha: f64) -> Result<f64> {
    let budget = n as f64 * alpha * alpha;
    if !(budget > 1.0) {
        return Err(Error::InsufficientBudget(budget));
    }
    Ok(budget)
}

/// Resolution for the non-interactive estimator.
///
/// `2^J = (nα²)^{2/(4s'+3)}` for `s' ≤ ¾`, otherwise
/// `2^J = (nα² / ln(nα²)^{4a+1})^{1/3}`.
pub fn select_j_ni(n: usize, alpha: f64, s_eff: f64, a: f64) -> Result<u32> {
    let budget = check_budget(n, alpha)?;
    let log2b = budget.log2();
    let target = if s_eff <= 0.75 {
        2.0 / (4.0 * s_eff + 3.0) * log2b
    } else {
        (log2b - (4.0 * a + 1.0) * budget.ln().log2()) / 3.0
    };
    Ok(round_levels(target))
}

/// Streaming form of the U-statistic: keeps `Σ_i Z_i` and `Σ_i ‖Z_i‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticAccumulator {
    sum: Vec<f64>,
    sum_sq: f64,
    count: usize,
}

impl QuadraticAccumulator {
    pub fn new(levels: u32) -> Self {
        Self {
            sum: vec![0.0; coeff_count(levels)],
            sum_sq: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, z: &[f64]) {
        debug_assert_eq!(z.len(), self.sum.len());
        let mut sq = 0.0;
        for (s, v) in self.sum.iter_mut().zip(z) {
            *s += v;
            sq += v * v;
        }
        self.sum_sq += sq;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Coefficient-wise mean of the pushed arrays.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// `1/(n(n-1)) Σ_{i≠h} ⟨Z_i, Z_h⟩ = (‖Σ Z_i‖² - Σ ‖Z_i‖²) / (n(n-1))`.
    pub fn estimate(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::SampleTooSmall {
                got: self.count,
                need: 2,
            });
        }
        let n = self.count as f64;
        let total: f64 = self.sum.iter().map(|s| s * s).sum();
        Ok((total - self.sum_sq) / (n * (n - 1.0)))
    }
}

/// U-statistic estimate of `∫ f²` from sanitized records.
pub fn estimate_quadratic_ni(records: &[NiRecord]) -> Result<f64> {
    let first = records.first().ok_or(Error::SampleTooSmall { got: 0, need: 2 })?;
    let mut acc = QuadraticAccumulator::new(first.levels);
    for r in records {
        if r.levels != first.levels {
            return Err(Error::ShapeMismatch);
        }
        acc.push(&r.values);
    }
    acc.estimate()
}

/// Sanitizes `sample` and returns the U-statistic without keeping records.
/// With `center`, each array is shifted by `-center` first, so the
/// statistic targets `‖β(f) - center‖²`.
pub fn estimate_from_sample<R: Rng + ?Sized>(
    sample: &[f64],
    cfg: &NiConfig,
    center: Option<&CoeffTable>,
    rng: &mut R,
) -> Result<f64> {
    if let Some(c) = center {
        if c.levels() != cfg.levels {
            return Err(Error::ShapeMismatch);
        }
    }
    let mut acc = QuadraticAccumulator::new(cfg.levels);
    let mut buf = vec![0.0; coeff_count(cfg.levels)];
    for &x in sample {
        sanitize_into(x, cfg, rng, &mut buf);
        if let Some(c) = center {
            buf.iter_mut().zip(c.values()).for_each(|(z, b)| *z -= b);
        }
        acc.push(&buf);
    }
    acc.estimate()
}

/// Worst-case `sup log q(z|x)/q(z|x')` from the term-by-term triangle
/// inequality: `(α/σ) Σ_{j=0}^{J-1} 4 (1∨j)^{-a}`. The scaling level adds
/// nothing because `φ(x) - φ(x') = 0`.
pub fn ni_logratio_bound(cfg: &NiConfig) -> f64 {
    if cfg.noise == NoiseMode::Off {
        return f64::INFINITY;
    }
    let sum: f64 = (0..cfg.levels).map(|j| 4.0 * f64::from(j.max(1)).powf(-cfg.a)).sum();
    cfg.alpha / cfg.sigma * sum
}

/// Exact `log q(z|x) - log q(z|x')` for a full record `z`.
pub fn log_density_ratio(z: &NiRecord, x: f64, x_prime: f64, cfg: &NiConfig) -> f64 {
    let mut total = 0.0;
    for (flat, &zv) in z.values.iter().enumerate() {
        let idx = WaveletIndex::from_flat(flat);
        let b = cfg.noise_scale(idx.level());
        let px = haar::eval_wavelet(idx, x).unwrap_or(0.0);
        let py = haar::eval_wavelet(idx, x_prime).unwrap_or(0.0);
        if px == py {
            continue;
        }
        total += ((zv - py).abs() - (zv - px).abs()) / b;
    }
    total
}

/// Writes records as CSV rows `individual,j,k,z`.
pub fn write_records_csv<W: Write>(records: &[NiRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["individual", "j", "k", "z"])?;
    for (i, r) in records.iter().enumerate() {
        for (flat, v) in r.values.iter().enumerate() {
            let idx = WaveletIndex::from_flat(flat);
            w.write_record([
                i.to_string(),
                idx.level().to_string(),
                idx.position().to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_records_csv`].
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<NiRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let parse_err = |field: &str| Error::Csv(format!("bad `{field}` field"));
        let i: usize = row[0].parse().map_err(|_| parse_err("individual"))?;
        let j: i32 = row[1].parse().map_err(|_| parse_err("j"))?;
        let k: usize = row[2].parse().map_err(|_| parse_err("k"))?;
        let z: f64 = row[3].parse().map_err(|_| parse_err("z"))?;
        let idx = WaveletIndex::new(j, k)?;
        if rows.last().map(|r| r.0) != Some(i) {
            rows.push((i, Vec::new()));
        }
        let values = &mut rows.last_mut().expect("pushed above").1;
        if idx.flat() != values.len() {
            return Err(Error::Csv(format!("individual {i}: coefficients out of order")));
        }
        values.push(z);
    }
    rows.into_iter()
        .map(|(_, v)| {
            if !v.len().is_power_of_two() {
                return Err(Error::ShapeMismatch);
            }
            let levels = v.len().trailing_zeros();
            NiRecord::from_values(levels, v)
        })
        .collect()
}
