//! Piecewise-constant densities on dyadic grids.
//!
//! Every density here is a step function on `2^R` equal cells of `[0, 1]`,
//! so its Haar expansion is finite and every functional used by the
//! estimators has an exact closed form.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::haar::{self, CoeffTable};

const MASS_TOLERANCE: f64 = 1e-9;

/// Density that is constant on each of `2^R` dyadic cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDensity {
    resolution: u32,
    cells: Vec<f64>,
}

impl DyadicDensity {
    /// Builds a density from its cell heights. The number of cells must be a
    /// power of two, every height non-negative and the mean height 1.
    pub fn new(cells: Vec<f64>) -> Result<Self> {
        if cells.is_empty() || !cells.len().is_power_of_two() {
            return Err(Error::InvalidDensity(format!(
                "cell count {} is not a power of two",
                cells.len()
            )));
        }
        if let Some(v) = cells.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("cell value {v} is negative or not finite")));
        }
        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
        if (mean - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDensity(format!("integrates to {mean}, not 1")));
        }
        Ok(Self {
            resolution: cells.len().trailing_zeros(),
            cells,
        })
    }

    /// Rescales non-negative weights so they integrate to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let mean = weights.iter().sum::<f64>() / weights.len().max(1) as f64;
        if !(mean > 0.0) {
            return Err(Error::InvalidDensity("weights have no positive mass".into()));
        }
        Self::new(weights.into_iter().map(|w| w / mean).collect())
    }

    pub fn uniform(resolution: u32) -> Self {
        Self {
            resolution,
            cells: vec![1.0; 1 << resolution],
        }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn cell_width(&self) -> f64 {
        (-(self.resolution as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.cells.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Height of the cell containing `x`; `x = 1` belongs to the last cell.
    pub fn eval(&self, x: f64) -> Result<f64> {
        haar::check_unit(x)?;
        Ok(self.cells[self.cell_of(x)])
    }

    fn cell_of(&self, x: f64) -> usize {
        let c = (x * self.cells.len() as f64).floor() as usize;
        c.min(self.cells.len() - 1)
    }

    /// `∫ f²`.
    pub fn quad_functional(&self) -> f64 {
        self.cells.iter().map(|v| v * v).sum::<f64>() * self.cell_width()
    }

    /// `∫ φ(f)` for an arbitrary pointwise map.
    pub fn integrate_map(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.cells.iter().map(|&v| phi(v)).sum::<f64>() * self.cell_width()
    }

    /// `‖f - g‖₂`.
    pub fn l2_distance(&self, other: &DyadicDensity) -> f64 {
        let res = self.resolution.max(other.resolution);
        let a = refine(&self.cells, self.resolution, res);
        let b = refine(&other.cells, other.resolution, res);
        let w = (-(res as f64)).exp2();
        (a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * w).sqrt()
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self)
    }
}

impl fmt::Display for DyadicDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.resolution)?;
        let line: Vec<String> = self.cells.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", line.join(" "))
    }
}

impl FromStr for DyadicDensity {
    type Err = Error;

    /// Parses the two-line text form: resolution, then `2^R` cell values.
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidDensity("missing resolution line".into()))?;
        let resolution: u32 = header
            .trim()
            .parse()
            .map_err(|_| Error::InvalidDensity(format!("bad resolution `{}`", header.trim())))?;
        let body = lines
            .next()
            .ok_or_else(|| Error::InvalidDensity("missing cell line".into()))?;
        let cells = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidDensity(format!("bad cell value `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if resolution >= usize::BITS || cells.len() != 1usize << resolution {
            return Err(Error::InvalidDensity(format!(
                "expected 2^{resolution} cells, found {}",
                cells.len()
            )));
        }
        Self::new(cells)
    }
}

/// Repeats each value so a step function at `from` is expressed at `to ≥ from`.
pub(crate) fn refine(values: &[f64], from: u32, to: u32) -> Cow<'_, [f64]> {
    if to == from {
        return Cow::Borrowed(values);
    }
    let rep = 1usize << (to - from);
    Cow::Owned(
        values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, rep))
            .collect(),
    )
}

/// A function that is constant on the cells of some dyadic grid.
pub trait StepFunction {
    fn step_resolution(&self) -> u32;
    fn step_values(&self) -> Cow<'_, [f64]>;
}

impl StepFunction for DyadicDensity {
    fn step_resolution(&self) -> u32 {
        self.resolution
    }

    fn step_values(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self.cells)
    }
}

impl StepFunction for CoeffTable {
    fn step_resolution(&self) -> u32 {
        self.levels()
    }

    fn step_values(&self) -> Cow<'_, [f64]> {
        Cow::Owned(self.to_cells())
    }
}

/// Step function given directly by its cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct Steps {
    resolution: u32,
    values: Vec<f64>,
}

impl Steps {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_power_of_two() {
            return Err(invalid("values", "length must be a power of two"));
        }
        Ok(Self {
            resolution: values.len().trailing_zeros(),
            values,
        })
    }

    pub fn from_fn(resolution: u32, f: impl Fn(f64) -> f64) -> Self {
        let n = 1usize << resolution;
        let values = (0..n).map(|c| f((c as f64 + 0.5) / n as f64)).collect();
        Self { resolution, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        self.values[((x * n as f64).floor() as usize).min(n - 1)]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            resolution: self.resolution,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl StepFunction for Steps {
    fn step_resolution(&self) -> u32 {
        self.resolution
    }

    fn step_values(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self.values)
    }
}

/// `∫ g f` computed cell by cell on the common refinement.
pub fn linear_functional<G: StepFunction + ?Sized>(d: &DyadicDensity, g: &G) -> f64 {
    let res = d.resolution.max(g.step_resolution());
    let f = refine(&d.cells, d.resolution, res);
    let gv = g.step_values();
    let gv = refine(&gv, g.step_resolution(), res);
    f.iter().zip(gv.iter()).map(|(a, b)| a * b).sum::<f64>() * (-(res as f64)).exp2()
}

/// Exact inverse-CDF sampler over the dyadic cells.
#[derive(Debug, Clone)]
pub struct Sampler {
    cumulative: Vec<f64>,
    width: f64,
}

impl Sampler {
    pub fn new(d: &DyadicDensity) -> Self {
        let width = d.cell_width();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = d
            .cells
            .iter()
            .map(|v| {
                acc += v * width;
                acc
            })
            .collect();
        let total = acc;
        cumulative.iter_mut().for_each(|c| *c /= total);
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { cumulative, width }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let cell = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        let v: f64 = rng.random();
        (cell as f64 + v) * self.width
    }
}

/// `n` i.i.d. draws from `d`.
pub fn sample<R: Rng + ?Sized>(d: &DyadicDensity, n: usize, rng: &mut R) -> Vec<f64> {
    let sampler = Sampler::new(d);
    (0..n).map(|_| sampler.draw(rng)).collect()
}

/// Signs `ν_k` attached to the basis functions of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSigns {
    pub level: u32,
    pub signs: Vec<i8>,
}

impl LevelSigns {
    pub fn seeded(level: u32, rng: &mut impl Rng) -> Self {
        let signs = (0..1usize << level)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self { level, signs }
    }
}

/// Sign-perturbed Haar density
/// `f(x) = 1 + δ Σ_m 2^{-m(s+½)} Σ_k ν_{mk} ψ_{mk}(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BesovSpec {
    pub smoothness: f64,
    pub amplitude: f64,
    pub terms: Vec<LevelSigns>,
}

impl BesovSpec {
    pub fn single(smoothness: f64, amplitude: f64, level: u32, signs: Vec<i8>) -> Self {
        Self {
            smoothness,
            amplitude,
            terms: vec![LevelSigns { level, signs }],
        }
    }

    pub fn single_seeded(smoothness: f64, amplitude: f64, level: u32, seed: u64) -> Self {
        Self::multi_seeded(smoothness, amplitude, &[level], seed)
    }

    /// Self-similar perturbation over several levels, signs drawn from `seed`.
    pub fn multi_seeded(smoothness: f64, amplitude: f64, levels: &[u32], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            smoothness,
            amplitude,
            terms: levels
                .iter()
                .map(|&m| LevelSigns::seeded(m, &mut rng))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(invalid("smoothness", "must be positive"));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(invalid("amplitude", "must be non-negative"));
        }
        for t in &self.terms {
            if t.level < 1 || t.level > 24 {
                return Err(invalid("level", format!("{} outside 1..=24", t.level)));
            }
            if t.signs.len() != 1usize << t.level || t.signs.iter().any(|s| s.abs() != 1) {
                return Err(invalid(
                    "signs",
                    format!("level {} needs 2^{} entries in {{-1, +1}}", t.level, t.level),
                ));
            }
        }
        Ok(())
    }

    /// Resolution of the resulting density (finest level + 1).
    pub fn resolution(&self) -> u32 {
        self.terms.iter().map(|t| t.level + 1).max().unwrap_or(0)
    }

    /// Per-coefficient weight `2^{-m(s+½)}` at level `m` before scaling by δ.
    pub fn level_weight(&self, level: u32) -> f64 {
        (-(level as f64) * (self.smoothness + 0.5)).exp2()
    }

    /// Perturbation `Σ_m 2^{-m(s+½)} Σ_k ν_k ψ_{mk}` on the density's cells.
    fn unit_perturbation(&self) -> Vec<f64> {
        let res = self.resolution();
        let mut p = vec![0.0; 1usize << res];
        for t in &self.terms {
            let w = self.level_weight(t.level) * haar::amplitude(t.level);
            let shift = res - t.level;
            for (c, slot) in p.iter_mut().enumerate() {
                let k = c >> shift;
                let left = (c >> (shift - 1)) & 1 == 0;
                let sign = f64::from(t.signs[k]);
                *slot += if left { w * sign } else { -w * sign };
            }
        }
        p
    }

    /// Largest δ keeping the density within `[0, 2]`.
    pub fn max_amplitude(&self) -> f64 {
        let sup = self.unit_perturbation().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            f64::INFINITY
        } else {
            1.0 / sup
        }
    }

    /// Exact coefficient table of the density at its own resolution.
    pub fn coefficients(&self) -> CoeffTable {
        let mut c = CoeffTable::zeros(self.resolution());
        c.values_mut()[0] = 1.0;
        for t in &self.terms {
            let w = self.amplitude * self.level_weight(t.level);
            let start = haar::level_offset(t.level as i32);
            for (k, s) in t.signs.iter().enumerate() {
                c.values_mut()[start + k] += w * f64::from(*s);
            }
        }
        c
    }
}

/// Builds the density described by `spec`.
pub fn make_besov_density(spec: &BesovSpec) -> Result<DyadicDensity> {
    spec.validate()?;
    let max_delta = spec.max_amplitude();
    if spec.amplitude > max_delta * (1.0 + 1e-12) {
        return Err(Error::AmplitudeTooLarge {
            delta: spec.amplitude,
            max_delta,
        });
    }
    let cells = spec
        .unit_perturbation()
        .into_iter()
        .map(|p| (1.0 + spec.amplitude * p).max(0.0))
        .collect();
    DyadicDensity::new(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::exact_coeffs;

    #[test]
    fn rejects_invalid_densities() {
        assert!(DyadicDensity::new(vec![1.0, 1.0, 1.0]).is_err());
        assert!(DyadicDensity::new(vec![2.5, -0.5]).is_err());
        assert!(DyadicDensity::new(vec![1.0, 2.0]).is_err());
        assert!(DyadicDensity::new(vec![]).is_err());
    }

    #[test]
    fn evaluates_cells() {
        let d = DyadicDensity::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(d.eval(0.25).unwrap(), 2.0);
        assert_eq!(d.eval(0.75).unwrap(), 0.0);
        assert_eq!(d.eval(1.0).unwrap(), 0.0);
        assert_eq!(DyadicDensity::uniform(3).eval(0.4).unwrap(), 1.0);
        assert!(d.eval(-0.1).is_err());
    }

    #[test]
    fn quadratic_functional_examples() {
        assert_eq!(DyadicDensity::uniform(5).quad_functional(), 1.0);
        assert_eq!(DyadicDensity::new(vec![2.0, 0.0]).unwrap().quad_functional(), 2.0);
        let spec = BesovSpec::single(0.5, 0.5, 3, vec![1, -1, 1, 1, -1, -1, 1, -1]);
        let d = make_besov_density(&spec).unwrap();
        assert!((d.quad_functional() - 1.03125).abs() < 1e-14);
    }

    #[test]
    fn single_level_besov_cells_and_coefficients() {
        let d = make_besov_density(&BesovSpec::single(0.5, 0.5, 1, vec![1, 1])).unwrap();
        let r = 0.25 * std::f64::consts::SQRT_2;
        let expected = [1.0 + r, 1.0 - r, 1.0 + r, 1.0 - r];
        for (a, b) in d.cells().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let d3 = make_besov_density(&BesovSpec::single_seeded(0.5, 0.5, 3, 11)).unwrap();
        let c = exact_coeffs(&d3, 4);
        for v in c.level(3) {
            assert!((v.abs() - 0.0625).abs() < 1e-15);
        }
        assert!(c.level(0).iter().chain(c.level(1)).chain(c.level(2)).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_amplitude_is_uniform() {
        let d = make_besov_density(&BesovSpec::single_seeded(0.3, 0.0, 2, 1)).unwrap();
        assert!(d.cells().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn amplitude_bound_is_reported() {
        let spec = BesovSpec::single_seeded(0.1, 5.0, 1, 3);
        // 1 / (2^{-m(s+½)} 2^{m/2}) = 2^{ms}
        let bound = 2f64.powf(0.1);
        match make_besov_density(&spec) {
            Err(Error::AmplitudeTooLarge { max_delta, .. }) => {
                assert!((max_delta - bound).abs() < 1e-12)
            }
            other => panic!("expected amplitude error, got {other:?}"),
        }
        let ok = BesovSpec { amplitude: bound, ..spec };
        let d = make_besov_density(&ok).unwrap();
        assert!(d.min_value() >= 0.0 && d.max_value() <= 2.0 + 1e-12);
    }

    #[test]
    fn multi_level_coefficients_match_construction() {
        let spec = BesovSpec::multi_seeded(0.3, 0.2, &[1, 2, 3, 4], 9);
        let d = make_besov_density(&spec).unwrap();
        let c = exact_coeffs(&d, spec.resolution());
        for (a, b) in c.values().iter().zip(spec.coefficients().values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_functional_examples() {
        let d = make_besov_density(&BesovSpec::multi_seeded(0.5, 0.3, &[1, 2], 4)).unwrap();
        assert!((linear_functional(&d, &DyadicDensity::uniform(0)) - 1.0).abs() < 1e-14);
        assert!((linear_functional(&d, &d) - d.quad_functional()).abs() < 1e-14);
        let g = CoeffTable::from_values(2, vec![0.7, -1.2, 0.4, 2.0]).unwrap();
        assert!((linear_functional(&DyadicDensity::uniform(3), &g) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn point_mass_cell_sampling_stays_in_cell() {
        let mut cells = vec![0.0; 8];
        cells[0] = 8.0;
        let d = DyadicDensity::new(cells).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample(&d, 10_000, &mut rng).iter().all(|&x| x < 0.125));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = make_besov_density(&BesovSpec::single_seeded(0.5, 0.5, 2, 1)).unwrap();
        let a = sample(&d, 100, &mut ChaCha8Rng::seed_from_u64(77));
        let b = sample(&d, 100, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }

    #[test]
    fn text_format_round_trips() {
        let d = make_besov_density(&BesovSpec::single_seeded(0.5, 0.5, 2, 1)).unwrap();
        let text = d.to_string();
        assert!(text.starts_with("3\n"));
        let back: DyadicDensity = text.parse().unwrap();
        assert_eq!(back, d);
        assert!("2\n1 1 1".parse::<DyadicDensity>().is_err());
    }
}
