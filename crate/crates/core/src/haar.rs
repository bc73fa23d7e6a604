//! Haar wavelet basis on `[0, 1]`.
//!
//! Level `-1` is the scaling function `φ ≡ 1`. For `j ≥ 0`,
//! `ψ_{jk}(x) = 2^{j/2} ψ(2^j x - k)` with `ψ = +1` on `[0, ½)` and `-1` on
//! `[½, 1)`. Coefficient tables are stored flat: the scaling coefficient sits
//! at offset 0 and `(j, k)` at offset `2^j + k`, so a table with levels
//! `-1..J-1` holds exactly `2^J` entries.

use crate::density::DyadicDensity;
use crate::error::{invalid, Error, Result};

/// Number of positions at `level` (`1 ∨ 2^j`).
#[inline]
pub fn positions_at(level: i32) -> usize {
    if level < 0 {
        1
    } else {
        1usize << level
    }
}

/// Number of coefficients for levels `-1..levels-1`.
#[inline]
pub fn coeff_count(levels: u32) -> usize {
    1usize << levels
}

/// Flat offset of the first coefficient at `level`.
#[inline]
pub fn level_offset(level: i32) -> usize {
    if level < 0 {
        0
    } else {
        1usize << level
    }
}

/// A `(level, position)` pair addressing one basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveletIndex {
    level: i32,
    position: usize,
}

impl WaveletIndex {
    pub fn new(level: i32, position: usize) -> Result<Self> {
        if !(-1..=62).contains(&level) || position >= positions_at(level) {
            return Err(Error::InvalidIndex { level, position });
        }
        Ok(Self { level, position })
    }

    /// The scaling function `φ`.
    pub const fn scaling() -> Self {
        Self {
            level: -1,
            position: 0,
        }
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn flat(&self) -> usize {
        level_offset(self.level) + self.position
    }

    pub fn from_flat(flat: usize) -> Self {
        if flat == 0 {
            return Self::scaling();
        }
        let level = (usize::BITS - 1 - flat.leading_zeros()) as i32;
        Self {
            level,
            position: flat - (1usize << level),
        }
    }
}

/// Mother wavelet with amplitude 1.
#[inline]
pub fn mother(t: f64) -> f64 {
    if (0.0..0.5).contains(&t) {
        1.0
    } else if (0.5..1.0).contains(&t) {
        -1.0
    } else {
        0.0
    }
}

/// `2^{j/2}`.
#[inline]
pub fn amplitude(level: u32) -> f64 {
    (level as f64 * 0.5).exp2()
}

/// Position `k` whose support `[k 2^{-j}, (k+1) 2^{-j})` contains `x`, if any.
#[inline]
pub fn active_position(level: u32, x: f64) -> Option<usize> {
    let scaled = x * (1u64 << level) as f64;
    if !(0.0..).contains(&scaled) {
        return None;
    }
    let k = scaled.floor() as usize;
    (k < (1usize << level)).then_some(k)
}

/// Value of `ψ_{jk}(x)` for `j ≥ 0` without range checks on the index.
#[inline]
pub(crate) fn psi(level: u32, position: usize, x: f64) -> f64 {
    let t = x * (1u64 << level) as f64 - position as f64;
    amplitude(level) * mother(t)
}

/// Evaluates the basis function `idx` at `x ∈ [0, 1]`.
pub fn eval_wavelet(idx: WaveletIndex, x: f64) -> Result<f64> {
    check_unit(x)?;
    if idx.level < 0 {
        return Ok(1.0);
    }
    Ok(psi(idx.level as u32, idx.position, x))
}

pub(crate) fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid("x", format!("{x} is outside [0, 1]")))
    }
}

/// Haar coefficients `β_{jk}` for levels `-1..J-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    levels: u32,
    values: Vec<f64>,
}

impl CoeffTable {
    pub fn zeros(levels: u32) -> Self {
        Self {
            levels,
            values: vec![0.0; coeff_count(levels)],
        }
    }

    pub fn from_values(levels: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != coeff_count(levels) {
            return Err(Error::ShapeMismatch);
        }
        Ok(Self { levels, values })
    }

    /// Maximal level `J`; the table covers `j = -1..J-1`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: WaveletIndex) -> f64 {
        self.values.get(idx.flat()).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, idx: WaveletIndex, value: f64) -> Result<()> {
        let slot = self
            .values
            .get_mut(idx.flat())
            .ok_or(Error::InvalidIndex {
                level: idx.level,
                position: idx.position,
            })?;
        *slot = value;
        Ok(())
    }

    /// Coefficients at a single level.
    pub fn level(&self, level: i32) -> &[f64] {
        let start = level_offset(level);
        &self.values[start..start + positions_at(level)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (WaveletIndex, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (WaveletIndex::from_flat(i), v))
    }

    /// `Σ β_{jk}²`, i.e. `∫ (P_J f)²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Reconstruction `P_J f` as a step function on `2^J` cells.
    pub fn to_cells(&self) -> Vec<f64> {
        let mut cells = vec![self.values[0]];
        for level in 0..self.levels {
            let amp = amplitude(level);
            let coeffs = self.level(level as i32);
            cells = cells
                .iter()
                .zip(coeffs)
                .flat_map(|(&parent, &b)| [parent + amp * b, parent - amp * b])
                .collect();
        }
        cells
    }
}

/// Coefficients of the step function whose cell integrals are `masses`
/// (`masses.len()` must be a power of two). Levels at or above the mass
/// resolution are exactly zero.
pub fn coeffs_from_masses(masses: &[f64], levels: u32) -> CoeffTable {
    debug_assert!(masses.len().is_power_of_two());
    let resolution = masses.len().trailing_zeros();
    let mut table = CoeffTable::zeros(levels);
    // pyramid[r] holds the masses aggregated to resolution r.
    let mut current = masses.to_vec();
    let mut pyramid = vec![Vec::new(); resolution as usize + 1];
    for r in (0..resolution).rev() {
        let coarser: Vec<f64> = current.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        pyramid[r as usize + 1] = std::mem::replace(&mut current, coarser);
    }
    table.values[0] = current[0];
    for level in 0..levels.min(resolution) {
        let finer = &pyramid[level as usize + 1];
        let amp = amplitude(level);
        let start = level_offset(level as i32);
        for (k, pair) in finer.chunks_exact(2).enumerate() {
            table.values[start + k] = amp * (pair[0] - pair[1]);
        }
    }
    table
}

/// Exact inner products `⟨f, ψ_{jk}⟩` for a dyadic density.
pub fn exact_coeffs(d: &DyadicDensity, levels: u32) -> CoeffTable {
    let width = d.cell_width();
    let masses: Vec<f64> = d.cells().iter().map(|v| v * width).collect();
    coeffs_from_masses(&masses, levels)
}

/// `Σ_{j,k} β_{jk} ψ_{jk}(x)`.
pub fn project_eval(c: &CoeffTable, x: f64) -> f64 {
    let mut acc = c.values[0];
    for level in 0..c.levels {
        if let Some(k) = active_position(level, x) {
            acc += c.values[level_offset(level as i32) + k] * psi(level, k, x);
        }
    }
    acc
}

/// `D(f) - Σ_{j<J} ‖β_{j·}‖²`, summed directly over the levels `j ≥ J`.
pub fn tail_energy(d: &DyadicDensity, levels: u32) -> f64 {
    let full = exact_coeffs(d, d.resolution().max(levels));
    full.values[coeff_count(levels)..].iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(j: i32, k: usize) -> WaveletIndex {
        WaveletIndex::new(j, k).unwrap()
    }

    #[test]
    fn evaluates_basis_functions() {
        assert_eq!(eval_wavelet(idx(-1, 0), 0.3).unwrap(), 1.0);
        assert_eq!(eval_wavelet(idx(0, 0), 0.25).unwrap(), 1.0);
        assert_eq!(eval_wavelet(idx(0, 0), 0.75).unwrap(), -1.0);
        assert!((eval_wavelet(idx(2, 1), 0.26).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(eval_wavelet(idx(2, 1), 0.1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_indices_and_points() {
        assert!(matches!(
            WaveletIndex::new(-1, 1),
            Err(Error::InvalidIndex { .. })
        ));
        assert!(WaveletIndex::new(3, 8).is_err());
        assert!(WaveletIndex::new(-2, 0).is_err());
        assert!(eval_wavelet(idx(0, 0), 1.5).is_err());
    }

    #[test]
    fn flat_layout_round_trips() {
        for flat in 0..64 {
            let i = WaveletIndex::from_flat(flat);
            assert_eq!(i.flat(), flat);
            assert!(i.position() < positions_at(i.level()));
        }
        assert_eq!(idx(3, 5).flat(), 13);
    }

    #[test]
    fn orthonormal_on_dyadic_grid() {
        // Exact integration on a grid finer than the finest level.
        let levels = 5;
        let res = levels + 1;
        let n = 1usize << res;
        let mids: Vec<f64> = (0..n).map(|c| (c as f64 + 0.5) / n as f64).collect();
        let all: Vec<WaveletIndex> = (0..coeff_count(levels)).map(WaveletIndex::from_flat).collect();
        for a in &all {
            for b in &all {
                let ip: f64 = mids
                    .iter()
                    .map(|&x| eval_wavelet(*a, x).unwrap() * eval_wavelet(*b, x).unwrap())
                    .sum::<f64>()
                    / n as f64;
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12, "{a:?} {b:?} {ip}");
            }
        }
    }

    #[test]
    fn half_step_density_coefficients() {
        let d = DyadicDensity::new(vec![2.0, 0.0]).unwrap();
        let c = exact_coeffs(&d, 1);
        assert_eq!(c.values(), &[1.0, 1.0]);
        assert!((project_eval(&c, 0.25) - 2.0).abs() < 1e-15);
        assert!(project_eval(&c, 0.75).abs() < 1e-15);
    }

    #[test]
    fn uniform_density_has_only_scaling_coefficient() {
        let c = exact_coeffs(&DyadicDensity::uniform(4), 3);
        assert_eq!(c.values()[0], 1.0);
        assert!(c.values()[1..].iter().all(|&v| v == 0.0));
        assert_eq!(tail_energy(&DyadicDensity::uniform(4), 2), 0.0);
        assert_eq!(project_eval(&CoeffTable::from_values(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(), 0.9), 1.0);
    }

    #[test]
    fn tail_energy_counts_only_high_levels() {
        // Level-1 mass only: f = 1 + c ψ_{10} + c ψ_{11}
        let d = DyadicDensity::new(vec![1.5, 0.5, 1.5, 0.5]).unwrap();
        let c = exact_coeffs(&d, 2);
        let level1: f64 = c.level(1).iter().map(|v| v * v).sum();
        assert!(c.level(0)[0].abs() < 1e-15);
        assert!((tail_energy(&d, 1) - level1).abs() < 1e-15);
        assert_eq!(tail_energy(&d, 2), 0.0);
        let half = DyadicDensity::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(tail_energy(&half, 1), 0.0);
    }

    #[test]
    fn reconstruction_matches_pointwise_projection() {
        let d = DyadicDensity::new(vec![0.5, 1.25, 1.75, 0.5, 1.0, 1.0, 0.25, 1.75]).unwrap();
        let c = exact_coeffs(&d, 3);
        let cells = c.to_cells();
        for (i, v) in cells.iter().enumerate() {
            let x = (i as f64 + 0.5) / 8.0;
            assert!((project_eval(&c, x) - v).abs() < 1e-14);
            assert!((d.cells()[i] - v).abs() < 1e-14);
        }
    }
}
