//! Private estimation of `T(f) = ∫ φ(f)` through the second-order expansion
//! around a private pilot estimate `f̂`:
//!
//! ```text
//! T(f) = ∫ [φ(f̂) - φ'(f̂) f̂ + ½ φ''(f̂) f̂²]      (plug-in, exact given f̂)
//!      + ∫ f [φ'(f̂) - φ''(f̂) f̂]                (linear, randomized response)
//!      + ½ ∫ f² φ''(f̂)                          (weighted quadratic, two-stage)
//!      + G_n,   |G_n| ≤ ⅙ ‖φ'''‖_∞ ∫ |f - f̂|³
//! ```
//!
//! The sample is split into three equal groups, one per estimated piece, so
//! each individual is randomized exactly once.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::channel_ni::NiConfig;
use crate::channel_si::{
    clamp, randomized_response, select_tau, stage1_from_sample, Stage1Estimate, Stage1Mode,
};
use crate::density::Steps;
use crate::error::{invalid, Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A three-times differentiable `φ` with its first two derivatives.
#[derive(Clone)]
pub struct SmoothFunctional {
    name: String,
    phi: RealFn,
    d1: RealFn,
    d2: RealFn,
    third_bound: f64,
    lower: f64,
}

impl fmt::Debug for SmoothFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFunctional")
            .field("name", &self.name)
            .field("third_bound", &self.third_bound)
            .field("lower", &self.lower)
            .finish()
    }
}

impl SmoothFunctional {
    /// Custom functional. `third_bound` bounds `|φ'''|` on `[lower, M]`.
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        third_bound: f64,
        lower: f64,
    ) -> Result<Self> {
        if !(third_bound >= 0.0) {
            return Err(invalid("third_bound", "must be non-negative"));
        }
        if !(lower >= 0.0) {
            return Err(invalid("lower", "must be non-negative"));
        }
        Ok(Self {
            name: name.into(),
            phi: Arc::new(phi),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            third_bound,
            lower,
        })
    }

    /// `φ(t) = t²`; the expansion is exact.
    pub fn quadratic() -> Self {
        Self::new("quadratic", |t| t * t, |t| 2.0 * t, |_| 2.0, 0.0, 0.0).expect("valid")
    }

    /// `φ(t) = t`.
    pub fn linear() -> Self {
        Self::new("linear", |t| t, |_| 1.0, |_| 0.0, 0.0, 0.0).expect("valid")
    }

    /// `φ(t) = t ln t` on densities bounded below by `lower > 0`.
    pub fn entropy(lower: f64) -> Result<Self> {
        if !(lower > 0.0) {
            return Err(invalid("lower", "entropy needs a positive lower bound"));
        }
        Self::new(
            "entropy",
            |t| t * t.ln(),
            |t| t.ln() + 1.0,
            |t| 1.0 / t,
            1.0 / (lower * lower),
            lower,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.phi)(t)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn third_bound(&self) -> f64 {
        self.third_bound
    }
}

/// Randomized-response estimate of `∫ w f` from raw data.
///
/// Each datum releases `±τ_w (e^α+1)/(e^α-1)` with conditional mean `w(x)`.
pub fn private_linear_functional<R: Rng + ?Sized>(
    sample: &[f64],
    w: impl Fn(f64) -> f64,
    bound: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::SampleTooSmall { got: 0, need: 1 });
    }
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(invalid("bound", format!("{bound} is not a finite sup-bound")));
    }
    let mut total = 0.0;
    for &x in sample {
        let v = w(x);
        if !(v.abs() <= bound * (1.0 + 1e-12)) {
            return Err(Error::WeightBound { value: v, bound });
        }
        total += randomized_response(v.clamp(-bound, bound), bound, alpha, rng)?;
    }
    Ok(total / sample.len() as f64)
}

/// Tuning shared by the pilot estimate and the weighted quadratic term.
#[derive(Debug, Clone)]
pub struct FunctionalConfig {
    pub ni: NiConfig,
    /// Upper bound `M` on the density.
    pub upper: f64,
    pub k: f64,
    pub s_eff: f64,
    pub stage1: Stage1Mode,
}

/// The three estimated pieces and the a-priori remainder bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimate {
    pub estimate: f64,
    pub plug_in: f64,
    pub linear_term: f64,
    pub quadratic_term: f64,
    /// `⅙ ‖φ'''‖_∞ (M - f_min)³ ≥ ⅙ ‖φ'''‖_∞ ∫ |f - f̂|³` for the clipped pilot.
    pub remainder_bound: f64,
    /// Sizes of the pilot, linear, quadratic stage-1 and quadratic stage-2 groups.
    pub groups: [usize; 4],
}

/// Splits `n` points into three equal groups (the last one even).
fn three_way(n: usize) -> Result<[std::ops::Range<usize>; 4]> {
    let g = n / 3;
    let q = (n - 2 * g) / 2;
    if g < 2 || q < 1 {
        return Err(Error::SampleTooSmall { got: n, need: 6 });
    }
    Ok([0..g, g..2 * g, 2 * g..2 * g + q, 2 * g + q..2 * g + 2 * q])
}

/// Second-order expansion estimator of `∫ φ(f)`.
pub fn integral_functional_estimate<R: Rng + ?Sized>(
    sample: &[f64],
    phi: &SmoothFunctional,
    cfg: &FunctionalConfig,
    rng: &mut R,
) -> Result<FunctionalEstimate> {
    if !(cfg.upper > phi.lower) {
        return Err(invalid("upper", "upper bound must exceed the lower bound"));
    }
    let [pilot_g, lin_g, q1_g, q2_g] = three_way(sample.len())?;
    let alpha = cfg.ni.alpha();

    let pilot = stage1_from_sample(&sample[pilot_g.clone()], &cfg.ni, cfg.stage1, rng)?;
    let clipped = pilot.steps().map(|v| v.clamp(phi.lower, cfg.upper));

    let width = 1.0 / clipped.values().len() as f64;
    let plug_in: f64 = clipped
        .values()
        .iter()
        .map(|&t| phi.phi(t) - (phi.d1)(t) * t + 0.5 * (phi.d2)(t) * t * t)
        .sum::<f64>()
        * width;

    let psi1 = clipped.map(|t| (phi.d1)(t) - (phi.d2)(t) * t);
    let linear_term = private_linear_functional(
        &sample[lin_g.clone()],
        |x| psi1.eval(x),
        psi1.sup_abs(),
        alpha,
        rng,
    )?;

    let psi2 = clipped.map(|t| (phi.d2)(t));
    let quadratic_term = if psi2.sup_abs() == 0.0 {
        0.0
    } else {
        let tau = select_tau(cfg.k, cfg.upper, cfg.ni.levels(), cfg.ni.a(), cfg.s_eff)?;
        let second = stage1_from_sample(&sample[q1_g.clone()], &cfg.ni, cfg.stage1, rng)?;
        0.5 * weighted_response_mean(&sample[q2_g.clone()], &psi2, &second, tau, alpha, rng)?
    };

    let spread = cfg.upper - phi.lower;
    let remainder_bound = if phi.third_bound == 0.0 {
        0.0
    } else {
        phi.third_bound / 6.0 * spread.powi(3)
    };
    Ok(FunctionalEstimate {
        estimate: plug_in + linear_term + quadratic_term,
        plug_in,
        linear_term,
        quadratic_term,
        remainder_bound,
        groups: [pilot_g.len(), lin_g.len(), q1_g.len(), q2_g.len()],
    })
}

/// Mean of responses with conditional mean `w(x) Π_τ[g(x)]`, unbiased for
/// `∫ f w Π_τ[g]` given `g`.
fn weighted_response_mean<R: Rng + ?Sized>(
    sample: &[f64],
    weight: &Steps,
    g: &Stage1Estimate,
    tau: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let bound = weight.sup_abs() * tau;
    private_linear_functional(sample, |x| weight.eval(x) * clamp(g.eval(x), tau), bound, alpha, rng)
}
