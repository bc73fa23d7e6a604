//! Experiment configuration files.
//!
//! ```text
//! [experiment]
//! protocols = ["ni", "si"]
//! n = [1024, 4096]
//! alpha = 1.0
//! replications = 200
//! seed = 7
//!
//! [generator]
//! s = 0.3
//! delta = 0.5
//! levels = [2, 4]
//!
//! [channel]
//! a = 2.0
//! ```
//!
//! Scalars and lists are interchangeable for grid keys. Unknown sections and
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel_ni::{SigmaVariant, MAX_LEVELS};
use crate::channel_si::Stage1Mode;
use crate::density::{make_besov_density, BesovSpec, DyadicDensity};
use crate::error::{Error, Result};
use crate::Protocol;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Exponent {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    experiment: RawExperiment,
    #[serde(default)]
    generator: RawGenerator,
    #[serde(default)]
    channel: RawChannel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    protocols: OneOrMany<Protocol>,
    n: OneOrMany<i64>,
    alpha: OneOrMany<f64>,
    replications: i64,
    #[serde(default)]
    seed: u64,
    output: Option<PathBuf>,
    c: Option<f64>,
    gamma: Option<f64>,
    calibration: Option<i64>,
    gof_output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    s: Option<OneOrMany<f64>>,
    delta: Option<f64>,
    levels: Option<OneOrMany<i64>>,
    sign_seed: Option<u64>,
    p: Option<f64>,
    q: Option<Exponent>,
    #[serde(rename = "L")]
    radius: Option<f64>,
    #[serde(rename = "M")]
    upper: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    a: Option<f64>,
    #[serde(rename = "K")]
    k: Option<f64>,
    sigma: Option<String>,
    stage1: Option<String>,
}

/// Density family used for the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Smoothness grid.
    pub s: Vec<f64>,
    pub delta: f64,
    /// Perturbed levels; empty means the uniform density.
    pub levels: Vec<u32>,
    pub sign_seed: u64,
    pub p: f64,
    pub q: f64,
    /// Besov radius `L`.
    pub radius: f64,
    /// Sup-norm bound `M`.
    pub upper: f64,
}

impl GeneratorConfig {
    /// Effective smoothness `s' = s - (1/p - 1/2)₊`.
    pub fn effective_smoothness(&self, s: f64) -> f64 {
        s - (1.0 / self.p - 0.5).max(0.0)
    }

    pub fn spec(&self, s: f64) -> BesovSpec {
        BesovSpec::multi_seeded(s, self.delta, &self.levels, self.sign_seed)
    }

    pub fn density(&self, s: f64) -> Result<DyadicDensity> {
        make_besov_density(&self.spec(s))
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            s: vec![0.5],
            delta: 0.5,
            levels: vec![2, 4],
            sign_seed: 1,
            p: 2.0,
            q: f64::INFINITY,
            radius: 1.0,
            upper: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub a: f64,
    /// Clamp constant `K`.
    pub k: f64,
    pub sigma: SigmaVariant,
    pub stage1: Stage1Mode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            a: 2.0,
            k: 2.0,
            sigma: SigmaVariant::Normalized,
            stage1: Stage1Mode::Aggregated,
        }
    }
}

/// Settings of the `gof` command.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSettings {
    /// Frozen threshold constant; calibrated under the null when absent.
    pub c: Option<f64>,
    pub gamma: f64,
    /// Null replications used for calibration.
    pub calibration: usize,
    pub output: Option<PathBuf>,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            c: None,
            gamma: 0.05,
            calibration: 200,
            output: None,
        }
    }
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocols: Vec<Protocol>,
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub channel: ChannelConfig,
    pub test: TestSettings,
}

impl ExperimentConfig {
    /// Config with default generator and channel settings.
    pub fn new(protocols: Vec<Protocol>, n: Vec<usize>, alpha: Vec<f64>, replications: usize, seed: u64) -> Self {
        Self {
            protocols,
            n,
            alpha,
            replications,
            seed,
            output: None,
            generator: GeneratorConfig::default(),
            channel: ChannelConfig::default(),
            test: TestSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| line_at(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let at = |section: &str, key: &str, message: String| Error::Config {
            line: line_of_key(text, section, key),
            message: format!("[{section}] {key}: {message}"),
        };

        let e = raw.experiment;
        let to_usize = |section: &str, key: &str, v: i64| {
            usize::try_from(v).map_err(|_| at(section, key, format!("{v} must be non-negative")))
        };
        let n = e
            .n
            .into_vec()
            .into_iter()
            .map(|v| to_usize("experiment", "n", v))
            .collect::<Result<Vec<_>>>()?;
        let defaults = TestSettings::default();
        let test = TestSettings {
            c: e.c,
            gamma: e.gamma.unwrap_or(defaults.gamma),
            calibration: match e.calibration {
                Some(v) => to_usize("experiment", "calibration", v)?,
                None => defaults.calibration,
            },
            output: e.gof_output,
        };

        let g = raw.generator;
        let gd = GeneratorConfig::default();
        let levels = match g.levels {
            Some(l) => l
                .into_vec()
                .into_iter()
                .map(|v| {
                    u32::try_from(v).map_err(|_| at("generator", "levels", format!("{v} must be non-negative")))
                })
                .collect::<Result<Vec<_>>>()?,
            None => gd.levels.clone(),
        };
        let q = match g.q {
            None => gd.q,
            Some(Exponent::Number(v)) => v,
            Some(Exponent::Text(t)) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => f64::INFINITY,
                other => return Err(at("generator", "q", format!("`{other}` is not a number or \"inf\""))),
            },
        };
        let generator = GeneratorConfig {
            s: g.s.map_or(gd.s.clone(), OneOrMany::into_vec),
            delta: g.delta.unwrap_or(gd.delta),
            levels,
            sign_seed: g.sign_seed.unwrap_or(gd.sign_seed),
            p: g.p.unwrap_or(gd.p),
            q,
            radius: g.radius.unwrap_or(gd.radius),
            upper: g.upper.unwrap_or(gd.upper),
        };

        let c = raw.channel;
        let cd = ChannelConfig::default();
        let channel = ChannelConfig {
            a: c.a.unwrap_or(cd.a),
            k: c.k.unwrap_or(cd.k),
            sigma: match c.sigma {
                Some(s) => s.parse().map_err(|err: Error| at("channel", "sigma", err.to_string()))?,
                None => cd.sigma,
            },
            stage1: match c.stage1.as_deref() {
                None => cd.stage1,
                Some("aggregated") => Stage1Mode::Aggregated,
                Some("per_record") => Stage1Mode::PerRecord,
                Some(other) => {
                    return Err(at(
                        "channel",
                        "stage1",
                        format!("`{other}` (expected aggregated or per_record)"),
                    ))
                }
            },
        };

        let cfg = ExperimentConfig {
            protocols: e.protocols.into_vec(),
            n,
            alpha: e.alpha.into_vec(),
            replications: to_usize("experiment", "replications", e.replications)?,
            seed: e.seed,
            output: e.output,
            generator,
            channel,
            test,
        };
        cfg.check().map_err(|(section, key, message)| at(section, key, message))?;
        Ok(cfg)
    }

    /// Validates field values.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(section, key, message)| Error::Config {
            line: 0,
            message: format!("[{section}] {key}: {message}"),
        })
    }

    fn check(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let fail = |section, key, msg: String| Err((section, key, msg));
        if self.protocols.is_empty() {
            return fail("experiment", "protocols", "must not be empty".into());
        }
        if self.n.is_empty() {
            return fail("experiment", "n", "must not be empty".into());
        }
        if self.alpha.is_empty() {
            return fail("experiment", "alpha", "must not be empty".into());
        }
        if self.replications < 2 {
            return fail("experiment", "replications", format!("{} is below 2", self.replications));
        }
        for &a in &self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return fail("experiment", "alpha", format!("{a} must be positive"));
            }
        }
        for &n in &self.n {
            if n < 4 {
                return fail("experiment", "n", format!("{n} is below 4"));
            }
            if self.protocols.contains(&Protocol::Si) && n % 2 != 0 {
                return fail("experiment", "n", format!("{n} must be even for the si protocol"));
            }
            for &a in &self.alpha {
                let budget = n as f64 * a * a;
                if !(budget > std::f64::consts::E) {
                    return fail("experiment", "n", format!("n alpha^2 = {budget} is too small"));
                }
            }
        }
        if let Some(c) = self.test.c {
            if !(c > 0.0) {
                return fail("experiment", "c", format!("{c} must be positive"));
            }
        }
        if !(self.test.gamma > 0.0 && self.test.gamma < 1.0) {
            return fail("experiment", "gamma", format!("{} outside (0, 1)", self.test.gamma));
        }
        if self.test.calibration < 10 {
            return fail("experiment", "calibration", "needs at least 10 replications".into());
        }

        let g = &self.generator;
        if g.s.is_empty() {
            return fail("generator", "s", "must not be empty".into());
        }
        if !(g.p >= 1.0) {
            return fail("generator", "p", format!("{} must be at least 1", g.p));
        }
        if !(g.q >= 1.0) {
            return fail("generator", "q", format!("{} must be at least 1", g.q));
        }
        if !(g.delta >= 0.0) || !g.delta.is_finite() {
            return fail("generator", "delta", format!("{} must be non-negative", g.delta));
        }
        if !(g.radius > 0.0) {
            return fail("generator", "L", format!("{} must be positive", g.radius));
        }
        if g.delta > g.radius {
            return fail(
                "generator",
                "delta",
                format!("{} exceeds the Besov radius L = {}", g.delta, g.radius),
            );
        }
        for &l in &g.levels {
            if !(1..=MAX_LEVELS).contains(&l) {
                return fail("generator", "levels", format!("{l} outside 1..={MAX_LEVELS}"));
            }
        }
        for &s in &g.s {
            if !(g.effective_smoothness(s) > 0.0) {
                return fail("generator", "s", format!("effective smoothness of {s} is not positive"));
            }
            let d = match g.density(s) {
                Ok(d) => d,
                Err(e) => return fail("generator", "delta", e.to_string()),
            };
            if d.max_value() > g.upper {
                return fail(
                    "generator",
                    "M",
                    format!("{} is below sup f = {} for s = {s}", g.upper, d.max_value()),
                );
            }
        }

        let c = &self.channel;
        if !(c.a > 1.0) || !c.a.is_finite() {
            return fail("channel", "a", format!("{} must exceed 1", c.a));
        }
        if !(c.k >= 2.0) {
            return fail("channel", "K", format!("{} must be at least 2", c.k));
        }
        Ok(())
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, or 0 when the key is absent.
fn line_of_key(text: &str, section: &str, key: &str) -> usize {
    let header = format!("[{section}]");
    let mut inside = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t == header;
        } else if inside {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    0
}
