//! Locally differentially private estimation of `D(f) = ∫₀¹ f²` for a
//! density on `[0, 1]`.
//!
//! Two protocols are provided: a non-interactive channel that adds Laplace
//! noise to every Haar coefficient of the datum ([`channel_ni`]), and a
//! two-stage sequentially interactive protocol that combines a private
//! wavelet density estimate with randomized response ([`channel_si`]).
//! Around them sit private estimators of general integral functionals,
//! goodness-of-fit tests, privacy audits and a Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod channel_ni;
pub mod channel_si;
pub mod density;
pub mod error;
pub mod functionals;
pub mod gof;
pub mod haar;
pub mod harness;
pub mod rng;

pub use channel_ni::{NiConfig, NiRecord, SigmaVariant};
pub use channel_si::{SiConfig, Stage1Estimate, Stage2Record};
pub use density::{BesovSpec, DyadicDensity};
pub use error::{Error, Result};
pub use haar::{CoeffTable, WaveletIndex};

/// Which channel produced an estimate.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Non-interactive Laplace channel with the U-statistic.
    Ni,
    /// Sequentially interactive two-stage protocol.
    Si,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Ni => "ni",
            Protocol::Si => "si",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ni" => Ok(Protocol::Ni),
            "si" => Ok(Protocol::Si),
            other => Err(Error::InvalidParameter {
                name: "protocol",
                reason: format!("unknown protocol `{other}` (expected ni or si)"),
            }),
        }
    }
}
