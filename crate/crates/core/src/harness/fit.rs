//! Log-log rate fits with optional two-segment elbow detection.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{summarize, ResultRow};
use crate::error::{Error, Result};
use crate::Protocol;

/// Confidence required before an elbow is reported.
pub const ELBOW_CONFIDENCE: f64 = 0.99;

/// Breakpoint of a two-segment fit. The break point belongs to both segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbow {
    /// `nα²` at the break.
    pub at: f64,
    pub index: usize,
    pub left_slope: f64,
    pub right_slope: f64,
    pub f_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
    pub elbow: Option<Elbow>,
}

struct Line {
    slope: f64,
    intercept: f64,
    rss: f64,
    sxx: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Line {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Line {
        slope,
        intercept,
        rss,
        sxx,
    }
}

/// Least squares of `ln y` on `ln x`. Needs at least 4 distinct `x`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch);
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateFit("values must be positive and finite".into()));
    }
    let mut pts: Vec<(f64, f64)> = x.iter().map(|v| v.ln()).zip(y.iter().map(|v| v.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct = pts.iter().map(|p| p.0).collect::<Vec<_>>();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 distinct x values, got {}",
            distinct.len()
        )));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let line = ols(&lx, &ly);
    let m = lx.len();
    let slope_se = (line.rss / (m - 2) as f64 / line.sxx).sqrt();
    Ok(RateFit {
        slope: line.slope,
        intercept: line.intercept,
        slope_se,
        points: m,
        elbow: detect_elbow(&lx, &ly, line.rss),
    })
}

/// Exhaustive breakpoint search. An elbow is reported when the two-segment
/// fit beats the single line by an F-test at [`ELBOW_CONFIDENCE`].
fn detect_elbow(lx: &[f64], ly: &[f64], rss_line: f64) -> Option<Elbow> {
    let m = lx.len();
    if m < 5 {
        return None;
    }
    let tss: f64 = {
        let my = ly.iter().sum::<f64>() / m as f64;
        ly.iter().map(|v| (v - my).powi(2)).sum()
    };
    // An (numerically) exact line leaves nothing to explain.
    if rss_line <= 1e-20 * tss.max(f64::MIN_POSITIVE) {
        return None;
    }
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for b in 1..m - 1 {
        let left = ols(&lx[..=b], &ly[..=b]);
        let right = ols(&lx[b..], &ly[b..]);
        if !left.slope.is_finite() || !right.slope.is_finite() {
            continue;
        }
        let rss = left.rss + right.rss;
        if best.is_none_or(|(_, r, _, _)| rss < r) {
            best = Some((b, rss, left.slope, right.slope));
        }
    }
    let (b, rss, left_slope, right_slope) = best?;
    let df2 = (m - 4) as f64;
    let f = ((rss_line - rss) / 2.0) / (rss / df2).max(f64::MIN_POSITIVE);
    let p_value = if f.is_finite() {
        1.0 - FisherSnedecor::new(2.0, df2).ok()?.cdf(f.max(0.0))
    } else {
        0.0
    };
    (p_value < 1.0 - ELBOW_CONFIDENCE).then(|| Elbow {
        at: lx[b].exp(),
        index: b,
        left_slope,
        right_slope,
        f_statistic: f,
        p_value,
    })
}

fn cell_points(rows: &[ResultRow], protocol: Protocol, alpha: f64, s: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let cells: Vec<_> = summarize(rows)
        .into_iter()
        .filter(|c| c.protocol == protocol && c.alpha == alpha && s.is_none_or(|s| c.s == s))
        .collect();
    if let Some(first) = cells.first() {
        if cells.iter().any(|c| c.s != first.s) {
            return Err(Error::DegenerateFit(
                "rows contain several smoothness values; select one".into(),
            ));
        }
    }
    Ok(cells
        .iter()
        .map(|c| (c.n as f64 * alpha * alpha, c.mse))
        .unzip())
}

/// Fits `ln MSE` against `ln(nα²)` over the cells of `protocol` at `alpha`
/// (and at smoothness `s` when the rows hold several).
pub fn fit_rate(rows: &[ResultRow], protocol: Protocol, alpha: f64, s: Option<f64>) -> Result<RateFit> {
    let (x, y) = cell_points(rows, protocol, alpha, s)?;
    fit_log_log(&x, &y)
}

/// Same fit after dividing each MSE by `ln(nα²)^power`, which removes a
/// known polylogarithmic factor from the slope.
pub fn fit_rate_log_corrected(
    rows: &[ResultRow],
    protocol: Protocol,
    alpha: f64,
    s: Option<f64>,
    power: f64,
) -> Result<RateFit> {
    let (x, y) = cell_points(rows, protocol, alpha, s)?;
    let y: Vec<f64> = x.iter().zip(&y).map(|(b, m)| m / b.ln().powf(power)).collect();
    fit_log_log(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (8..=16).map(|k| 2f64.powi(k)).collect()
    }

    #[test]
    fn exact_power_law() {
        let x = grid();
        let y: Vec<f64> = x.iter().map(|v| v.powf(-0.75)).collect();
        let fit = fit_log_log(&x, &y).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-10);
        assert!(fit.elbow.is_none());
    }

    #[test]
    fn two_segment_elbow() {
        let x = grid();
        let brk = 2f64.powi(12);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                if v <= brk {
                    v.powf(-0.75)
                } else {
                    brk.powf(-0.75) * (v / brk).powf(-0.5)
                }
            })
            .collect();
        let fit = fit_log_log(&x, &y).unwrap();
        let e = fit.elbow.expect("elbow");
        assert!((e.at.log2() - 12.0).abs() <= 1.0, "{e:?}");
        assert!((e.left_slope + 0.75).abs() < 1e-9);
        assert!((e.right_slope + 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_log_log(&[1.0, 2.0, 4.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(fit_log_log(&[1.0, 2.0, 4.0, 8.0], &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(fit_log_log(&[2.0, 2.0, 2.0, 2.0, 2.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    }

    #[test]
    fn noisy_line_has_no_elbow() {
        let x = grid();
        // Deterministic small wiggle around slope -0.6.
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v.powf(-0.6) * (1.0 + 0.02 * if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let fit = fit_log_log(&x, &y).unwrap();
        assert!((fit.slope + 0.6).abs() < 0.01);
        assert!(fit.elbow.is_none());
    }
}
