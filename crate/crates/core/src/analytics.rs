//! Closed-form results for the two-firm torus equilibrium, undercutting
//! stability, nearest-neighbor distance statistics and power-law fits.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("distance must lie in (0, 1), got {0}")]
    InvalidDistance(f64),
    #[error("co-located firms (d = {0}): zero-profit Bertrand limit")]
    Degenerate(f64),
    #[error("transport rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("need at least {min} firms, got {got}")]
    TooFewFirms { min: usize, got: usize },
    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("need at least 3 fit points, got {0}")]
    TooFewPoints(usize),
    #[error("fit point m = {m} has nonpositive mean {mean} or std {std}")]
    NonPositivePoint { m: usize, mean: f64, std: f64 },
    #[error("fit input has a single distinct abscissa")]
    Collinear,
}

fn check_rate(r: f64) -> Result<(), AnalyticsError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidRate(r))
    }
}

/// `x^2 * ln x` with the `0 ln 0 = 0` convention.
fn x2_ln_x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x * x.ln()
    }
}

/// `ln(x^2 [sqrt(x^2 + 1) - 1])`, rewritten as
/// `4 ln x - ln(sqrt(x^2 + 1) + 1)` so small `x` does not cancel.
fn ln_sq_root_gap(x: f64) -> f64 {
    4.0 * x.ln() - ((x * x + 1.0).sqrt() + 1.0).ln()
}

/// Denominator of the two-firm Nash profit on the torus.
pub fn omega(d: f64) -> Result<f64, AnalyticsError> {
    if !(d > 0.0 && d < 1.0) {
        return Err(AnalyticsError::InvalidDistance(d));
    }
    let e = 1.0 - d;
    let roots = d * (e * e + 1.0).sqrt() + e * (d * d + 1.0).sqrt();
    // 3 d e^2 ln e + 3 d^2 e ln d
    let logs = 3.0 * d * x2_ln_x(e) + 3.0 * e * x2_ln_x(d);
    let gaps = d * e * e * ln_sq_root_gap(e) + d * d * e * ln_sq_root_gap(d);
    Ok(roots + logs - gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashEquilibrium {
    pub d: f64,
    pub r: f64,
    pub omega: f64,
    /// Profit per customer of each firm.
    pub profit: f64,
    /// Common equilibrium price; each firm holds half the market.
    pub price: f64,
}

/// Symmetric Nash equilibrium of two firms at torus distance `d`.
pub fn nash_equilibrium(d: f64, r: f64) -> Result<NashEquilibrium, AnalyticsError> {
    check_rate(r)?;
    if d == 0.0 || d == 1.0 {
        return Err(AnalyticsError::Degenerate(d));
    }
    let omega = omega(d)?;
    let profit = (1.0 - d) * d * r / omega;
    Ok(NashEquilibrium {
        d,
        r,
        omega,
        profit,
        price: 2.0 * profit,
    })
}

/// Highest price that still captures every customer of a rival at distance
/// `d` charging `p_other`, floored at zero.
pub fn undercut_price(p_other: f64, r: f64, d: f64, gamma: f64) -> f64 {
    (p_other - r * d.powf(gamma)).max(0.0)
}

/// Whether firm 1 (price `p1`, area share `s1`) prefers its current profit
/// over undercutting firm 2 (price `p2`) at distance `d`: `p2 - r d < p1 s1`.
pub fn is_stable(p1: f64, p2: f64, s1: f64, r: f64, d: f64) -> bool {
    undercut_price(p2, r, d, 1.0) < p1 * s1
}

/// Symmetric torus equilibrium is immune to undercutting iff `p* < 2 r d`.
pub fn pbc_stability_check(d: f64, r: f64) -> Result<bool, AnalyticsError> {
    let eq = nash_equilibrium(d, r)?;
    Ok(eq.price < 2.0 * r * d)
}

/// Density of the distance from a firm to its nearest of `m - 1` competitors
/// placed uniformly at unit density: `2 pi R (1 - pi R^2)^(m-2) (m - 1)`.
pub fn nn_distance_pdf(radius: f64, m: usize) -> Result<f64, AnalyticsError> {
    if m < 2 {
        return Err(AnalyticsError::TooFewFirms { min: 2, got: m });
    }
    if radius < 0.0 {
        return Err(AnalyticsError::NegativeRadius(radius));
    }
    let pi = std::f64::consts::PI;
    let free = 1.0 - pi * radius * radius;
    if free < 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * pi * radius * free.powi(m as i32 - 2) * (m - 1) as f64)
}

/// Mean nearest-competitor distance `(m-1)/2 * Gamma(m-1) / Gamma(m+1/2)`.
pub fn nn_mean_distance(m: usize) -> Result<f64, AnalyticsError> {
    if m < 2 {
        return Err(AnalyticsError::TooFewFirms { min: 2, got: m });
    }
    let mf = m as f64;
    let log_ratio = ln_gamma(mf - 1.0) - ln_gamma(mf + 0.5);
    Ok(0.5 * (mf - 1.0) * log_ratio.exp())
}

/// Leading-order profit per firm and customer, `r / m^(3/2)`.
pub fn predicted_profit_per_firm(m: usize, r: f64) -> Result<f64, AnalyticsError> {
    if m < 2 {
        return Err(AnalyticsError::TooFewFirms { min: 2, got: m });
    }
    check_rate(r)?;
    Ok(r / (m as f64).powf(1.5))
}

/// Total profit of all firms, `r / sqrt(m)`.
pub fn predicted_total_profit(m: usize, r: f64) -> Result<f64, AnalyticsError> {
    Ok(m as f64 * predicted_profit_per_firm(m, r)?)
}

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Two-firm Nash profit averaged over the nearest-neighbor distance density
/// of `m` firms.
pub fn nn_averaged_nash_profit(m: usize, r: f64) -> Result<f64, AnalyticsError> {
    check_rate(r)?;
    nn_distance_pdf(0.0, m)?;
    let upper = 1.0 / std::f64::consts::PI.sqrt();
    Ok(simpson(
        |radius| {
            if radius <= 0.0 {
                return 0.0;
            }
            let x = nash_equilibrium(radius, r).map(|e| e.profit).unwrap_or(0.0);
            x * nn_distance_pdf(radius, m).unwrap_or(0.0)
        },
        0.0,
        upper,
        4000,
    ))
}

/// One aggregated observation for a power-law fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub m: usize,
    pub mean: f64,
    pub std: f64,
}

/// `X = A r / m^B` with standard errors from the weighted regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "se_A")]
    pub se_a: f64,
    #[serde(rename = "se_B")]
    pub se_b: f64,
    /// Weighted sum of squared log residuals.
    pub residual: f64,
    pub n_points: usize,
}

/// Weighted least squares in log-log space: `ln(X/r) = ln A - B ln m` with
/// weights `(mean/std)^2`, the inverse delta-method variance of `ln X`.
pub fn fit_power_law(points: &[FitPoint], r: f64) -> Result<PowerLawFit, AnalyticsError> {
    check_rate(r)?;
    if points.len() < 3 {
        return Err(AnalyticsError::TooFewPoints(points.len()));
    }
    for p in points {
        if !(p.mean > 0.0 && p.std > 0.0 && p.mean.is_finite() && p.std.is_finite()) {
            return Err(AnalyticsError::NonPositivePoint {
                m: p.m,
                mean: p.mean,
                std: p.std,
            });
        }
    }
    if points.iter().all(|p| p.m == points[0].m) {
        return Err(AnalyticsError::Collinear);
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = (p.mean / p.std).powi(2);
        let x = -(p.m as f64).ln();
        let y = (p.mean / r).ln();
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return Err(AnalyticsError::Collinear);
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let residual = points
        .iter()
        .map(|p| {
            let w = (p.mean / p.std).powi(2);
            let fitted = intercept - slope * (p.m as f64).ln();
            w * ((p.mean / r).ln() - fitted).powi(2)
        })
        .sum();
    let a = intercept.exp();
    Ok(PowerLawFit {
        a,
        b: slope,
        se_a: a * (sxx / det).sqrt(),
        se_b: (s / det).sqrt(),
        residual,
        n_points: points.len(),
    })
}

/// [`fit_power_law`] restricted to points with `m >= min_m`.
pub fn fit_power_law_above(
    points: &[FitPoint],
    r: f64,
    min_m: usize,
) -> Result<PowerLawFit, AnalyticsError> {
    let kept: Vec<FitPoint> = points.iter().copied().filter(|p| p.m >= min_m).collect();
    fit_power_law(&kept, r)
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based standard error; absent with only two points.
    pub se_slope: Option<f64>,
    pub n_points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, AnalyticsError> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Err(AnalyticsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalyticsError::Collinear);
    }
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se_slope = (n > 2).then(|| {
        let rss: f64 = xs[..n]
            .iter()
            .zip(&ys[..n])
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    });
    Ok(LineFit {
        slope,
        intercept,
        se_slope,
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit evaluations of the printed closed form (mpmath)
    const OMEGA_HALF: f64 = 1.478_942_857_544_597_4;
    const X_STAR_HALF: f64 = 0.169_039_661_488_382_6;
    const P_STAR_HALF: f64 = 0.338_079_322_976_765_2;
    const OMEGA_POINT_THREE: f64 = 1.387_616_778_790_806;
    const X_STAR_POINT_ONE: f64 = 0.078_699_472_723_446_27;
    const OMEGA_MICRO: f64 = 1.000_001_295_600_395_3;

    #[test]
    fn omega_reference_values() {
        assert!((omega(0.5).unwrap() - OMEGA_HALF).abs() < 1e-14);
        assert!((omega(0.3).unwrap() - OMEGA_POINT_THREE).abs() < 1e-14);
        assert!((omega(0.7).unwrap() - OMEGA_POINT_THREE).abs() < 1e-14);
        assert!((omega(1e-6).unwrap() - OMEGA_MICRO).abs() < 1e-14);
        assert!((omega(1e-12).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn omega_rejects_out_of_range() {
        for d in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(omega(d).is_err());
        }
    }

    #[test]
    fn nash_values() {
        let eq = nash_equilibrium(0.5, 1.0).unwrap();
        assert!((eq.profit - X_STAR_HALF).abs() < 1e-14);
        assert!((eq.price - P_STAR_HALF).abs() < 1e-14);
        let e1 = nash_equilibrium(0.1, 1.0).unwrap();
        assert!((e1.profit - X_STAR_POINT_ONE).abs() < 1e-14);
        let a = nash_equilibrium(0.3, 1.0).unwrap().profit;
        let b = nash_equilibrium(0.3, 2.0).unwrap().profit;
        assert!((b - 2.0 * a).abs() < 1e-15);
        let c = nash_equilibrium(0.7, 1.0).unwrap().profit;
        assert!((a - c).abs() < 1e-15);
        assert_eq!(
            nash_equilibrium(0.0, 1.0),
            Err(AnalyticsError::Degenerate(0.0))
        );
        assert_eq!(
            nash_equilibrium(1.0, 1.0),
            Err(AnalyticsError::Degenerate(1.0))
        );
        assert!(nash_equilibrium(0.5, 0.0).is_err());
    }

    #[test]
    fn undercut_examples() {
        assert!((undercut_price(0.71, 1.0, 0.5, 1.0) - 0.21).abs() < 1e-12);
        assert!((undercut_price(0.24, 1.0, 0.2, 1.0) - 0.04).abs() < 1e-12);
        assert_eq!(undercut_price(0.1, 1.0, 0.2, 1.0), 0.0);
        assert!((undercut_price(0.5, 1.0, 0.5, 2.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stability_examples() {
        assert!(!is_stable(0.12, 0.24, 0.30, 1.0, 0.2));
        let eq = nash_equilibrium(0.5, 1.0).unwrap();
        assert!(is_stable(eq.price, eq.price, 0.5, 1.0, 0.5));
        // symmetric state: stable iff p < 2 r d
        assert!(is_stable(0.39, 0.39, 0.5, 1.0, 0.2));
        assert!(!is_stable(0.41, 0.41, 0.5, 1.0, 0.2));
        assert!(is_stable(0.3, 0.0, 0.1, 1.0, 0.2));
        assert!(pbc_stability_check(0.5, 1.0).unwrap());
        assert!(pbc_stability_check(0.01, 1.0).unwrap());
        assert_eq!(
            pbc_stability_check(0.2, 1.0).unwrap(),
            pbc_stability_check(0.2, 100.0).unwrap()
        );
    }

    #[test]
    fn nn_pdf_shape() {
        let pi = std::f64::consts::PI;
        for r in [0.0, 0.1, 0.3, 0.5] {
            assert!((nn_distance_pdf(r, 2).unwrap() - 2.0 * pi * r).abs() < 1e-14);
        }
        let edge = 1.0 / pi.sqrt();
        assert!(nn_distance_pdf(edge, 3).unwrap().abs() < 1e-12);
        assert_eq!(nn_distance_pdf(0.6, 3).unwrap(), 0.0);
        assert!(nn_distance_pdf(-0.1, 3).is_err());
        assert!(nn_distance_pdf(0.1, 1).is_err());
    }

    #[test]
    fn nn_mean_values() {
        // (1/2) Gamma(1) / Gamma(5/2)
        assert!((nn_mean_distance(2).unwrap() - 0.376_126_389_031_837_5).abs() < 1e-12);
        assert!((nn_mean_distance(10).unwrap() - 0.160_101_879_440_497_76).abs() < 1e-12);
        let big = nn_mean_distance(10_000).unwrap();
        assert!((big / 0.005 - 1.0).abs() < 1e-4);
        assert!(nn_mean_distance(1).is_err());
    }

    #[test]
    fn predicted_profit_examples() {
        assert_eq!(predicted_profit_per_firm(4, 1.0).unwrap(), 0.125);
        assert_eq!(predicted_profit_per_firm(16, 2.0).unwrap(), 0.03125);
        assert_eq!(predicted_total_profit(4, 1.0).unwrap(), 0.5);
        assert!(predicted_profit_per_firm(1, 1.0).is_err());
    }

    fn synthetic(a: f64, b: f64, r: f64, ms: &[usize]) -> Vec<FitPoint> {
        ms.iter()
            .map(|&m| {
                let mean = a * r / (m as f64).powf(b);
                FitPoint {
                    m,
                    mean,
                    std: 0.1 * mean,
                }
            })
            .collect()
    }

    #[test]
    fn power_law_noiseless_recovery() {
        let pts = synthetic(0.32, 1.5, 1.0, &[8, 16, 32, 64]);
        let fit = fit_power_law(&pts, 1.0).unwrap();
        assert!((fit.a - 0.32).abs() < 1e-12);
        assert!((fit.b - 1.5).abs() < 1e-12);
        assert!(fit.residual < 1e-20);
        assert!(fit.se_a > 0.0 && fit.se_b > 0.0);
    }

    #[test]
    fn power_law_cutoff_and_errors() {
        let mut pts = synthetic(0.32, 1.5, 2.0, &[8, 16, 32, 64]);
        pts.insert(
            0,
            FitPoint {
                m: 2,
                mean: 5.0,
                std: 0.1,
            },
        );
        let fit = fit_power_law_above(&pts, 2.0, 8).unwrap();
        assert!((fit.b - 1.5).abs() < 1e-12);
        assert_eq!(fit.n_points, 4);
        assert_eq!(
            fit_power_law(&pts[..2], 1.0),
            Err(AnalyticsError::TooFewPoints(2))
        );
        let same = vec![
            FitPoint {
                m: 8,
                mean: 0.1,
                std: 0.01
            };
            3
        ];
        assert_eq!(fit_power_law(&same, 1.0), Err(AnalyticsError::Collinear));
        let mut bad = synthetic(0.3, 1.5, 1.0, &[8, 16, 32]);
        bad[1].mean = 0.0;
        assert!(matches!(
            fit_power_law(&bad, 1.0),
            Err(AnalyticsError::NonPositivePoint { m: 16, .. })
        ));
    }

    #[test]
    fn line_fit_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, -1.0, -3.0, -5.0];
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.se_slope.unwrap() < 1e-12);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
