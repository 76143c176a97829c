use serde::{Deserialize, Serialize};

use crate::credit::LogOuParams;
use crate::error::{invalid, GapRiskError, Result};

use super::series::SpreadSeries;

const MIN_OBSERVATIONS: usize = 250;
/// `|1 - b|` below which the AR(1) level is treated as unidentified.
const UNIT_ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOuFit {
    pub params: LogOuParams,
    /// AR(1) intercept and slope of `y[t+1]` on `y[t]`.
    pub intercept: f64,
    pub slope: f64,
    pub residual_sd: f64,
    pub observations: usize,
    /// False at a unit root: `k` is then 0 and `y_bar` holds the last log
    /// hazard as a placeholder.
    pub y_bar_identified: bool,
}

impl LogOuFit {
    /// The parameters, or a degenerate-regression error when the level is
    /// unidentified.
    pub fn strict(&self) -> Result<LogOuParams> {
        if self.y_bar_identified {
            Ok(self.params)
        } else {
            Err(GapRiskError::DegenerateRegression(format!(
                "AR(1) slope {} is a unit root; mean-reversion level undefined",
                self.slope
            )))
        }
    }
}

/// `(1 - e^{-2 k dt}) / (2 k)`, the exact OU step variance per unit `sigma^2`.
fn step_variance(k: f64, dt: f64) -> f64 {
    let kd = k * dt;
    if kd.abs() < 1e-10 {
        dt
    } else {
        -(-2.0 * kd).exp_m1() / (2.0 * k)
    }
}

/// Log-OU fit by exact-discretisation AR(1) regression on log hazards
/// `ln(spread / (1 - R))`.
pub fn fit_logou(series: &SpreadSeries, dt: f64, recovery: f64) -> Result<LogOuFit> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(0.0..1.0).contains(&recovery) {
        return Err(invalid("recovery", format!("must lie in [0, 1), got {recovery}")));
    }
    let n = series.len();
    if n < MIN_OBSERVATIONS {
        return Err(GapRiskError::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: n,
        });
    }
    let y: Vec<f64> = series.spreads().iter().map(|s| (s / (1.0 - recovery)).ln()).collect();
    let lambda_0 = series.spreads()[n - 1] / (1.0 - recovery);
    let (x0, x1) = (&y[..n - 1], &y[1..]);
    let m = x0.len() as f64;
    let mx = x0.iter().sum::<f64>() / m;
    let my = x1.iter().sum::<f64>() / m;
    let sxx: f64 = x0.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x0.iter().zip(x1).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale = mx.abs().max(1.0);

    if sxx <= 1e-24 * scale * scale * m {
        // No variation in the regressor: a random walk with zero drift is
        // the only consistent reading.
        let dy: Vec<f64> = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
        let s2 = dy.iter().map(|d| d * d).sum::<f64>() / m;
        return degenerate(y[n - 1], 1.0, 0.0, s2.sqrt(), dt, lambda_0, n);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ssr: f64 = x0.iter().zip(x1).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let resid_sd = (ssr / (m - 2.0)).max(0.0).sqrt();
    if (1.0 - b).abs() < UNIT_ROOT_TOL {
        return degenerate(y[n - 1], b, a, resid_sd, dt, lambda_0, n);
    }
    if !(b > 0.0) {
        return Err(GapRiskError::DegenerateRegression(format!(
            "AR(1) slope {b} is not positive; no OU step matches it"
        )));
    }
    // For b > 1 the continuation gives k < 0 (explosive), and the variance
    // map stays positive.
    let k = -b.ln() / dt;
    let y_bar = a / (1.0 - b);
    let sigma_c = resid_sd / step_variance(k, dt).sqrt();
    Ok(LogOuFit {
        params: LogOuParams::new(k, y_bar, sigma_c, lambda_0)?,
        intercept: a,
        slope: b,
        residual_sd: resid_sd,
        observations: n,
        y_bar_identified: true,
    })
}

fn degenerate(y_last: f64, b: f64, a: f64, resid_sd: f64, dt: f64, lambda_0: f64, n: usize) -> Result<LogOuFit> {
    Ok(LogOuFit {
        params: LogOuParams::new(0.0, y_last, resid_sd / dt.sqrt(), lambda_0)?,
        intercept: a,
        slope: b,
        residual_sd: resid_sd,
        observations: n,
        y_bar_identified: false,
    })
}
