use crate::error::{invalid, GapRiskError, Result};

use super::series::{log_returns, PriceSeries};

const MIN_RETURNS: usize = 100;

/// Quantile `p` of `values` by linear interpolation between order
/// statistics at rank `(n - 1) p`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(GapRiskError::InsufficientData { needed: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Historical `window_days` VaR at `confidence` from overlapping log returns,
/// as a positive fraction floored at zero.
pub fn historical_var(series: &PriceSeries, window_days: usize, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    let r = log_returns(series, window_days)?;
    if r.len() < MIN_RETURNS {
        return Err(GapRiskError::InsufficientData {
            needed: MIN_RETURNS,
            got: r.len(),
        });
    }
    Ok((-empirical_quantile(&r, 1.0 - confidence)?).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn interpolated_quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(empirical_quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&v, 1.0).unwrap(), 4.0);
        assert!((empirical_quantile(&v, 0.5).unwrap() - 2.5).abs() < 1e-15);
        assert!((empirical_quantile(&v, 0.1).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn flat_series_has_zero_var() {
        let d0 = NaiveDate::from_ymd_opt(2012, 1, 2).unwrap();
        let s = PriceSeries::new((0..200).map(|i| d0 + chrono::Duration::days(i)).collect(), vec![50.0; 200]).unwrap();
        assert_eq!(historical_var(&s, 10, 0.99).unwrap(), 0.0);
        let short = s.between(d0, d0 + chrono::Duration::days(50));
        assert!(matches!(
            historical_var(&short, 1, 0.99),
            Err(GapRiskError::InsufficientData { needed: 100, .. })
        ));
    }
}
