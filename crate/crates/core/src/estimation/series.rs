use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{GapRiskError, Result};

/// Positive price levels on strictly increasing trading dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        check_observations(&dates, &prices, "price")?;
        Ok(Self { dates, prices })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Observations dated within `[from, to]`.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.dates[i] >= from && self.dates[i] <= to).collect();
        Self {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            prices: keep.iter().map(|&i| self.prices[i]).collect(),
        }
    }
}

/// CDS par spreads (per year, decimal) for one tenor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadSeries {
    dates: Vec<NaiveDate>,
    spreads: Vec<f64>,
    tenor_label: String,
}

impl SpreadSeries {
    pub fn new(dates: Vec<NaiveDate>, spreads: Vec<f64>, tenor_label: impl Into<String>) -> Result<Self> {
        check_observations(&dates, &spreads, "spread")?;
        Ok(Self {
            dates,
            spreads,
            tenor_label: tenor_label.into(),
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn spreads(&self) -> &[f64] {
        &self.spreads
    }

    pub fn tenor_label(&self) -> &str {
        &self.tenor_label
    }

    pub fn len(&self) -> usize {
        self.spreads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spreads.is_empty()
    }
}

fn check_observations(dates: &[NaiveDate], values: &[f64], what: &str) -> Result<()> {
    if dates.len() != values.len() {
        return Err(crate::error::invalid(
            "dates",
            format!("{} dates for {} values", dates.len(), values.len()),
        ));
    }
    // Rows are numbered as in a file with a header line.
    for (i, v) in values.iter().enumerate() {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(GapRiskError::Data {
                line: i + 2,
                reason: format!("{what} must be positive and finite, got {v}"),
            });
        }
    }
    for i in 1..dates.len() {
        if dates[i] <= dates[i - 1] {
            return Err(GapRiskError::Data {
                line: i + 2,
                reason: format!("date {} does not follow {}", dates[i], dates[i - 1]),
            });
        }
    }
    Ok(())
}

/// Reads `date,value` rows (ISO-8601 dates, ascending) after a header line.
fn read_rows<R: Read>(reader: R) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| data_error(1, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(di), Some(vi)) = (col("date"), col("value")) else {
        return Err(GapRiskError::Data {
            line: 1,
            reason: format!("expected columns `date` and `value`, found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    };
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_error(line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(di), "%Y-%m-%d")
            .map_err(|e| data_error(line, format!("bad date `{}`: {e}", field(di))))?;
        let value: f64 = field(vi)
            .parse()
            .map_err(|e| data_error(line, format!("bad value `{}`: {e}", field(vi))))?;
        if !value.is_finite() {
            return Err(data_error(line, format!("non-finite value `{}`", field(vi))));
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(data_error(line, format!("date {date} does not follow {prev}")));
            }
        }
        if !(value > 0.0) {
            return Err(data_error(line, format!("value must be positive, got {value}")));
        }
        dates.push(date);
        values.push(value);
    }
    Ok((dates, values))
}

fn data_error(line: usize, reason: impl std::fmt::Display) -> GapRiskError {
    GapRiskError::Data {
        line,
        reason: reason.to_string(),
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| GapRiskError::Io(format!("{}: {e}", path.display())))
}

pub fn read_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let (dates, prices) = read_rows(open(path.as_ref())?)?;
    PriceSeries::new(dates, prices)
}

pub fn read_spread_csv(path: impl AsRef<Path>, tenor_label: &str) -> Result<SpreadSeries> {
    let (dates, spreads) = read_rows(open(path.as_ref())?)?;
    SpreadSeries::new(dates, spreads, tenor_label)
}

impl PriceSeries {
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let (dates, prices) = read_rows(reader)?;
        Self::new(dates, prices)
    }
}

impl SpreadSeries {
    pub fn from_csv_reader<R: Read>(reader: R, tenor_label: &str) -> Result<Self> {
        let (dates, spreads) = read_rows(reader)?;
        Self::new(dates, spreads, tenor_label)
    }
}

/// Overlapping `n`-day log returns `ln(P[t+n] / P[t])`.
pub fn log_returns(series: &PriceSeries, window_days: usize) -> Result<Vec<f64>> {
    if window_days == 0 {
        return Err(crate::error::invalid("window_days", "must be >= 1"));
    }
    let p = series.prices();
    if p.len() <= window_days {
        return Err(GapRiskError::InsufficientData {
            needed: window_days + 1,
            got: p.len(),
        });
    }
    Ok(p.windows(window_days + 1).map(|w| (w[window_days] / w[0]).ln()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    #[test]
    fn constant_and_doubling_returns() {
        let flat = PriceSeries::new((0..10).map(day).collect(), vec![5.0; 10]).unwrap();
        assert!(log_returns(&flat, 3).unwrap().iter().all(|r| *r == 0.0));
        let dbl = PriceSeries::new((0..6).map(day).collect(), (0..6).map(|i| 2f64.powi(i)).collect()).unwrap();
        let r = log_returns(&dbl, 1).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|x| (x - 2f64.ln()).abs() < 1e-15));
        assert!(matches!(
            log_returns(&dbl, 6),
            Err(GapRiskError::InsufficientData { needed: 7, got: 6 })
        ));
    }

    #[test]
    fn csv_parsing_reports_lines() {
        let ok = "date,value\n2010-01-04,100\n2010-01-05, 101.5\n";
        let s = PriceSeries::from_csv_reader(ok.as_bytes()).unwrap();
        assert_eq!(s.prices(), &[100.0, 101.5]);
        let bad = "date,value\n2010-01-04,100\n2010-01-05,abc\n";
        assert!(matches!(
            PriceSeries::from_csv_reader(bad.as_bytes()),
            Err(GapRiskError::Data { line: 3, .. })
        ));
        let unordered = "date,value\n2010-01-05,100\n2010-01-04,100\n";
        assert!(matches!(
            PriceSeries::from_csv_reader(unordered.as_bytes()),
            Err(GapRiskError::Data { line: 3, .. })
        ));
        let nan = "date,value\n2010-01-04,NaN\n";
        assert!(matches!(
            PriceSeries::from_csv_reader(nan.as_bytes()),
            Err(GapRiskError::Data { line: 2, .. })
        ));
        let header = "day,price\n2010-01-04,1\n";
        assert!(matches!(
            PriceSeries::from_csv_reader(header.as_bytes()),
            Err(GapRiskError::Data { line: 1, .. })
        ));
    }

    #[test]
    fn window_slicing() {
        let s = PriceSeries::new((0..10).map(day).collect(), (1..=10).map(f64::from).collect()).unwrap();
        let w = s.between(day(2), day(4));
        assert_eq!(w.prices(), &[3.0, 4.0, 5.0]);
    }
}
