//! Market-data ingestion and model fitting.

mod dejd_fit;
mod logou_fit;
mod series;
mod var;

pub use dejd_fit::{dejd_density, dejd_log_likelihood, fit_dejd, gaussian_fit, DejdFit, DensityGrid};
pub use logou_fit::{fit_logou, LogOuFit};
pub use series::{log_returns, read_price_csv, read_spread_csv, PriceSeries, SpreadSeries};
pub use var::{empirical_quantile, historical_var};
