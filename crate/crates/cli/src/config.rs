//! JSON scenario configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use gaprisk_core::capital::{Bump, RatingTarget, RegulatoryInputs, TailSpec, TargetKind, BP};
use gaprisk_core::dejd::{DejdParams, TRADING_DAYS};
use gaprisk_core::laplace::InversionConfig;
use gaprisk_core::loss::{RepoTerms, Side};
use gaprisk_core::mc::McConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collateral: Option<CollateralConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credit: Option<CreditConfig>,
    #[serde(default)]
    pub terms: TermsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub tail: TailSpec,
    pub mc: McSettings,
    pub run: RunConfig,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CollateralConfig {
    Preset { name: String },
    Params(DejdParams),
    /// Parameters fitted by maximum likelihood to a price history.
    PriceCsv {
        path: PathBuf,
        #[serde(default)]
        window: DateWindow,
        #[serde(default = "one")]
        dt_days: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateWindow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CreditConfig {
    LogouParams {
        k: f64,
        sigma_c: f64,
        lambda_0: f64,
        /// Defaults to `ln(lambda_0)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_bar: Option<f64>,
    },
    CdsQuotesToBootstrap {
        quotes: Vec<CdsQuote>,
        #[serde(default = "default_recovery")]
        recovery: f64,
    },
    /// Log-OU intensity with `lambda_0` solved to reprice one CDS quote.
    CalibrateToLevel {
        k: f64,
        sigma_c: f64,
        tenor: f64,
        spread: f64,
        #[serde(default = "default_recovery")]
        recovery: f64,
    },
    /// Default at time zero with certainty.
    AssetOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdsQuote {
    pub tenor: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCredit {
    pub label: String,
    #[serde(flatten)]
    pub credit: CreditConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermsConfig {
    pub haircut: f64,
    pub tenor: f64,
    pub mpr_days: f64,
    pub liquidity_discount: f64,
    pub recovery: f64,
    pub correlation: f64,
    pub side: Side,
}

impl Default for TermsConfig {
    fn default() -> Self {
        Self {
            haircut: 0.0,
            tenor: 1.0,
            mpr_days: 10.0,
            liquidity_discount: 0.0,
            recovery: default_recovery(),
            correlation: 0.0,
            side: Side::CashLender,
        }
    }
}

impl TermsConfig {
    pub fn repo_terms(&self) -> RepoTerms {
        RepoTerms {
            haircut: self.haircut,
            tenor: self.tenor,
            mpr: self.mpr_days / TRADING_DAYS,
            liquidity_discount: self.liquidity_discount,
            recovery: self.recovery,
            correlation: self.correlation,
            side: self.side,
        }
    }
}

/// Either a built-in rating (`Aa2`, `A`, `Baa2`) or an explicit target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TargetKind>,
    /// Probability, EL rate or EC per unit principal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// The same level in basis points of principal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_bp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TargetConfig {
    pub fn resolve(&self) -> Result<RatingTarget, CliError> {
        match (&self.rating, self.kind) {
            (Some(r), None) => {
                if self.level.is_some() || self.level_bp.is_some() {
                    return Err(CliError::config("target: `rating` excludes `level` and `level_bp`"));
                }
                RatingTarget::builtin(r).ok_or_else(|| CliError::config(format!("target: unknown rating `{r}`")))
            }
            (None, Some(kind)) => {
                let level = match (self.level, self.level_bp) {
                    (Some(l), None) => l,
                    (None, Some(b)) => b * BP,
                    _ => return Err(CliError::config("target: give exactly one of `level` and `level_bp`")),
                };
                let label = self.label.clone().unwrap_or_default();
                Ok(RatingTarget::new(kind, level, label)?)
            }
            _ => Err(CliError::config("target: give exactly one of `rating` and `kind`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Required: runs are never seeded from the clock.
    pub seed: u64,
    #[serde(default = "default_grid_days")]
    pub grid_step_days: f64,
    #[serde(default)]
    pub inversion: InversionConfig,
}

impl McSettings {
    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_paths: self.n_paths,
            seed: self.seed,
            grid_step: self.grid_step_days / TRADING_DAYS,
            inversion: self.inversion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunConfig {
    /// Haircut solves over optional credit, correlation and margin-period
    /// ladders; the top-level credit is used when `ladder` is absent.
    Haircut {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ladder: Option<Vec<LabeledCredit>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correlations: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mpr_days: Option<Vec<f64>>,
    },
    /// Loss and capital figures at a few haircuts.
    Ec { haircuts: Vec<f64>, roe: f64 },
    /// CDS par spreads implied by the credit model.
    Price { tenors: Vec<f64> },
    SweepTenor { tenors_days: Vec<f64>, curves: Vec<CurveSpec> },
    /// Charge curve along a haircut grid, with optional regulatory capital
    /// and minimum haircuts that keep each charge under a limit.
    SweepHaircut {
        haircuts: HaircutGrid,
        roe: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regulatory: Option<RegulatoryInputs>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        charge_limit_bp: Option<f64>,
    },
    Sensitivities { haircut: f64, bumps: Vec<Bump> },
    EstimateDejd {
        price_csv: PathBuf,
        #[serde(default)]
        window: DateWindow,
        #[serde(default = "one")]
        dt_days: f64,
    },
    EstimateLogou {
        spread_csv: PathBuf,
        #[serde(default)]
        window: DateWindow,
        #[serde(default = "one")]
        dt_days: f64,
        #[serde(default = "default_recovery")]
        recovery: f64,
        #[serde(default = "default_tenor_label")]
        tenor_label: String,
    },
    HistoricalVar {
        price_csv: PathBuf,
        #[serde(default)]
        window: DateWindow,
        windows_days: Vec<usize>,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
}

impl RunConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            RunConfig::Haircut { .. } => "haircut",
            RunConfig::Ec { .. } => "ec",
            RunConfig::Price { .. } => "price",
            RunConfig::SweepTenor { .. } => "sweep-tenor",
            RunConfig::SweepHaircut { .. } => "sweep-haircut",
            RunConfig::Sensitivities { .. } => "sensitivities",
            RunConfig::EstimateDejd { .. } => "estimate-dejd",
            RunConfig::EstimateLogou { .. } => "estimate-logou",
            RunConfig::HistoricalVar { .. } => "historical-var",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub target: TargetConfig,
    /// Sets an EC target to its value at the one-year haircut of this target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_to: Option<TargetConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HaircutGrid {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl HaircutGrid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match self {
            HaircutGrid::List(v) if !v.is_empty() => Ok(v.clone()),
            HaircutGrid::List(_) => Err(CliError::config("haircuts: empty list")),
            HaircutGrid::Range { from, to, step } => {
                if !(*step > 0.0) || !(to >= from) {
                    return Err(CliError::config("haircuts: need step > 0 and to >= from"));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| from + i as f64 * step).collect())
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_recovery() -> f64 {
    0.4
}

fn default_paths() -> usize {
    McConfig::default().n_paths
}

fn default_grid_days() -> f64 {
    TRADING_DAYS / 52.0
}

fn default_confidence() -> f64 {
    0.99
}

fn default_tenor_label() -> String {
    "1y".into()
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    /// Checks that the parts the run kind needs are present and well formed,
    /// without touching data files.
    pub fn validate(&self) -> Result<(), CliError> {
        self.mc.mc_config().validate()?;
        self.terms.repo_terms().validate()?;
        if let Some(t) = &self.target {
            t.resolve()?;
        }
        let needs_model = !matches!(
            self.run,
            RunConfig::EstimateDejd { .. } | RunConfig::EstimateLogou { .. } | RunConfig::HistoricalVar { .. }
        );
        if needs_model && self.collateral.is_none() && !matches!(self.run, RunConfig::Price { .. }) {
            return Err(CliError::config(format!("run kind `{}` needs `collateral`", self.run.kind())));
        }
        match &self.run {
            RunConfig::Haircut { ladder, .. } => {
                self.require_target()?;
                match ladder {
                    Some(l) if l.is_empty() => return Err(CliError::config("ladder: empty")),
                    Some(_) if self.credit.is_some() => {
                        return Err(CliError::config("give either `credit` or `run.ladder`, not both"))
                    }
                    Some(_) => {}
                    None => {
                        self.require_credit()?;
                    }
                }
            }
            RunConfig::Ec { haircuts, .. } => {
                self.require_credit()?;
                if haircuts.is_empty() {
                    return Err(CliError::config("haircuts: empty list"));
                }
            }
            RunConfig::Price { tenors } => {
                self.require_credit()?;
                if tenors.is_empty() {
                    return Err(CliError::config("tenors: empty list"));
                }
            }
            RunConfig::SweepTenor { tenors_days, curves } => {
                self.require_credit()?;
                if tenors_days.is_empty() || curves.is_empty() {
                    return Err(CliError::config("sweep-tenor needs tenors and curves"));
                }
                for c in curves {
                    c.target.resolve()?;
                    if let Some(n) = &c.normalize_to {
                        n.resolve()?;
                    }
                }
            }
            RunConfig::SweepHaircut { haircuts, regulatory, .. } => {
                self.require_credit()?;
                haircuts.points()?;
                if let Some(r) = regulatory {
                    r.validate()?;
                }
            }
            RunConfig::Sensitivities { bumps, .. } => {
                self.require_credit()?;
                if bumps.is_empty() {
                    return Err(CliError::config("bumps: empty list"));
                }
            }
            RunConfig::HistoricalVar { windows_days, .. } => {
                if windows_days.is_empty() || windows_days.contains(&0) {
                    return Err(CliError::config("windows_days: need positive windows"));
                }
            }
            RunConfig::EstimateDejd { .. } | RunConfig::EstimateLogou { .. } => {}
        }
        Ok(())
    }

    fn require_credit(&self) -> Result<&CreditConfig, CliError> {
        self.credit
            .as_ref()
            .ok_or_else(|| CliError::config(format!("run kind `{}` needs `credit`", self.run.kind())))
    }

    fn require_target(&self) -> Result<RatingTarget, CliError> {
        self.target
            .as_ref()
            .ok_or_else(|| CliError::config(format!("run kind `{}` needs `target`", self.run.kind())))?
            .resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorClass;

    fn minimal(run: &str) -> String {
        format!(
            r#"{{"name": "t", "collateral": {{"source": "preset", "name": "spx-2008-2013"}},
                "credit": {{"mode": "asset-only"}}, "target": {{"rating": "Aa2"}},
                "mc": {{"seed": 3}}, "run": {run}}}"#
        )
    }

    #[test]
    fn defaults_fill_terms_and_mc() {
        let c = ScenarioConfig::parse(&minimal(r#"{"kind": "haircut"}"#)).unwrap();
        c.validate().unwrap();
        assert_eq!(c.terms, TermsConfig::default());
        assert_eq!(c.mc.n_paths, 10_000);
        assert_eq!(c.run.kind(), "haircut");
        let t = c.terms.repo_terms();
        assert!((t.mpr - 10.0 / 252.0).abs() < 1e-15);
        assert!((c.mc.mc_config().grid_step - 1.0 / 52.0).abs() < 1e-15);
    }

    #[test]
    fn range_grid_includes_both_ends() {
        let g = HaircutGrid::Range {
            from: 0.0,
            to: 0.2,
            step: 0.01,
        };
        let p = g.points().unwrap();
        assert_eq!(p.len(), 21);
        assert!((p[20] - 0.2).abs() < 1e-12);
        assert!(HaircutGrid::List(vec![]).points().is_err());
        assert!(HaircutGrid::Range { from: 0.1, to: 0.0, step: 0.01 }.points().is_err());
    }

    #[test]
    fn target_forms() {
        let bp = TargetConfig {
            kind: Some(TargetKind::ExpectedLoss),
            level_bp: Some(0.031),
            ..TargetConfig::default()
        };
        assert!((bp.resolve().unwrap().level - 0.031e-4).abs() < 1e-18);
        let both = TargetConfig {
            rating: Some("Aa2".into()),
            level: Some(1e-5),
            ..TargetConfig::default()
        };
        assert_eq!(both.resolve().unwrap_err().class, ErrorClass::Config);
        let unknown = TargetConfig {
            rating: Some("Zz9".into()),
            ..TargetConfig::default()
        };
        assert!(unknown.resolve().is_err());
        assert!(TargetConfig::default().resolve().is_err());
    }

    #[test]
    fn structural_checks() {
        let no_target = minimal(r#"{"kind": "haircut"}"#).replace(r#""target": {"rating": "Aa2"},"#, "");
        assert!(ScenarioConfig::parse(&no_target).unwrap().validate().is_err());
        let empty = minimal(r#"{"kind": "ec", "haircuts": [], "roe": 0.1}"#);
        assert!(ScenarioConfig::parse(&empty).unwrap().validate().is_err());
        assert!(ScenarioConfig::parse(&minimal(r#"{"kind": "nope"}"#)).is_err());
    }
}
