//! Dispatch of a validated configuration to the engine, and report files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gaprisk_core::capital::{
    maturity_sweep, min_haircut_for_charge, regulatory_capital, sensitivities, solve_with_engine, total_charge_curve,
    ChargeBasis, ChargeRow, RatingTarget, Scenario, SensitivityRow, BP,
};
use gaprisk_core::credit::{bootstrap_hazard, calibrate_lambda0, price_cds, LogOuParams};
use gaprisk_core::dejd::{DejdParams, TRADING_DAYS};
use gaprisk_core::estimation::{fit_dejd, fit_logou, historical_var, log_returns, read_price_csv, read_spread_csv, PriceSeries};
use gaprisk_core::loss::{CreditSpec, RepoTerms};
use gaprisk_core::mc::McConfig;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CollateralConfig, CreditConfig, DateWindow, RunConfig, ScenarioConfig};
use crate::error::CliError;

/// One CSV table of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub bytes: Vec<u8>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Resolved model inputs, echoed into the manifest.
    pub model: Value,
}

/// Command-line overrides of the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            config.mc.seed = s;
        }
        if let Some(n) = self.paths {
            config.mc.n_paths = n;
        }
    }
}

fn table<R: Serialize>(file: &str, rows: &[R]) -> Result<Table, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(format!("writing csv: {e}")))?;
    let header = csv::Reader::from_reader(bytes.as_slice())
        .headers()
        .map(|h| h.iter().map(String::from).collect())
        .unwrap_or_default();
    Ok(Table {
        file: file.to_string(),
        header,
        bytes,
        rows: rows.len(),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_prices(base: &Path, path: &Path, window: &DateWindow) -> Result<PriceSeries, CliError> {
    let s = read_price_csv(resolve(base, path))?;
    Ok(match (window.from, window.to) {
        (None, None) => s,
        (from, to) => s.between(from.unwrap_or(chrono::NaiveDate::MIN), to.unwrap_or(chrono::NaiveDate::MAX)),
    })
}

fn dejd_from(config: &ScenarioConfig, base: &Path) -> Result<(DejdParams, Value), CliError> {
    match config.collateral.as_ref() {
        None => Err(CliError::config("`collateral` is required for this run kind")),
        Some(CollateralConfig::Preset { name }) => match name.as_str() {
            "spx-2008-2013" => Ok((DejdParams::spx_2008_2013(), json!({"preset": name}))),
            other => Err(CliError::config(format!("unknown collateral preset `{other}`"))),
        },
        Some(CollateralConfig::Params(p)) => {
            p.validate()?;
            Ok((*p, json!({"params": p})))
        }
        Some(CollateralConfig::PriceCsv { path, window, dt_days }) => {
            let prices = load_prices(base, path, window)?;
            let returns = log_returns(&prices, 1)?;
            let fit = fit_dejd(&returns, dt_days / TRADING_DAYS)?;
            Ok((fit.params, json!({"fitted": fit})))
        }
    }
}

fn credit_from(credit: &CreditConfig, mc: &McConfig) -> Result<(CreditSpec, Value), CliError> {
    match credit {
        CreditConfig::LogouParams {
            k,
            sigma_c,
            lambda_0,
            y_bar,
        } => {
            let p = LogOuParams::new(*k, y_bar.unwrap_or(lambda_0.ln()), *sigma_c, *lambda_0)?;
            Ok((CreditSpec::LogOu(p), json!({"logou": p})))
        }
        CreditConfig::CdsQuotesToBootstrap { quotes, recovery } => {
            let q: Vec<(f64, f64)> = quotes.iter().map(|q| (q.tenor, q.spread)).collect();
            let curve = bootstrap_hazard(&q, *recovery)?;
            Ok((CreditSpec::Curve(curve.clone()), json!({"hazard_curve": curve})))
        }
        CreditConfig::CalibrateToLevel {
            k,
            sigma_c,
            tenor,
            spread,
            recovery,
        } => {
            let p = calibrate_lambda0(*k, *sigma_c, *tenor, *spread, *recovery, mc)?;
            Ok((CreditSpec::LogOu(p), json!({"logou": p, "calibrated_to": {"tenor": tenor, "spread": spread}})))
        }
        CreditConfig::AssetOnly => Ok((CreditSpec::AssetOnly, json!("asset-only"))),
    }
}

#[derive(Serialize)]
struct HaircutRow<'a> {
    label: &'a str,
    correlation: f64,
    mpr_days: f64,
    haircut: f64,
    metric: f64,
    metric_stderr: f64,
    level: f64,
    default_probability: f64,
    default_probability_stderr: f64,
}

#[derive(Serialize)]
struct PriceRow {
    tenor: f64,
    spread: f64,
    spread_stderr: f64,
}

#[derive(Serialize)]
struct TenorRow<'a> {
    curve: &'a str,
    tenor_days: f64,
    haircut: f64,
    metric: f64,
    metric_stderr: f64,
    level: f64,
}

#[derive(Serialize)]
struct SweepRow {
    haircut: f64,
    el: f64,
    el_stderr: f64,
    var_q: f64,
    var_stderr: f64,
    es_q: f64,
    es_stderr: f64,
    ec: f64,
    ec_stderr: f64,
    capital_charge: f64,
    capital_charge_stderr: f64,
    total_charge: f64,
    total_charge_stderr: f64,
    regulatory_capital: Option<f64>,
}

impl SweepRow {
    fn new(c: ChargeRow, regulatory_capital: Option<f64>) -> Self {
        Self {
            haircut: c.haircut,
            el: c.el,
            el_stderr: c.el_stderr,
            var_q: c.var_q,
            var_stderr: c.var_stderr,
            es_q: c.es_q,
            es_stderr: c.es_stderr,
            ec: c.ec,
            ec_stderr: c.ec_stderr,
            capital_charge: c.capital_charge,
            capital_charge_stderr: c.capital_charge_stderr,
            total_charge: c.total_charge,
            total_charge_stderr: c.total_charge_stderr,
            regulatory_capital,
        }
    }
}

#[derive(Serialize)]
struct MinHaircutRow {
    basis: ChargeBasis,
    charge_limit: f64,
    min_haircut: f64,
    charge: f64,
    charge_stderr: f64,
}

#[derive(Serialize)]
struct DejdRow {
    mu: f64,
    sigma: f64,
    jump_intensity: f64,
    p_up: f64,
    eta_up: f64,
    eta_down: f64,
    log_likelihood: f64,
    gaussian_log_likelihood: f64,
    converged: bool,
    iterations: u64,
    observations: usize,
}

#[derive(Serialize)]
struct LogOuRow {
    k: f64,
    y_bar: f64,
    sigma_c: f64,
    lambda_0: f64,
    intercept: f64,
    slope: f64,
    residual_sd: f64,
    observations: usize,
    y_bar_identified: bool,
}

#[derive(Serialize)]
struct VarRow {
    window_days: usize,
    confidence: f64,
    var: f64,
    observations: usize,
}

/// Runs `config`; relative data paths resolve against `base`.
pub fn execute(config: &ScenarioConfig, base: &Path) -> Result<Report, CliError> {
    config.validate()?;
    let mc = config.mc.mc_config();
    let terms = config.terms.repo_terms();
    let tail = config.tail;
    let mut model = serde_json::Map::new();
    let mut tables = Vec::new();

    // Collateral is resolved once, as it may involve a likelihood fit.
    let collateral = std::cell::OnceCell::new();
    let scenario = |credit: &CreditConfig, model: &mut serde_json::Map<String, Value>, key: &str| {
        if collateral.get().is_none() {
            let _ = collateral.set(dejd_from(config, base)?);
        }
        let (dejd, dejd_info) = collateral.get().expect("set above").clone();
        let (credit, credit_info) = credit_from(credit, &mc)?;
        model.entry("collateral").or_insert(dejd_info);
        model.insert(key.to_string(), credit_info);
        Ok::<_, CliError>(Scenario {
            terms,
            dejd,
            credit,
            mc,
        })
    };

    match &config.run {
        RunConfig::Haircut {
            ladder,
            correlations,
            mpr_days,
        } => {
            let target = config.target.as_ref().expect("validated").resolve()?;
            let credits: Vec<(String, CreditConfig)> = match ladder {
                Some(l) => l.iter().map(|c| (c.label.clone(), c.credit.clone())).collect(),
                None => vec![(String::new(), config.credit.clone().expect("validated"))],
            };
            let rhos = correlations.clone().unwrap_or_else(|| vec![terms.correlation]);
            let mprs = mpr_days.clone().unwrap_or_else(|| vec![config.terms.mpr_days]);
            let mut rows = Vec::new();
            let mut solved = Vec::new();
            for (label, credit) in &credits {
                let key = if label.is_empty() { "credit".to_string() } else { format!("credit:{label}") };
                let base_scenario = scenario(credit, &mut model, &key)?;
                for &d in &mprs {
                    for &rho in &rhos {
                        let s = Scenario {
                            terms: RepoTerms {
                                correlation: rho,
                                mpr: d / TRADING_DAYS,
                                ..terms
                            },
                            ..base_scenario.clone()
                        };
                        let engine = s.engine()?;
                        let sol = solve_with_engine(&engine, &target, &tail)?;
                        let pd = engine.paths().default_probability();
                        solved.push((label.clone(), rho, d, sol.haircut, sol.metric, sol.stderr, sol.level, pd));
                    }
                }
            }
            for (label, correlation, mpr_days, haircut, metric, metric_stderr, level, pd) in &solved {
                rows.push(HaircutRow {
                    label,
                    correlation: *correlation,
                    mpr_days: *mpr_days,
                    haircut: *haircut,
                    metric: *metric,
                    metric_stderr: *metric_stderr,
                    level: *level,
                    default_probability: pd.value,
                    default_probability_stderr: pd.stderr,
                });
            }
            model.insert("target".into(), json!(target));
            tables.push(table("results.csv", &rows)?);
        }
        RunConfig::Ec { haircuts, roe } => {
            let s = scenario(config.credit.as_ref().expect("validated"), &mut model, "credit")?;
            let rows = total_charge_curve(&s.engine()?, haircuts, &tail, *roe)?;
            tables.push(table("results.csv", &rows)?);
        }
        RunConfig::Price { tenors } => {
            let (credit, info) = credit_from(config.credit.as_ref().expect("validated"), &mc)?;
            model.insert("credit".into(), info);
            let rows = tenors
                .iter()
                .map(|&t| match &credit {
                    CreditSpec::LogOu(p) => {
                        let c = price_cds(p, t, terms.recovery, &mc)?;
                        Ok(PriceRow {
                            tenor: t,
                            spread: c.spread,
                            spread_stderr: c.stderr,
                        })
                    }
                    CreditSpec::Curve(c) => Ok(PriceRow {
                        tenor: t,
                        spread: c.par_spread(t, terms.recovery),
                        spread_stderr: 0.0,
                    }),
                    CreditSpec::AssetOnly => Err(CliError::config("price: asset-only credit has no CDS spread")),
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            tables.push(table("results.csv", &rows)?);
        }
        RunConfig::SweepTenor { tenors_days, curves } => {
            let s = scenario(config.credit.as_ref().expect("validated"), &mut model, "credit")?;
            let tenors: Vec<f64> = tenors_days.iter().map(|d| d / TRADING_DAYS).collect();
            let mut rows_owned = Vec::new();
            let mut targets = serde_json::Map::new();
            for c in curves {
                let target = c.target.resolve()?;
                let anchor = c.normalize_to.as_ref().map(|n| n.resolve()).transpose()?;
                let (points, used): (_, RatingTarget) = maturity_sweep(&s, &tenors, &target, &tail, anchor.as_ref())?;
                targets.insert(c.label.clone(), json!(used));
                for (p, d) in points.iter().zip(tenors_days) {
                    rows_owned.push((c.label.clone(), *d, *p, used.level_at(p.tenor)));
                }
            }
            let rows: Vec<TenorRow> = rows_owned
                .iter()
                .map(|(label, d, p, level)| TenorRow {
                    curve: label,
                    tenor_days: *d,
                    haircut: p.haircut,
                    metric: p.metric,
                    metric_stderr: p.stderr,
                    level: *level,
                })
                .collect();
            model.insert("targets".into(), Value::Object(targets));
            tables.push(table("results.csv", &rows)?);
        }
        RunConfig::SweepHaircut {
            haircuts,
            roe,
            regulatory,
            charge_limit_bp,
        } => {
            let s = scenario(config.credit.as_ref().expect("validated"), &mut model, "credit")?;
            let engine = s.engine()?;
            let grid = haircuts.points()?;
            let rows = total_charge_curve(&engine, &grid, &tail, *roe)?
                .into_iter()
                .map(|charge| {
                    let regulatory_capital = regulatory.map(|r| regulatory_capital(charge.haircut, &r)).transpose()?;
                    Ok(SweepRow::new(charge, regulatory_capital))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            if let Some(r) = regulatory {
                model.insert("risk_weight".into(), json!(r.risk_weight()?));
            }
            tables.push(table("results.csv", &rows)?);
            if let Some(limit) = charge_limit_bp {
                let level = limit * BP;
                let mins = [ChargeBasis::ElOnly, ChargeBasis::CvarPlusEl, ChargeBasis::EsPlusEl]
                    .iter()
                    .map(|&basis| {
                        let sol = min_haircut_for_charge(&engine, basis, tail.q, *roe, level)?;
                        Ok(MinHaircutRow {
                            basis,
                            charge_limit: level,
                            min_haircut: sol.haircut,
                            charge: sol.metric,
                            charge_stderr: sol.stderr,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                tables.push(table("min_haircuts.csv", &mins)?);
            }
        }
        RunConfig::Sensitivities { haircut, bumps } => {
            let s = scenario(config.credit.as_ref().expect("validated"), &mut model, "credit")?;
            let rows: Vec<SensitivityRow> = sensitivities(&s.engine()?, *haircut, tail.q, bumps, &mc)?;
            tables.push(table("results.csv", &rows)?);
        }
        RunConfig::EstimateDejd {
            price_csv,
            window,
            dt_days,
        } => {
            let prices = load_prices(base, price_csv, window)?;
            let returns = log_returns(&prices, 1)?;
            let fit = fit_dejd(&returns, dt_days / TRADING_DAYS)?;
            let p = fit.params;
            tables.push(table(
                "results.csv",
                &[DejdRow {
                    mu: p.mu,
                    sigma: p.sigma,
                    jump_intensity: p.jump_intensity,
                    p_up: p.p_up,
                    eta_up: p.eta_up,
                    eta_down: p.eta_down,
                    log_likelihood: fit.log_likelihood,
                    gaussian_log_likelihood: fit.gaussian_log_likelihood,
                    converged: fit.converged,
                    iterations: fit.iterations,
                    observations: returns.len(),
                }],
            )?);
        }
        RunConfig::EstimateLogou {
            spread_csv,
            window,
            dt_days,
            recovery,
            tenor_label,
        } => {
            let mut s = read_spread_csv(resolve(base, spread_csv), tenor_label)?;
            if window.from.is_some() || window.to.is_some() {
                let from = window.from.unwrap_or(chrono::NaiveDate::MIN);
                let to = window.to.unwrap_or(chrono::NaiveDate::MAX);
                let keep: Vec<usize> = (0..s.len()).filter(|&i| s.dates()[i] >= from && s.dates()[i] <= to).collect();
                s = gaprisk_core::estimation::SpreadSeries::new(
                    keep.iter().map(|&i| s.dates()[i]).collect(),
                    keep.iter().map(|&i| s.spreads()[i]).collect(),
                    tenor_label.as_str(),
                )?;
            }
            let fit = fit_logou(&s, dt_days / TRADING_DAYS, *recovery)?;
            tables.push(table(
                "results.csv",
                &[LogOuRow {
                    k: fit.params.k,
                    y_bar: fit.params.y_bar,
                    sigma_c: fit.params.sigma_c,
                    lambda_0: fit.params.lambda_0,
                    intercept: fit.intercept,
                    slope: fit.slope,
                    residual_sd: fit.residual_sd,
                    observations: fit.observations,
                    y_bar_identified: fit.y_bar_identified,
                }],
            )?);
        }
        RunConfig::HistoricalVar {
            price_csv,
            window,
            windows_days,
            confidence,
        } => {
            let prices = load_prices(base, price_csv, window)?;
            let rows = windows_days
                .iter()
                .map(|&n| {
                    Ok(VarRow {
                        window_days: n,
                        confidence: *confidence,
                        var: historical_var(&prices, n, *confidence)?,
                        observations: prices.len().saturating_sub(n),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            tables.push(table("results.csv", &rows)?);
        }
    }
    model.insert("tail".into(), json!(tail));
    Ok(Report {
        tables,
        model: Value::Object(model),
    })
}

/// Largest value of every `*_stderr` column.
fn stderr_summary(t: &Table) -> Value {
    let mut out = serde_json::Map::new();
    let mut rdr = csv::Reader::from_reader(t.bytes.as_slice());
    let cols: Vec<(usize, String)> = t
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.ends_with("_stderr"))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    let mut max = vec![0.0f64; cols.len()];
    for rec in rdr.records().flatten() {
        for (m, (i, _)) in max.iter_mut().zip(&cols) {
            if let Some(v) = rec.get(*i).and_then(|s| s.parse::<f64>().ok()) {
                *m = m.max(v);
            }
        }
    }
    for ((_, name), m) in cols.iter().zip(max) {
        out.insert(name.clone(), json!(m));
    }
    Value::Object(out)
}

/// Loads, runs and writes one configuration; returns the output directory.
pub fn run_file(config_path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut config = ScenarioConfig::load(config_path)?;
    overrides.apply(&mut config);
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (out, &config.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => PathBuf::from("out").join(&config.name),
    };
    let started = Instant::now();
    let report = execute(&config, &base)?;
    let wall = started.elapsed().as_secs_f64();
    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();
    for t in &report.tables {
        std::fs::write(out_dir.join(&t.file), &t.bytes)?;
        outputs.push(json!({
            "file": t.file,
            "rows": t.rows,
            "columns": t.header,
            "max_stderr": stderr_summary(t),
        }));
    }
    let manifest = json!({
        "name": config.name,
        "run_kind": config.run.kind(),
        "engine_version": env!("CARGO_PKG_VERSION"),
        "seed": config.mc.seed,
        "n_paths": config.mc.n_paths,
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "outputs": outputs,
        "model": report.model,
        "config": config,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(out_dir)
}

/// Parses and checks a configuration, including data file presence.
pub fn validate_file(config_path: &Path) -> Result<ScenarioConfig, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    config.validate()?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut files = Vec::new();
    if let Some(CollateralConfig::PriceCsv { path, .. }) = &config.collateral {
        files.push(path.clone());
    }
    match &config.run {
        RunConfig::EstimateDejd { price_csv, .. } | RunConfig::HistoricalVar { price_csv, .. } => {
            files.push(price_csv.clone())
        }
        RunConfig::EstimateLogou { spread_csv, .. } => files.push(spread_csv.clone()),
        _ => {}
    }
    for f in files {
        let p = resolve(&base, &f);
        if !p.is_file() {
            return Err(CliError::data(format!("data file {} not found", p.display())));
        }
    }
    Ok(config)
}
