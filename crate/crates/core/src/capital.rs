//! Haircut solvers, economic capital, charges and regulatory capital.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dejd::DejdParams;
use crate::error::{invalid, GapRiskError, Result};
use crate::loss::{loss_es, loss_var, CreditSpec, LossDistribution, LossEngine, RepoTerms};
use crate::mc::McConfig;

/// Haircut bracket and tolerance of every solver.
pub const HAIRCUT_MAX: f64 = 0.999;
pub const HAIRCUT_TOL: f64 = 1e-4;

/// One basis point.
pub const BP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    FirstDollarPd,
    ExpectedLoss,
    EconomicCapital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTarget {
    pub kind: TargetKind,
    /// Probability, per-annum EL rate or EC per unit principal.
    pub level: f64,
    #[serde(default)]
    pub label: String,
}

impl RatingTarget {
    pub fn new(kind: TargetKind, level: f64, label: impl Into<String>) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(invalid("level", format!("must be > 0, got {level}")));
        }
        Ok(Self {
            kind,
            level,
            label: label.into(),
        })
    }

    pub fn expected_loss(level: f64, label: &str) -> Self {
        Self {
            kind: TargetKind::ExpectedLoss,
            level,
            label: label.to_string(),
        }
    }

    /// One-year loss rate of 0.075 bp.
    pub fn aa2() -> Self {
        Self::expected_loss(0.075 * BP, "Aa2")
    }

    pub fn a() -> Self {
        Self::expected_loss(0.598 * BP, "A")
    }

    pub fn baa2() -> Self {
        Self::expected_loss(9.35 * BP, "Baa2")
    }

    /// Built-in EL target by rating label.
    pub fn builtin(label: &str) -> Option<Self> {
        match label {
            "Aa2" => Some(Self::aa2()),
            "A" => Some(Self::a()),
            "Baa2" => Some(Self::baa2()),
            _ => None,
        }
    }

    /// Level applied at `tenor`: PD and EL rates scale linearly with the
    /// tenor, EC levels do not.
    pub fn level_at(&self, tenor: f64) -> f64 {
        match self.kind {
            TargetKind::FirstDollarPd | TargetKind::ExpectedLoss => self.level * tenor,
            TargetKind::EconomicCapital => self.level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMeasure {
    Cvar,
    Es,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalResult {
    pub el: f64,
    pub var_q: f64,
    pub es_q: f64,
    pub ec: f64,
    pub capital_charge: f64,
    pub total_charge: f64,
    pub q: f64,
    pub roe: f64,
    pub measure: TailMeasure,
}

/// Capital figures from a tabulated distribution, VaR read off its grid.
pub fn economic_capital(dist: &LossDistribution, q: f64, measure: TailMeasure, roe: f64) -> Result<CapitalResult> {
    let var_q = loss_var(dist, q)?;
    let es_q = loss_es(dist, q)?;
    capital_from(dist.el, var_q, es_q, q, measure, roe)
}

/// Capital figures at haircut `h` with VaR solved off the loss grid.
pub fn engine_capital(
    engine: &LossEngine,
    h: f64,
    grid: &[f64],
    q: f64,
    measure: TailMeasure,
    roe: f64,
) -> Result<(CapitalResult, LossDistribution)> {
    let dist = engine.distribution(h, grid)?;
    let m = engine.tail_measures(h, q, &dist)?;
    Ok((capital_from(dist.el, m.var, m.es, q, measure, roe)?, dist))
}

fn capital_from(el: f64, var_q: f64, es_q: f64, q: f64, measure: TailMeasure, roe: f64) -> Result<CapitalResult> {
    if !(roe > 0.0) {
        return Err(invalid("roe", format!("must be > 0, got {roe}")));
    }
    let tail = match measure {
        TailMeasure::Cvar => var_q,
        TailMeasure::Es => es_q,
    };
    let ec = (tail - el).max(0.0);
    let capital_charge = roe * ec;
    Ok(CapitalResult {
        el,
        var_q,
        es_q,
        ec,
        capital_charge,
        total_charge: el + capital_charge,
        q,
        roe,
        measure,
    })
}

pub fn ec_target_from_el(el_level: f64, roe: f64) -> Result<f64> {
    if !(roe > 0.0) {
        return Err(invalid("roe", format!("must be > 0, got {roe}")));
    }
    Ok(el_level / roe)
}

/// Everything a haircut solve needs apart from the haircut itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub terms: RepoTerms,
    pub dejd: DejdParams,
    pub credit: CreditSpec,
    pub mc: McConfig,
}

impl Scenario {
    pub fn engine(&self) -> Result<LossEngine> {
        LossEngine::new(&self.terms, &self.dejd, &self.credit, &self.mc)
    }

    pub fn with_tenor(&self, tenor: f64) -> Self {
        Self {
            terms: RepoTerms { tenor, ..self.terms },
            ..self.clone()
        }
    }
}

/// Tail settings of EC-based metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailSpec {
    pub q: f64,
    pub measure: TailMeasure,
}

impl Default for TailSpec {
    fn default() -> Self {
        Self {
            q: 0.999,
            measure: TailMeasure::Es,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaircutSolution {
    pub haircut: f64,
    /// Metric at the returned haircut.
    pub metric: f64,
    pub stderr: f64,
    /// Level the metric was held to (after tenor scaling).
    pub level: f64,
}

/// Metric of `target` at haircut `h` with its standard error.
pub fn target_metric(engine: &LossEngine, target: &RatingTarget, tail: &TailSpec, h: f64) -> Result<(f64, f64)> {
    match target.kind {
        TargetKind::ExpectedLoss => {
            let e = engine.expected_loss(h)?;
            Ok((e.value, e.stderr))
        }
        TargetKind::FirstDollarPd => {
            let e = engine.tail_probability(h, 0.0)?;
            Ok((e.value, e.stderr))
        }
        TargetKind::EconomicCapital => {
            let (cap, dist) = engine_capital(engine, h, &engine.default_grid(), tail.q, tail.measure, 1.0)?;
            Ok((cap.ec, dist.mc_stderr))
        }
    }
}

/// Infimum of `h` in `[0, HAIRCUT_MAX]` with `metric(h) <= level` for a
/// non-increasing metric, by bisection to `HAIRCUT_TOL`. Departures from
/// monotonicity up to `noise` are tolerated.
pub fn solve_monotone<F>(metric: F, level: f64, noise: f64) -> Result<HaircutSolution>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let (m_hi, se_hi) = metric(HAIRCUT_MAX)?;
    if m_hi > level {
        return Err(GapRiskError::Unattainable(format!(
            "metric {m_hi:e} at haircut {HAIRCUT_MAX} still above level {level:e}"
        )));
    }
    let (m_lo, se_lo) = metric(0.0)?;
    if m_lo <= level {
        return Ok(HaircutSolution {
            haircut: 0.0,
            metric: m_lo,
            stderr: se_lo,
            level,
        });
    }
    let slack = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs()) + noise;
    let (mut lo, mut hi) = (0.0, HAIRCUT_MAX);
    let (mut f_lo, mut f_hi, mut se_best) = (m_lo, m_hi, se_hi);
    while hi - lo > HAIRCUT_TOL {
        let mid = 0.5 * (lo + hi);
        let (m, se) = metric(mid)?;
        if m > f_lo + slack(m, f_lo) || m < f_hi - slack(m, f_hi) {
            return Err(GapRiskError::NonMonotone(format!(
                "metric {m:e} at haircut {mid} outside [{f_hi:e}, {f_lo:e}]"
            )));
        }
        if m > level {
            lo = mid;
            f_lo = m;
        } else {
            hi = mid;
            f_hi = m;
            se_best = se;
        }
    }
    Ok(HaircutSolution {
        haircut: hi,
        metric: f_hi,
        stderr: se_best,
        level,
    })
}

/// Haircut meeting `target` at the scenario's tenor, with common random
/// numbers across the bisection.
pub fn solve_haircut(target: &RatingTarget, scenario: &Scenario, tail: &TailSpec) -> Result<HaircutSolution> {
    let engine = scenario.engine()?;
    solve_with_engine(&engine, target, tail)
}

pub fn solve_with_engine(engine: &LossEngine, target: &RatingTarget, tail: &TailSpec) -> Result<HaircutSolution> {
    let level = target.level_at(engine.terms().tenor);
    let tol = engine.inversion_tolerance();
    let noise = match target.kind {
        TargetKind::EconomicCapital => 4.0 * tol / (1.0 - tail.q),
        _ => 4.0 * tol,
    };
    solve_monotone(|h| target_metric(engine, target, tail, h), level, noise)
}

/// Basel IRB wholesale capital per unit principal of a repo at haircut `h`
/// against a supervisory haircut `hvol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulatoryInputs {
    pub hvol: f64,
    pub pd: f64,
    pub lgd: f64,
    pub maturity: f64,
    pub stressed_corr_mult: f64,
    pub multiplier: f64,
}

impl Default for RegulatoryInputs {
    fn default() -> Self {
        Self {
            hvol: 0.15,
            pd: 0.0308,
            lgd: 0.6,
            maturity: 1.0,
            stressed_corr_mult: 1.25,
            multiplier: 1.06,
        }
    }
}

impl RegulatoryInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.pd > 0.0 && self.pd < 1.0) {
            return Err(invalid("pd", format!("must lie in (0, 1), got {}", self.pd)));
        }
        if !(0.0..=1.0).contains(&self.lgd) {
            return Err(invalid("lgd", format!("must lie in [0, 1], got {}", self.lgd)));
        }
        if !(0.0..1.0).contains(&self.hvol) {
            return Err(invalid("hvol", format!("must lie in [0, 1), got {}", self.hvol)));
        }
        if !(self.maturity > 0.0) || !(self.stressed_corr_mult > 0.0) || !(self.multiplier > 0.0) {
            return Err(invalid("maturity", "maturity and multipliers must be > 0"));
        }
        Ok(())
    }

    /// IRB risk weight including the scaling multiplier.
    pub fn risk_weight(&self) -> Result<f64> {
        self.validate()?;
        let n = Normal::standard();
        let pd = self.pd;
        let a = (-(-50.0 * pd).exp_m1()) / (-(-50.0f64).exp_m1());
        let corr = self.stressed_corr_mult * (0.12 * a + 0.24 * (1.0 - a));
        let b = (0.11852 - 0.05478 * pd.ln()).powi(2);
        let m = self.maturity.max(1.0);
        let cond = n.cdf((n.inverse_cdf(pd) + corr.sqrt() * n.inverse_cdf(0.999)) / (1.0 - corr).sqrt());
        let k = (self.lgd * cond - pd * self.lgd) * (1.0 + (m - 2.5) * b) / (1.0 - 1.5 * b);
        Ok(12.5 * self.multiplier * k)
    }
}

/// Exposure `(hvol - h)^+ / (1 - h)` times 8% of the risk weight.
pub fn regulatory_capital(h: f64, inputs: &RegulatoryInputs) -> Result<f64> {
    if !(0.0..1.0).contains(&h) {
        return Err(invalid("haircut", format!("must lie in [0, 1), got {h}")));
    }
    let exposure = (inputs.hvol - h).max(0.0) / (1.0 - h);
    if exposure == 0.0 {
        inputs.validate()?;
        return Ok(0.0);
    }
    Ok(exposure * 0.08 * inputs.risk_weight()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeRow {
    pub haircut: f64,
    pub el: f64,
    pub el_stderr: f64,
    pub var_q: f64,
    pub var_stderr: f64,
    pub es_q: f64,
    pub es_stderr: f64,
    pub ec: f64,
    /// Bound `se(tail) + se(el)`, valid whatever the correlation of the two.
    pub ec_stderr: f64,
    pub capital_charge: f64,
    pub capital_charge_stderr: f64,
    pub total_charge: f64,
    pub total_charge_stderr: f64,
}

/// EL, EC and charges along a haircut grid on one frozen path set.
pub fn total_charge_curve(
    engine: &LossEngine,
    h_grid: &[f64],
    tail: &TailSpec,
    roe: f64,
) -> Result<Vec<ChargeRow>> {
    let grid = engine.default_grid();
    h_grid
        .iter()
        .map(|&h| {
            let dist = engine.distribution(h, &grid)?;
            let m = engine.tail_measures(h, tail.q, &dist)?;
            let cap = capital_from(dist.el, m.var, m.es, tail.q, tail.measure, roe)?;
            let var_stderr = engine.quantile_stderr(h, m.var)?;
            let tail_se = match tail.measure {
                TailMeasure::Cvar => var_stderr,
                TailMeasure::Es => m.es_stderr,
            };
            let el_se = dist.mc_stderr;
            Ok(ChargeRow {
                haircut: h,
                el: dist.el,
                el_stderr: el_se,
                var_q: cap.var_q,
                var_stderr,
                es_q: cap.es_q,
                es_stderr: m.es_stderr,
                ec: cap.ec,
                ec_stderr: tail_se + el_se,
                capital_charge: cap.capital_charge,
                capital_charge_stderr: roe * (tail_se + el_se),
                // total = roe * tail + (1 - roe) * el
                total_charge: cap.total_charge,
                total_charge_stderr: roe * tail_se + (1.0 - roe).abs() * el_se,
            })
        })
        .collect()
}

/// Which charge the minimum-haircut search controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeBasis {
    ElOnly,
    CvarPlusEl,
    EsPlusEl,
}

/// Smallest haircut whose charge is at most `level`.
pub fn min_haircut_for_charge(
    engine: &LossEngine,
    basis: ChargeBasis,
    q: f64,
    roe: f64,
    level: f64,
) -> Result<HaircutSolution> {
    let grid = engine.default_grid();
    let noise = 4.0 * engine.inversion_tolerance() / (1.0 - q);
    solve_monotone(
        |h| match basis {
            ChargeBasis::ElOnly => {
                let e = engine.expected_loss(h)?;
                Ok((e.value, e.stderr))
            }
            ChargeBasis::CvarPlusEl | ChargeBasis::EsPlusEl => {
                let measure = if basis == ChargeBasis::CvarPlusEl {
                    TailMeasure::Cvar
                } else {
                    TailMeasure::Es
                };
                let (cap, dist) = engine_capital(engine, h, &grid, q, measure, roe)?;
                Ok((cap.total_charge, dist.mc_stderr))
            }
        },
        level,
        noise,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TenorPoint {
    pub tenor: f64,
    pub haircut: f64,
    pub metric: f64,
    pub stderr: f64,
}

/// Haircut term structure for `target`. With `normalize_to`, an EC target
/// level is first set to the EC at the one-year haircut of that EL target,
/// so both definitions agree at one year.
pub fn maturity_sweep(
    scenario: &Scenario,
    tenors: &[f64],
    target: &RatingTarget,
    tail: &TailSpec,
    normalize_to: Option<&RatingTarget>,
) -> Result<(Vec<TenorPoint>, RatingTarget)> {
    if tenors.iter().any(|t| !(*t > 0.0)) || tenors.is_empty() {
        return Err(invalid("tenors", "need at least one positive tenor"));
    }
    let target = match normalize_to {
        Some(anchor) if target.kind == TargetKind::EconomicCapital => {
            let one_year = scenario.with_tenor(1.0).engine()?;
            let h1 = solve_with_engine(&one_year, anchor, tail)?.haircut;
            let (c0, _) = target_metric(&one_year, target, tail, h1)?;
            RatingTarget {
                level: c0,
                ..target.clone()
            }
        }
        Some(_) => return Err(invalid("normalize_to", "normalization applies to EC targets")),
        None => target.clone(),
    };
    let points = tenors
        .iter()
        .map(|&tenor| {
            let s = solve_haircut(&target, &scenario.with_tenor(tenor), tail)?;
            Ok(TenorPoint {
                tenor,
                haircut: s.haircut,
                metric: s.metric,
                stderr: s.stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((points, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpParam {
    Mu,
    Sigma,
    JumpIntensity,
    PUp,
    EtaUp,
    EtaDown,
    Correlation,
    LiquidityDiscount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub param: BumpParam,
    pub shift: f64,
    #[serde(default)]
    pub central: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub param: BumpParam,
    pub shift: f64,
    pub base_es: f64,
    pub base_es_stderr: f64,
    pub bumped_es: f64,
    pub bumped_es_stderr: f64,
    /// Common random numbers make this far tighter than either error alone.
    pub delta_es: f64,
}

fn bumped(engine: &LossEngine, bump: BumpParam, shift: f64, mc: &McConfig) -> Result<LossEngine> {
    let mut d = *engine.dejd();
    let mut t = *engine.terms();
    match bump {
        BumpParam::Mu => d.mu += shift,
        BumpParam::Sigma => d.sigma += shift,
        BumpParam::JumpIntensity => d.jump_intensity += shift,
        BumpParam::PUp => d.p_up += shift,
        BumpParam::EtaUp => d.eta_up += shift,
        BumpParam::EtaDown => d.eta_down += shift,
        BumpParam::Correlation => t.correlation += shift,
        BumpParam::LiquidityDiscount => t.liquidity_discount += shift,
    }
    d.validate()?;
    engine.with_dejd(&d, mc)?.with_terms(&t, mc)
}

/// Finite-difference ES responses at haircut `h` on the base path set.
pub fn sensitivities(
    engine: &LossEngine,
    h: f64,
    q: f64,
    bumps: &[Bump],
    mc: &McConfig,
) -> Result<Vec<SensitivityRow>> {
    let es_of = |e: &LossEngine| -> Result<(f64, f64)> {
        let dist = e.distribution(h, &e.default_grid())?;
        let m = e.tail_measures(h, q, &dist)?;
        Ok((m.es, m.es_stderr))
    };
    let (base_es, base_es_stderr) = es_of(engine)?;
    bumps
        .iter()
        .map(|b| {
            let (up, up_se) = es_of(&bumped(engine, b.param, b.shift, mc)?)?;
            let delta_es = if b.central {
                let (down, _) = es_of(&bumped(engine, b.param, -b.shift, mc)?)?;
                0.5 * (up - down)
            } else {
                up - base_es
            };
            Ok(SensitivityRow {
                param: b.param,
                shift: b.shift,
                base_es,
                base_es_stderr,
                bumped_es: up,
                bumped_es_stderr: up_se,
                delta_es,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ec_target_examples() {
        assert_abs_diff_eq!(ec_target_from_el(0.075 * BP, 0.1).unwrap(), 0.75 * BP, epsilon = 1e-18);
        assert_eq!(ec_target_from_el(0.0, 0.1).unwrap(), 0.0);
        assert_eq!(ec_target_from_el(3e-5, 1.0).unwrap(), 3e-5);
        assert!(ec_target_from_el(1.0, 0.0).is_err());
    }

    #[test]
    fn basel_risk_weight() {
        let r = RegulatoryInputs::default();
        let rw = r.risk_weight().unwrap();
        assert!((rw - 1.91).abs() < 0.03, "rw = {rw}");
        let c = regulatory_capital(0.0, &r).unwrap();
        assert!((c - 0.023).abs() < 0.001, "capital = {c}");
        assert_eq!(regulatory_capital(0.15, &r).unwrap(), 0.0);
        assert_eq!(regulatory_capital(0.4, &r).unwrap(), 0.0);
    }

    #[test]
    fn regulatory_capital_is_linear_in_exposure() {
        let r = RegulatoryInputs::default();
        let rw = r.risk_weight().unwrap();
        for &h in &[0.0, 0.03, 0.07, 0.12, 0.1499] {
            let c = regulatory_capital(h, &r).unwrap();
            assert_abs_diff_eq!(c, (0.15 - h) / (1.0 - h) * 0.08 * rw, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_distribution_capital() {
        let grid = crate::loss::uniform_loss_grid(0.6, 200);
        let d = LossDistribution::from_tail(grid, vec![0.0; 200]).unwrap();
        let c = economic_capital(&d, 0.999, TailMeasure::Es, 0.15).unwrap();
        assert_eq!((c.el, c.var_q, c.es_q, c.ec, c.capital_charge, c.total_charge), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn charge_is_linear_in_roe() {
        let grid = crate::loss::uniform_loss_grid(0.6, 200);
        let tail: Vec<f64> = grid.iter().map(|b| 0.01 * (-b * 40.0).exp()).collect();
        let d = LossDistribution::from_tail(grid, tail).unwrap();
        let a = economic_capital(&d, 0.999, TailMeasure::Es, 0.1).unwrap();
        let b = economic_capital(&d, 0.999, TailMeasure::Es, 0.2).unwrap();
        assert!(a.ec > 0.0);
        assert_eq!(b.capital_charge, 2.0 * a.capital_charge);
        assert!(a.total_charge >= a.el);
    }

    #[test]
    fn monotone_solver() {
        let s = solve_monotone(|h| Ok(((0.5 - h).max(0.0), 0.0)), 0.2, 0.0).unwrap();
        assert!((s.haircut - 0.3).abs() <= HAIRCUT_TOL);
        let s = solve_monotone(|h| Ok((1.0 - h, 0.0)), 1.0, 0.0).unwrap();
        assert_eq!(s.haircut, 0.0);
        assert!(matches!(
            solve_monotone(|_| Ok((1.0, 0.0)), 0.5, 0.0),
            Err(GapRiskError::Unattainable(_))
        ));
        let dip = |h: f64| Ok((if h < 0.3 { 1.0 } else if h < 0.6 { 0.1 } else { 0.9 }, 0.0));
        assert!(matches!(solve_monotone(dip, 0.95, 0.0), Err(GapRiskError::NonMonotone(_))));
    }

    #[test]
    fn target_levels_scale_with_tenor() {
        let t = RatingTarget::aa2();
        assert_abs_diff_eq!(t.level_at(0.25), 0.075 * BP * 0.25, epsilon = 1e-20);
        let ec = RatingTarget::new(TargetKind::EconomicCapital, 1e-3, "ec").unwrap();
        assert_eq!(ec.level_at(0.25), 1e-3);
        assert!(RatingTarget::new(TargetKind::ExpectedLoss, 0.0, "x").is_err());
    }
}
