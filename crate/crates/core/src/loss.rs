//! Repo loss variable: expected loss, tail probabilities, VaR and ES.
//!
//! Per unit principal the cash lender loses
//! `L = (1 - R_c) (1 - e^X / K)^+` with `K = (1 - h) / (1 - g)` when the
//! borrower defaults, `X` being the collateral log-return over the margin
//! period of risk that starts at the default time. The securities lender
//! loses `L = (1 - R_c) (e^X - K)^+` with `K = 1 + h`.
//!
//! Default times are discretised on a grid. For each cell `[t_i, t_{i+1}]`
//! the engine stores the default probability increment and the credit
//! Brownian increment over `[t_i, t_i + u]`, which shifts the collateral
//! drift when the two are correlated. Without correlation (or with a
//! deterministic hazard curve) every cell shares one collateral law and the
//! loss factorises through `P(tau <= T)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credit::{default_distribution, simulate_path, HazardCurve, LogOuParams};
use crate::dejd::{DejdParams, DriftView, TRADING_DAYS};
use crate::error::{invalid, GapRiskError, Result};
use crate::laplace::{InversionKernel, DEEP_OTM_FLOOR};
use crate::mc::{map_paths, mean_stderr, uniform_grid, McConfig};

/// Number of points in the default loss grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Lends cash against securities; exposed to a price fall (put side).
    CashLender,
    /// Lends securities against cash; exposed to a price rise (call side).
    SecuritiesLender,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepoTerms {
    pub haircut: f64,
    /// Repo tenor in years.
    pub tenor: f64,
    /// Margin period of risk in years.
    pub mpr: f64,
    pub liquidity_discount: f64,
    pub recovery: f64,
    pub correlation: f64,
    pub side: Side,
}

impl Default for RepoTerms {
    fn default() -> Self {
        Self {
            haircut: 0.0,
            tenor: 1.0,
            mpr: 10.0 / TRADING_DAYS,
            liquidity_discount: 0.0,
            recovery: 0.4,
            correlation: 0.0,
            side: Side::CashLender,
        }
    }
}

impl RepoTerms {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.haircut) {
            return Err(invalid("haircut", format!("must lie in [0, 1), got {}", self.haircut)));
        }
        if !(self.tenor > 0.0 && self.tenor.is_finite()) {
            return Err(invalid("tenor", format!("must be > 0, got {}", self.tenor)));
        }
        if !(self.mpr > 0.0 && self.mpr.is_finite()) {
            return Err(invalid("mpr", format!("must be > 0, got {}", self.mpr)));
        }
        if !(0.0..1.0).contains(&self.liquidity_discount) {
            return Err(invalid(
                "liquidity_discount",
                format!("must lie in [0, 1), got {}", self.liquidity_discount),
            ));
        }
        if !(0.0..=1.0).contains(&self.recovery) {
            return Err(invalid("recovery", format!("must lie in [0, 1], got {}", self.recovery)));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(invalid(
                "correlation",
                format!("must lie in [-1, 1], got {}", self.correlation),
            ));
        }
        Ok(())
    }

    pub fn with_haircut(&self, haircut: f64) -> Self {
        Self { haircut, ..*self }
    }

    /// Strike ratio of the option embedded in the loss.
    pub fn strike(&self) -> f64 {
        match self.side {
            Side::CashLender => (1.0 - self.haircut) / (1.0 - self.liquidity_discount),
            Side::SecuritiesLender => 1.0 + self.haircut,
        }
    }

    pub fn loss_given_default(&self) -> f64 {
        1.0 - self.recovery
    }
}

/// Log-return threshold `x*(b)` of a relative loss `b`. For the cash lender
/// `{L >= b}` is `{X <= x*}`; for the securities lender it is `{X >= x*}`.
pub fn loss_threshold(terms: &RepoTerms, b_over_m: f64) -> Result<f64> {
    let lgd = terms.loss_given_default();
    if !(b_over_m >= 0.0) {
        return Err(invalid("b_over_m", format!("must be >= 0, got {b_over_m}")));
    }
    match terms.side {
        Side::CashLender => {
            if b_over_m >= lgd {
                return Err(GapRiskError::Domain(format!(
                    "relative loss {b_over_m} is not below the maximum loss {lgd}"
                )));
            }
            Ok((terms.strike() * (lgd - b_over_m) / lgd).ln())
        }
        Side::SecuritiesLender => {
            if lgd <= 0.0 {
                return Err(GapRiskError::Domain("no loss is possible with full recovery".into()));
            }
            Ok((terms.strike() + b_over_m / lgd).ln())
        }
    }
}

/// Counterparty description consumed by the loss engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CreditSpec {
    LogOu(LogOuParams),
    Curve(HazardCurve),
    /// Immediate and certain default at time zero.
    AssetOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    fn from_samples(samples: &[f64]) -> Self {
        let (value, stderr) = mean_stderr(samples);
        Self { value, stderr }
    }
}

/// One default cell: probability increment and credit Brownian increment
/// over the margin period that starts at the cell's left end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dp: f64,
    pub dw: f64,
}

/// Frozen default scenarios shared by every evaluation of one credit setup
/// (common random numbers across haircuts and collateral bumps).
#[derive(Debug, Clone)]
pub struct PathSet {
    cells: Vec<Cell>,
    offsets: Vec<usize>,
    /// `P(tau <= T)` per path.
    pd: Vec<f64>,
    /// Whether the Brownian increments carry information.
    resolved: bool,
}

impl PathSet {
    /// Deterministic single-path set with total default probability `pd`.
    pub fn deterministic(pd: f64) -> Self {
        Self {
            cells: vec![Cell { dp: pd, dw: 0.0 }],
            offsets: vec![0, 1],
            pd: vec![pd],
            resolved: false,
        }
    }

    /// Builds the set for `credit` over `tenor` with margin period `mpr`.
    /// Cells are resolved only when `resolve` is set; otherwise each path
    /// keeps its total default probability.
    pub fn build(credit: &CreditSpec, tenor: f64, mpr: f64, resolve: bool, mc: &McConfig) -> Result<Self> {
        mc.validate()?;
        match credit {
            CreditSpec::AssetOnly => Ok(Self::deterministic(1.0)),
            CreditSpec::Curve(c) => Ok(Self::deterministic(c.default_probability(tenor))),
            CreditSpec::LogOu(p) => {
                p.validate()?;
                if resolve {
                    Self::resolved(p, tenor, mpr, mc)
                } else {
                    let grid = uniform_grid(tenor, mc.grid_step);
                    let pd = map_paths(mc.seed, mc.n_paths, |_, rng| {
                        let path = simulate_path(p, &grid, rng).expect("validated inputs");
                        *default_distribution(&path).last().unwrap()
                    });
                    let cells = pd.iter().map(|&dp| Cell { dp, dw: 0.0 }).collect();
                    Ok(Self {
                        cells,
                        offsets: (0..=pd.len()).collect(),
                        pd,
                        resolved: false,
                    })
                }
            }
        }
    }

    fn resolved(p: &LogOuParams, tenor: f64, mpr: f64, mc: &McConfig) -> Result<Self> {
        let base = uniform_grid(tenor, mc.grid_step);
        let n_cells = base.len() - 1;
        let mut union: Vec<f64> = base.clone();
        union.extend(base[..n_cells].iter().map(|t| t + mpr));
        union.sort_by(|a, b| a.partial_cmp(b).unwrap());
        union.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let locate = |t: f64| -> usize {
            union
                .binary_search_by(|x| {
                    if (x - t).abs() < 1e-12 {
                        std::cmp::Ordering::Equal
                    } else {
                        x.partial_cmp(&t).unwrap()
                    }
                })
                .expect("grid point present")
        };
        let start_idx: Vec<usize> = base.iter().map(|&t| locate(t)).collect();
        let end_idx: Vec<usize> = base[..n_cells].iter().map(|&t| locate(t + mpr)).collect();
        // Default probabilities integrate the hazard only up to the tenor;
        // points beyond it serve the Brownian increments of late windows.
        let horizon_idx = start_idx[n_cells];
        let per_path = map_paths(mc.seed, mc.n_paths, |_, rng| {
            let path = simulate_path(p, &union, rng).expect("validated inputs");
            let dist = default_distribution(&path);
            let w = path.brownian_levels();
            let cells: Vec<Cell> = (0..n_cells)
                .map(|i| Cell {
                    dp: dist[start_idx[i + 1]] - dist[start_idx[i]],
                    dw: w[end_idx[i]] - w[start_idx[i]],
                })
                .collect();
            (cells, dist[horizon_idx])
        });
        let mut cells = Vec::with_capacity(n_cells * mc.n_paths);
        let mut offsets = Vec::with_capacity(mc.n_paths + 1);
        let mut pd = Vec::with_capacity(mc.n_paths);
        offsets.push(0);
        for (c, p) in per_path {
            cells.extend(c);
            offsets.push(cells.len());
            pd.push(p);
        }
        Ok(Self {
            cells,
            offsets,
            pd,
            resolved: true,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.pd.len()
    }

    pub fn is_resolved(&self) -> bool {
        self.resolved
    }

    pub fn path_cells(&self, i: usize) -> &[Cell] {
        &self.cells[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn default_probability(&self) -> Estimate {
        if self.pd.len() == 1 {
            return Estimate::exact(self.pd[0]);
        }
        Estimate::from_samples(&self.pd)
    }

    /// Per-path sums of `dp * f(dw)`; evaluates `f` once when the Brownian
    /// increments are not resolved.
    fn weighted<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        if !self.resolved {
            let v = f(0.0)?;
            return Ok(self.pd.iter().map(|p| p * v).collect());
        }
        (0..self.n_paths())
            .into_par_iter()
            .map(|i| {
                self.path_cells(i)
                    .iter()
                    .try_fold(0.0, |acc, c| Ok(acc + c.dp * f(c.dw)?))
            })
            .collect()
    }

    /// Per-path vectors of `sum dp * f(dw)` for a vector-valued `f`.
    fn weighted_vec<F>(&self, len: usize, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(f64, &mut [f64]) -> Result<()> + Sync,
    {
        if !self.resolved {
            let mut v = vec![0.0; len];
            f(0.0, &mut v)?;
            return Ok(self
                .pd
                .iter()
                .map(|p| v.iter().map(|x| p * x).collect())
                .collect());
        }
        (0..self.n_paths())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; len];
                let mut buf = vec![0.0; len];
                for c in self.path_cells(i) {
                    buf.iter_mut().for_each(|b| *b = 0.0);
                    f(c.dw, &mut buf)?;
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += c.dp * b;
                    }
                }
                Ok(acc)
            })
            .collect()
    }
}

/// Tail curve of the loss per unit principal on a grid of relative losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub loss_grid: Vec<f64>,
    /// `P(L > b)` at each grid point.
    pub tail_probs: Vec<f64>,
    pub tail_stderr: Vec<f64>,
    /// `E[(L - b)^+]` at each grid point when available.
    pub stop_loss: Option<Vec<f64>>,
    pub el: f64,
    pub mc_stderr: f64,
    /// `P(tau <= T)`.
    pub default_probability: f64,
}

impl LossDistribution {
    /// Builds a distribution from a tail curve alone.
    pub fn from_tail(loss_grid: Vec<f64>, tail_probs: Vec<f64>) -> Result<Self> {
        if loss_grid.len() != tail_probs.len() || loss_grid.is_empty() {
            return Err(invalid("tail_probs", "need one probability per grid point"));
        }
        if loss_grid.windows(2).any(|w| !(w[1] > w[0])) || loss_grid[0] < 0.0 {
            return Err(invalid("loss_grid", "must be non-negative and increasing"));
        }
        let el = trapezoid_tail(&loss_grid, &tail_probs, 0);
        let n = loss_grid.len();
        Ok(Self {
            loss_grid,
            tail_probs,
            tail_stderr: vec![0.0; n],
            stop_loss: None,
            el,
            mc_stderr: 0.0,
            default_probability: f64::NAN,
        })
    }

    /// `int P(L > b) db` from grid index `from`, extending the curve to
    /// zero one grid step past the last point.
    pub fn integrated_tail(&self, from: usize) -> f64 {
        trapezoid_tail(&self.loss_grid, &self.tail_probs, from)
    }
}

fn trapezoid_tail(grid: &[f64], tail: &[f64], from: usize) -> f64 {
    let n = grid.len();
    let mut acc = 0.0;
    for j in from..n.saturating_sub(1) {
        acc += 0.5 * (grid[j + 1] - grid[j]) * (tail[j] + tail[j + 1]);
    }
    if n >= 2 && from < n {
        acc += 0.5 * (grid[n - 1] - grid[n - 2]) * tail[n - 1];
    }
    acc
}

/// Uniform grid of `points` relative losses on `[0, max)`.
pub fn uniform_loss_grid(max_loss: f64, points: usize) -> Vec<f64> {
    (0..points).map(|j| max_loss * j as f64 / points as f64).collect()
}

/// Smallest grid loss `l` with `P(L > l) <= 1 - q`; zero when already
/// `P(L > 0) <= 1 - q`.
pub fn loss_var(dist: &LossDistribution, q: f64) -> Result<f64> {
    check_quantile(q)?;
    let alpha = 1.0 - q;
    for (b, p) in dist.loss_grid.iter().zip(&dist.tail_probs) {
        if *p <= alpha {
            return Ok(*b);
        }
    }
    Ok(*dist.loss_grid.last().unwrap())
}

/// Expected shortfall `VaR + E[(L - VaR)^+] / (1 - q)`; uses the exact
/// stop-loss curve when present and the trapezoid integral of the tail
/// otherwise.
pub fn loss_es(dist: &LossDistribution, q: f64) -> Result<f64> {
    let var = loss_var(dist, q)?;
    let j = dist
        .loss_grid
        .iter()
        .position(|b| *b == var)
        .unwrap_or(dist.loss_grid.len() - 1);
    let excess = match &dist.stop_loss {
        Some(sl) => sl[j],
        None => dist.integrated_tail(j),
    };
    Ok(var + excess / (1.0 - q))
}

/// Number of grid points at or beyond VaR with a positive tail; ES is
/// resolved poorly when this is below ten.
pub fn tail_resolution(dist: &LossDistribution, q: f64) -> Result<usize> {
    let var = loss_var(dist, q)?;
    Ok(dist
        .loss_grid
        .iter()
        .zip(&dist.tail_probs)
        .filter(|(b, p)| **b >= var && **p > 0.0)
        .count())
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("must lie in (0, 1), got {q}")));
    }
    Ok(())
}

/// A collateral model, a correlation and a frozen path set: everything that
/// stays fixed while the haircut varies.
#[derive(Debug, Clone)]
pub struct LossEngine {
    terms: RepoTerms,
    dejd: DejdParams,
    paths: Arc<PathSet>,
    kernel: InversionKernel,
}

impl LossEngine {
    pub fn new(terms: &RepoTerms, dejd: &DejdParams, credit: &CreditSpec, mc: &McConfig) -> Result<Self> {
        terms.validate()?;
        dejd.validate()?;
        let resolve = terms.correlation != 0.0 && matches!(credit, CreditSpec::LogOu(_));
        let paths = PathSet::build(credit, terms.tenor, terms.mpr, resolve, mc)?;
        Self::with_paths(terms, dejd, Arc::new(paths), mc)
    }

    /// Engine over an existing path set; the set must have been built for
    /// the same tenor and margin period.
    pub fn with_paths(terms: &RepoTerms, dejd: &DejdParams, paths: Arc<PathSet>, mc: &McConfig) -> Result<Self> {
        terms.validate()?;
        // Without resolved Brownian increments the credit factor is
        // integrated out and the return keeps its full diffusion.
        let rho = if paths.is_resolved() { terms.correlation } else { 0.0 };
        let view = DriftView::with_drift(*dejd, dejd.mu * terms.mpr, (1.0 - rho * rho).max(0.0).sqrt())?;
        let kernel = InversionKernel::new(&view, terms.mpr, &mc.inversion)?;
        Ok(Self {
            terms: *terms,
            dejd: *dejd,
            paths,
            kernel,
        })
    }

    /// Same paths and terms with a different collateral model.
    pub fn with_dejd(&self, dejd: &DejdParams, mc: &McConfig) -> Result<Self> {
        Self::with_paths(&self.terms, dejd, self.paths.clone(), mc)
    }

    /// Same paths with different terms (correlation, discount, recovery).
    pub fn with_terms(&self, terms: &RepoTerms, mc: &McConfig) -> Result<Self> {
        if terms.tenor != self.terms.tenor || terms.mpr != self.terms.mpr {
            return Err(invalid("terms", "tenor and mpr must match the frozen path set"));
        }
        if terms.correlation != 0.0 && !self.paths.is_resolved() && self.paths.n_paths() > 1 {
            return Err(invalid("correlation", "path set was built without Brownian increments"));
        }
        Self::with_paths(terms, &self.dejd, self.paths.clone(), mc)
    }

    pub fn terms(&self) -> &RepoTerms {
        &self.terms
    }

    pub fn dejd(&self) -> &DejdParams {
        &self.dejd
    }

    pub fn inversion_tolerance(&self) -> f64 {
        self.kernel.config().abs_tolerance
    }

    pub fn paths(&self) -> &Arc<PathSet> {
        &self.paths
    }

    fn drift(&self, dw: f64) -> f64 {
        self.dejd.mu * self.terms.mpr + self.dejd.sigma * self.terms.correlation * dw
    }

    fn terms_at(&self, haircut: f64) -> Result<RepoTerms> {
        let t = self.terms.with_haircut(haircut);
        t.validate()?;
        Ok(t)
    }

    /// `E[(L - v)^+]` given default in a cell with Brownian increment `dw`.
    fn cell_stop_loss(&self, t: &RepoTerms, dw: f64, v: f64) -> Result<f64> {
        let lgd = t.loss_given_default();
        if lgd <= 0.0 {
            return Ok(0.0);
        }
        let d = self.drift(dw);
        match t.side {
            Side::CashLender => {
                let k = t.strike();
                if v >= lgd {
                    return Ok(0.0);
                }
                Ok(lgd / k * self.kernel.put(d, k * (1.0 - v / lgd))?)
            }
            Side::SecuritiesLender => Ok(lgd * self.kernel.call(d, t.strike() + v / lgd)?),
        }
    }

    /// `P(L > b)` given default in a cell with Brownian increment `dw`.
    fn cell_tail(&self, t: &RepoTerms, dw: f64, b: f64) -> Result<f64> {
        if t.loss_given_default() <= 0.0 {
            return Ok(0.0);
        }
        let d = self.drift(dw);
        match t.side {
            Side::CashLender => {
                if b >= t.loss_given_default() {
                    return Ok(0.0);
                }
                Ok(self.kernel.cdf(d, loss_threshold(t, b)?))
            }
            Side::SecuritiesLender => Ok(1.0 - self.kernel.cdf(d, loss_threshold(t, b)?)),
        }
    }

    pub fn expected_loss(&self, haircut: f64) -> Result<Estimate> {
        let t = self.terms_at(haircut)?;
        let per_path = self.paths.weighted(|dw| self.cell_stop_loss(&t, dw, 0.0))?;
        Ok(self.estimate(&per_path))
    }

    /// `P(L > b)` with its standard error.
    pub fn tail_probability(&self, haircut: f64, b: f64) -> Result<Estimate> {
        let t = self.terms_at(haircut)?;
        let per_path = self.paths.weighted(|dw| self.cell_tail(&t, dw, b))?;
        Ok(self.estimate(&per_path))
    }

    fn estimate(&self, per_path: &[f64]) -> Estimate {
        if per_path.len() == 1 {
            Estimate::exact(per_path[0])
        } else {
            Estimate::from_samples(per_path)
        }
    }

    /// The default 200-point grid on `[0, 1 - R_c)`.
    pub fn default_grid(&self) -> Vec<f64> {
        uniform_loss_grid(self.terms.loss_given_default(), DEFAULT_GRID_POINTS)
    }

    /// Tail probabilities and exact stop-loss values on `b_grid` together
    /// with the expected loss, all from one pass over the cells.
    pub fn distribution(&self, haircut: f64, b_grid: &[f64]) -> Result<LossDistribution> {
        let t = self.terms_at(haircut)?;
        if b_grid.is_empty() || b_grid.windows(2).any(|w| !(w[1] > w[0])) || b_grid[0] < 0.0 {
            return Err(invalid("b_grid", "must be non-empty, non-negative and increasing"));
        }
        let n = b_grid.len();
        // Layout per cell: [tail_0..tail_n, stop_0..stop_n]; both curves are
        // non-increasing in b, so the sweep stops once they vanish.
        let per_path = self.paths.weighted_vec(2 * n, |dw, out| {
            let mut tail_done = false;
            let mut stop_done = false;
            for (j, &b) in b_grid.iter().enumerate() {
                if !tail_done {
                    let p = self.cell_tail(&t, dw, b)?;
                    out[j] = p;
                    tail_done = p < DEEP_OTM_FLOOR;
                }
                if !stop_done {
                    let s = self.cell_stop_loss(&t, dw, b)?;
                    out[n + j] = s;
                    stop_done = s < DEEP_OTM_FLOOR;
                }
                if tail_done && stop_done {
                    break;
                }
            }
            Ok(())
        })?;
        let columns = |j: usize| -> Vec<f64> { per_path.iter().map(|v| v[j]).collect() };
        let mut tail_probs = Vec::with_capacity(n);
        let mut tail_stderr = Vec::with_capacity(n);
        let mut stop_loss = Vec::with_capacity(n);
        for j in 0..n {
            let e = self.estimate(&columns(j));
            tail_probs.push(e.value);
            tail_stderr.push(e.stderr);
            stop_loss.push(self.estimate(&columns(n + j)).value);
        }
        // Sums of per-path curves are non-increasing path by path, so the
        // averages are too; clamp only rounding noise.
        for j in 1..n {
            tail_probs[j] = tail_probs[j].min(tail_probs[j - 1]);
            stop_loss[j] = stop_loss[j].min(stop_loss[j - 1]);
        }
        let el = if b_grid[0] == 0.0 {
            self.estimate(&columns(n))
        } else {
            self.expected_loss(haircut)?
        };
        Ok(LossDistribution {
            loss_grid: b_grid.to_vec(),
            tail_probs,
            tail_stderr,
            stop_loss: Some(stop_loss),
            el: el.value,
            mc_stderr: el.stderr,
            default_probability: self.paths.default_probability().value,
        })
    }

    /// VaR and ES at level `q` with VaR solved off-grid: `dist` (computed
    /// at the same haircut) brackets the quantile, a bracketed secant search
    /// pins `P(L > b) = 1 - q`, and ES is the exact stop-loss at that point.
    pub fn tail_measures(&self, haircut: f64, q: f64, dist: &LossDistribution) -> Result<TailMeasures> {
        check_quantile(q)?;
        let alpha = 1.0 - q;
        let t = self.terms_at(haircut)?;
        let lgd = t.loss_given_default();
        let j = dist.tail_probs.iter().position(|p| *p <= alpha);
        let (mut lo, mut hi) = match j {
            Some(0) if dist.loss_grid[0] == 0.0 => {
                return Ok(TailMeasures {
                    var: 0.0,
                    es: dist.el / alpha,
                    es_stderr: dist.mc_stderr / alpha,
                })
            }
            Some(0) => (0.0, dist.loss_grid[0]),
            Some(j) => (dist.loss_grid[j - 1], dist.loss_grid[j]),
            None => (*dist.loss_grid.last().unwrap(), lgd),
        };
        let tail = |b: f64| -> Result<f64> { Ok(self.tail_probability(haircut, b)?.value - alpha) };
        let (mut f_lo, mut f_hi) = (tail(lo)?, tail(hi)?);
        if f_lo <= 0.0 {
            hi = lo;
        } else {
            // Illinois variant of regula falsi on the non-increasing tail.
            let mut side = 0;
            for _ in 0..100 {
                if hi - lo <= 1e-12 * lgd.max(1e-300) || f_hi == 0.0 {
                    break;
                }
                let mut m = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                if !(m > lo && m < hi) {
                    m = 0.5 * (lo + hi);
                }
                let fm = tail(m)?;
                if fm > 0.0 {
                    lo = m;
                    f_lo = fm;
                    if side == -1 {
                        f_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = m;
                    f_hi = fm;
                    if side == 1 {
                        f_lo *= 0.5;
                    }
                    side = 1;
                }
            }
        }
        let var = hi;
        let excess = self.estimate(&self.paths.weighted(|dw| self.cell_stop_loss(&t, dw, var))?);
        Ok(TailMeasures {
            var,
            es: var + excess.value / alpha,
            // First order in the VaR error vanishes at the quantile.
            es_stderr: excess.stderr / alpha,
        })
    }

    /// Delta-method error of a tail quantile `var`: tail probability error
    /// over the loss density, the latter by a central difference.
    pub fn quantile_stderr(&self, haircut: f64, var: f64) -> Result<f64> {
        let lgd = self.terms_at(haircut)?.loss_given_default();
        if var <= 0.0 {
            return Ok(0.0);
        }
        let delta = (1e-3 * lgd).min(var).min(0.5 * (lgd - var));
        if !(delta > 0.0) {
            return Ok(0.0);
        }
        let se = self.tail_probability(haircut, var)?.stderr;
        let lo = self.tail_probability(haircut, var - delta)?.value;
        let hi = self.tail_probability(haircut, var + delta)?.value;
        let density = (lo - hi) / (2.0 * delta);
        Ok(if density > 0.0 { se / density } else { f64::INFINITY })
    }
}

/// Off-grid tail quantile and expected shortfall with Monte Carlo errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMeasures {
    pub var: f64,
    pub es: f64,
    pub es_stderr: f64,
}

/// `E[L] / M` with its standard error over the path set implied by `credit`.
pub fn expected_loss(terms: &RepoTerms, dejd: &DejdParams, credit: &CreditSpec, mc: &McConfig) -> Result<Estimate> {
    LossEngine::new(terms, dejd, credit, mc)?.expected_loss(terms.haircut)
}

/// Zero-correlation expected loss factorised through `P(tau <= T)`.
pub fn zero_corr_el(terms: &RepoTerms, dejd: &DejdParams, pd_t: f64, mc: &McConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&pd_t) {
        return Err(invalid("pd_t", format!("must lie in [0, 1], got {pd_t}")));
    }
    let t = RepoTerms {
        correlation: 0.0,
        ..*terms
    };
    let engine = LossEngine::with_paths(&t, dejd, Arc::new(PathSet::deterministic(pd_t)), mc)?;
    Ok(engine.expected_loss(t.haircut)?.value)
}

/// Loss distribution on `b_grid` (the default grid when `None`).
pub fn loss_tail(
    terms: &RepoTerms,
    dejd: &DejdParams,
    credit: &CreditSpec,
    b_grid: Option<&[f64]>,
    mc: &McConfig,
) -> Result<LossDistribution> {
    let engine = LossEngine::new(terms, dejd, credit, mc)?;
    let grid = match b_grid {
        Some(g) => g.to_vec(),
        None => engine.default_grid(),
    };
    engine.distribution(terms.haircut, &grid)
}
