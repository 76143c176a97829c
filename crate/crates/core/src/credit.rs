//! Counterparty default models: a log-OU stochastic intensity and a
//! deterministic piecewise-constant hazard curve bootstrapped from CDS.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GapRiskError, Result};
use crate::mc::{map_paths, mean_stderr, uniform_grid, McConfig};

/// `y = ln(lambda)` follows `dy = k (y_bar - y) dt + sigma_c dW_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOuParams {
    /// Mean-reversion rate per year; negative values give explosive paths.
    pub k: f64,
    pub y_bar: f64,
    pub sigma_c: f64,
    pub lambda_0: f64,
}

impl LogOuParams {
    pub fn new(k: f64, y_bar: f64, sigma_c: f64, lambda_0: f64) -> Result<Self> {
        let p = Self {
            k,
            y_bar,
            sigma_c,
            lambda_0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Level and initial hazard both set to `lambda_0`.
    pub fn anchored(k: f64, sigma_c: f64, lambda_0: f64) -> Result<Self> {
        Self::new(k, lambda_0.ln(), sigma_c, lambda_0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k.is_finite() || !self.y_bar.is_finite() {
            return Err(invalid("k", "k and y_bar must be finite"));
        }
        if !(self.sigma_c >= 0.0 && self.sigma_c.is_finite()) {
            return Err(invalid("sigma_c", format!("must be >= 0, got {}", self.sigma_c)));
        }
        if !(self.lambda_0 > 0.0 && self.lambda_0.is_finite()) {
            return Err(invalid("lambda_0", format!("must be > 0, got {}", self.lambda_0)));
        }
        Ok(())
    }

    pub fn y_0(&self) -> f64 {
        self.lambda_0.ln()
    }

    /// Mean reversion factor `e^{-k dt}` and conditional sd of one exact step.
    fn step_moments(&self, dt: f64) -> (f64, f64) {
        let decay = (-self.k * dt).exp();
        let kd = self.k * dt;
        let var = if kd.abs() < 1e-8 {
            dt
        } else {
            -(-2.0 * kd).exp_m1() / (2.0 * self.k)
        };
        (decay, self.sigma_c * var.sqrt())
    }
}

/// Piecewise-constant forward hazard: `hazards[j]` applies on
/// `(knot_times[j-1], knot_times[j]]`, the last one extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub knot_times: Vec<f64>,
    pub hazards: Vec<f64>,
}

impl HazardCurve {
    pub fn new(knot_times: Vec<f64>, hazards: Vec<f64>) -> Result<Self> {
        if knot_times.is_empty() || knot_times.len() != hazards.len() {
            return Err(invalid("hazards", "need one hazard per knot and at least one knot"));
        }
        let mut prev = 0.0;
        for &t in &knot_times {
            if !(t > prev) {
                return Err(invalid("knot_times", "must be positive and strictly increasing"));
            }
            prev = t;
        }
        if let Some(&h) = hazards.iter().find(|h| !(**h >= 0.0 && h.is_finite())) {
            return Err(invalid("hazards", format!("must be finite and >= 0, got {h}")));
        }
        Ok(Self {
            knot_times,
            hazards,
        })
    }

    pub fn flat(hazard: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![hazard])
    }

    /// `int_0^t lambda(s) ds`.
    pub fn integrated_hazard(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (j, (&knot, &h)) in self.knot_times.iter().zip(&self.hazards).enumerate() {
            let last = j + 1 == self.knot_times.len();
            let end = if last { f64::INFINITY } else { knot };
            if t <= end {
                return acc + h * (t - start).max(0.0);
            }
            acc += h * (end - start);
            start = end;
        }
        acc
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.integrated_hazard(t)).exp()
    }

    pub fn default_probability(&self, t: f64) -> f64 {
        -(-self.integrated_hazard(t)).exp_m1()
    }

    /// `int_0^t S(s) ds`, exact for the piecewise-constant curve.
    pub fn survival_integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        let mut s_start = 1.0;
        for (j, (&knot, &h)) in self.knot_times.iter().zip(&self.hazards).enumerate() {
            let last = j + 1 == self.knot_times.len();
            let end = if last { t } else { knot.min(t) };
            let len = end - start;
            if len > 0.0 {
                acc += s_start * segment_survival_integral(h, len);
                s_start *= (-h * len).exp();
            }
            if end >= t {
                break;
            }
            start = end;
        }
        acc
    }

    /// Par spread of a `tenor` CDS with zero discounting.
    pub fn par_spread(&self, tenor: f64, recovery: f64) -> f64 {
        (1.0 - recovery) * self.default_probability(tenor) / self.survival_integral(tenor)
    }
}

/// `int_0^len e^{-h s} ds`.
fn segment_survival_integral(h: f64, len: f64) -> f64 {
    let x = h * len;
    if x.abs() < 1e-12 {
        len * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / h
    }
}

/// One simulated intensity path; `credit_brownian[i]` is the increment of
/// `W_c` over `[grid[i], grid[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPath {
    pub grid: Vec<f64>,
    pub y_values: Vec<f64>,
    pub credit_brownian: Vec<f64>,
}

impl IntensityPath {
    pub fn hazards(&self) -> impl Iterator<Item = f64> + '_ {
        self.y_values.iter().map(|y| y.exp())
    }

    /// `W_c(grid[i]) - W_c(0)` at every grid point.
    pub fn brownian_levels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut w = 0.0;
        out.push(w);
        for dw in &self.credit_brownian {
            w += dw;
            out.push(w);
        }
        out
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(invalid("grid", "must start at 0 and contain at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Exact OU simulation of `y` on `grid`; the standard normal that drives
/// each step also defines the Brownian increment `sqrt(dt) Z`.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &LogOuParams,
    grid: &[f64],
    rng: &mut R,
) -> Result<IntensityPath> {
    params.validate()?;
    check_grid(grid)?;
    let n = grid.len() - 1;
    let mut y_values = Vec::with_capacity(n + 1);
    let mut credit_brownian = Vec::with_capacity(n);
    let mut y = params.y_0();
    y_values.push(y);
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let z: f64 = StandardNormal.sample(rng);
        let (decay, sd) = params.step_moments(dt);
        y = params.y_bar + (y - params.y_bar) * decay + sd * z;
        y_values.push(y);
        credit_brownian.push(dt.sqrt() * z);
    }
    Ok(IntensityPath {
        grid: grid.to_vec(),
        y_values,
        credit_brownian,
    })
}

/// Cumulative default probabilities `1 - exp(-int e^y)` with the integral
/// taken by the trapezoid rule on the path grid.
pub fn default_distribution(path: &IntensityPath) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.grid.len());
    let mut integral = 0.0;
    out.push(0.0);
    let lam: Vec<f64> = path.hazards().collect();
    for i in 1..path.grid.len() {
        let dt = path.grid[i] - path.grid[i - 1];
        integral += 0.5 * dt * (lam[i - 1] + lam[i]);
        out.push(-(-integral).exp_m1());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdsPrice {
    pub spread: f64,
    pub stderr: f64,
}

/// Per-path default leg and premium annuity of a zero-rate CDS.
fn cds_legs(dist: &[f64], grid: &[f64]) -> (f64, f64) {
    let mut annuity = 0.0;
    for i in 1..grid.len() {
        annuity += 0.5 * (grid[i] - grid[i - 1]) * (2.0 - dist[i - 1] - dist[i]);
    }
    (*dist.last().unwrap(), annuity)
}

/// Ratio estimator `(1-R) E[D] / E[A]` and its delta-method standard error.
fn ratio_price(legs: &[(f64, f64)], recovery: f64) -> CdsPrice {
    let n = legs.len() as f64;
    let md = legs.iter().map(|l| l.0).sum::<f64>() / n;
    let ma = legs.iter().map(|l| l.1).sum::<f64>() / n;
    let r = md / ma;
    let resid: Vec<f64> = legs.iter().map(|l| l.0 - r * l.1).collect();
    let (_, se) = mean_stderr(&resid);
    CdsPrice {
        spread: (1.0 - recovery) * r,
        stderr: (1.0 - recovery) * se / ma,
    }
}

fn check_cds_inputs(tenor: f64, recovery: f64) -> Result<()> {
    if !(tenor > 0.0) {
        return Err(invalid("tenor", format!("must be > 0, got {tenor}")));
    }
    if !(0.0..1.0).contains(&recovery) {
        return Err(invalid("recovery", format!("must lie in [0, 1), got {recovery}")));
    }
    Ok(())
}

/// Monte Carlo par spread of a `tenor` CDS under zero discounting.
pub fn price_cds(params: &LogOuParams, tenor: f64, recovery: f64, mc: &McConfig) -> Result<CdsPrice> {
    params.validate()?;
    mc.validate()?;
    check_cds_inputs(tenor, recovery)?;
    let grid = uniform_grid(tenor, mc.grid_step);
    let legs = map_paths(mc.seed, mc.n_paths, |_, rng| {
        let path = simulate_path(params, &grid, rng).expect("validated inputs");
        cds_legs(&default_distribution(&path), &grid)
    });
    Ok(ratio_price(&legs, recovery))
}

/// Frozen paths of `exp(y - y_0)` integrals for an anchored model, so the
/// spread can be re-evaluated for any `lambda_0` with common random numbers.
struct AnchoredPaths {
    grid: Vec<f64>,
    /// Trapezoid integrals of `e^{y - y_0}` at each grid point, per path.
    integrals: Vec<Vec<f64>>,
}

impl AnchoredPaths {
    fn new(k: f64, sigma_c: f64, tenor: f64, mc: &McConfig) -> Result<Self> {
        let unit = LogOuParams::anchored(k, sigma_c, 1.0)?;
        let grid = uniform_grid(tenor, mc.grid_step);
        let integrals = map_paths(mc.seed, mc.n_paths, |_, rng| {
            let path = simulate_path(&unit, &grid, rng).expect("validated inputs");
            let lam: Vec<f64> = path.hazards().collect();
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(grid.len());
            out.push(0.0);
            for i in 1..grid.len() {
                acc += 0.5 * (grid[i] - grid[i - 1]) * (lam[i - 1] + lam[i]);
                out.push(acc);
            }
            out
        });
        Ok(Self { grid, integrals })
    }

    fn price(&self, lambda_0: f64, recovery: f64) -> CdsPrice {
        let legs: Vec<(f64, f64)> = self
            .integrals
            .iter()
            .map(|ints| {
                let dist: Vec<f64> = ints.iter().map(|i| -(-lambda_0 * i).exp_m1()).collect();
                cds_legs(&dist, &self.grid)
            })
            .collect();
        ratio_price(&legs, recovery)
    }
}

/// Finds `lambda_0` (with `y_bar = ln lambda_0`) matching `target_spread`.
/// Bisection on `ln lambda_0` over `[1e-6, 10]` with common random numbers.
pub fn calibrate_lambda0(
    k: f64,
    sigma_c: f64,
    tenor: f64,
    target_spread: f64,
    recovery: f64,
    mc: &McConfig,
) -> Result<LogOuParams> {
    mc.validate()?;
    check_cds_inputs(tenor, recovery)?;
    if !(target_spread > 0.0) {
        return Err(invalid("target_spread", format!("must be > 0, got {target_spread}")));
    }
    let paths = AnchoredPaths::new(k, sigma_c, tenor, mc)?;
    let f = |ln_l: f64| paths.price(ln_l.exp(), recovery).spread - target_spread;
    let (mut lo, mut hi) = (1e-6f64.ln(), 10f64.ln());
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(GapRiskError::NoBracket(format!(
            "spread {target_spread} outside [{:.6e}, {:.6e}] for lambda_0 in [1e-6, 10]",
            flo + target_spread,
            fhi + target_spread
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    LogOuParams::anchored(k, sigma_c, (0.5 * (lo + hi)).exp())
}

/// Root of an increasing function bracketed by `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1e-3) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Sequential bootstrap of a piecewise-constant hazard curve from
/// `(tenor, spread)` quotes under zero discounting.
pub fn bootstrap_hazard(quotes: &[(f64, f64)], recovery: f64) -> Result<HazardCurve> {
    if quotes.is_empty() {
        return Err(invalid("quotes", "need at least one quote"));
    }
    if !(0.0..1.0).contains(&recovery) {
        return Err(invalid("recovery", format!("must lie in [0, 1), got {recovery}")));
    }
    let mut prev = 0.0;
    for &(t, s) in quotes {
        if !(t > prev) {
            return Err(invalid("quotes", "tenors must be positive and increasing"));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("quotes", format!("spreads must be > 0, got {s}")));
        }
        prev = t;
    }
    let mut knots = Vec::with_capacity(quotes.len());
    let mut hazards: Vec<f64> = Vec::with_capacity(quotes.len());
    for &(tenor, spread) in quotes {
        knots.push(tenor);
        let model = |h: f64| -> f64 {
            let mut hz = hazards.clone();
            hz.push(h);
            let curve = HazardCurve {
                knot_times: knots.clone(),
                hazards: hz,
            };
            curve.par_spread(tenor, recovery) - spread
        };
        let (lo, hi) = if model(0.0) > 0.0 {
            let mut lo = -1e-4;
            while model(lo) > 0.0 && lo > -1e3 {
                lo *= 2.0;
            }
            (lo, 0.0)
        } else {
            let mut hi = spread / (1.0 - recovery) * 2.0 + 1e-4;
            while model(hi) < 0.0 {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(GapRiskError::NoBracket(format!(
                        "no hazard reprices {spread} at {tenor}"
                    )));
                }
            }
            (0.0, hi)
        };
        let root = bisect(model, lo, hi);
        if root < 0.0 {
            return Err(GapRiskError::NegativeHazard {
                tenor,
                hazard: root,
            });
        }
        hazards.push(root);
    }
    HazardCurve::new(knots, hazards)
}
