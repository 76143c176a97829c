use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dejd::DejdParams;
use crate::error::{invalid, GapRiskError, Result};

const MIN_RETURNS: usize = 500;
const MAX_GRID_POINTS: usize = 1 << 18;
const DENSITY_FLOOR: f64 = 1e-300;
const MAX_ITERS: u64 = 2000;
/// Jump-rate ceiling per observation step; above it compound Poisson noise
/// is indistinguishable from diffusion.
const MAX_JUMPS_PER_STEP: f64 = 1.0;

/// Density of the `dt` increment tabulated on a uniform grid by one inverse
/// FFT of its characteristic function, read back by 6-point Lagrange
/// interpolation. The grid spans the evaluation range plus enough room that
/// the periodised (aliased) mass is negligible.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl DensityGrid {
    /// `reach` is the largest `|x - mean|` that will be evaluated.
    pub fn new(params: &DejdParams, dt: f64, reach: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        let sd = params.sigma * dt.sqrt();
        if !(sd > 0.0) {
            return Err(invalid("sigma", "density needs a positive diffusion volatility"));
        }
        let lam = params.jump_intensity * dt;
        let center = params.mu * dt + lam * params.mean_jump();
        let max_jumps = lam + 10.0 * lam.sqrt() + 10.0;
        let rate = params.eta_up.min(params.eta_down);
        let min_width = 2.0 * reach.abs() + 2.0 * (18.0 * sd + (max_jumps + 40.0) / rate);
        // Nodes every sd/32 resolve the Gaussian factor well past 1e-14.
        let n = ((min_width / (sd / 32.0)).ceil() as usize)
            .next_power_of_two()
            .clamp(256, MAX_GRID_POINTS);
        let width = min_width.max(n as f64 * sd / 32.0);
        let dx = width / n as f64;
        let du = 2.0 * std::f64::consts::PI / width;
        let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
        let half = n / 2;
        // Node j sits at center - width/2 + j dx, which turns the shift into
        // a (-1)^k factor on coefficient k.
        for k in 0..half {
            let c = centered_cf(params, dt, center, k as f64 * du);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            buf[k] = sign * c;
            if k > 0 {
                buf[n - k] = sign * c.conj();
            }
        }
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let values = buf.iter().map(|z| z.re / width).collect();
        Ok(Self {
            x0: center - 0.5 * width,
            dx,
            values,
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        let t = (x - self.x0) / self.dx;
        let n = self.values.len();
        if !(t >= 2.0 && t < (n - 3) as f64) {
            return 0.0;
        }
        let i = t.floor() as usize;
        let s = t - i as f64;
        // Lagrange interpolation on nodes i-2 ..= i+3.
        let mut acc = 0.0;
        for (a, &f) in self.values[i - 2..i + 4].iter().enumerate() {
            let na = a as f64 - 2.0;
            let mut w = 1.0;
            for b in 0..6 {
                if b != a {
                    let nb = b as f64 - 2.0;
                    w *= (s - nb) / (na - nb);
                }
            }
            acc += w * f;
        }
        acc
    }
}

/// Characteristic function of the increment minus its mean.
fn centered_cf(p: &DejdParams, dt: f64, center: f64, u: f64) -> Complex64 {
    let s = Complex64::new(0.0, u);
    let log_cf = s * (p.mu * dt - center)
        + 0.5 * p.sigma * p.sigma * dt * s * s
        + p.jump_intensity * dt * (p.jump_mgf(s) - 1.0);
    log_cf.exp()
}

/// Transition density of the `dt` log-return evaluated at each `x`.
pub fn dejd_density(params: &DejdParams, dt: f64, x: &[f64]) -> Result<Vec<f64>> {
    let reach = reach_of(params, dt, x);
    let grid = DensityGrid::new(params, dt, reach)?;
    Ok(x.iter().map(|&v| grid.density(v)).collect())
}

fn reach_of(params: &DejdParams, dt: f64, x: &[f64]) -> f64 {
    let c = (params.mu + params.jump_intensity * params.mean_jump()) * dt;
    x.iter().fold(0.0_f64, |m, v| m.max((v - c).abs()))
}

pub fn dejd_log_likelihood(params: &DejdParams, dt: f64, returns: &[f64]) -> Result<f64> {
    if params.jump_intensity == 0.0 {
        return Ok(gaussian_log_likelihood(params.mu * dt, params.sigma * dt.sqrt(), returns));
    }
    Ok(dejd_density(params, dt, returns)?
        .iter()
        .map(|f| f.max(DENSITY_FLOOR).ln())
        .sum())
}

fn gaussian_log_likelihood(mean: f64, sd: f64, x: &[f64]) -> f64 {
    let c = -0.5 * (2.0 * std::f64::consts::PI * sd * sd).ln();
    x.iter().map(|v| c - 0.5 * ((v - mean) / sd).powi(2)).sum()
}

/// Jump-free maximum-likelihood fit; jump shape fields are placeholders.
pub fn gaussian_fit(returns: &[f64], dt: f64) -> Result<DejdParams> {
    if returns.len() < 2 {
        return Err(GapRiskError::InsufficientData {
            needed: 2,
            got: returns.len(),
        });
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    DejdParams::new(mean / dt, (var / dt).sqrt(), 0.0, 0.5, 100.0, 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DejdFit {
    pub params: DejdParams,
    pub log_likelihood: f64,
    /// Log-likelihood of the jump-free fit, for a likelihood-ratio read.
    pub gaussian_log_likelihood: f64,
    /// False when the best start stopped on its iteration cap.
    pub converged: bool,
    pub iterations: u64,
    pub starts: usize,
}

/// Unconstrained coordinates: drift in units of the sample sd, logs of
/// sigma, lambda, eta_up - 1 and eta_down, and the logit of p.
#[derive(Clone)]
struct Coords {
    dt: f64,
    sample_sd: f64,
}

impl Coords {
    fn to_params(&self, z: &[f64]) -> Result<DejdParams> {
        let ann_sd = self.sample_sd / self.dt.sqrt();
        let sigma = z[1].exp().clamp(0.1 * ann_sd, 10.0 * ann_sd);
        let lambda = z[2].exp().clamp(1e-4, MAX_JUMPS_PER_STEP / self.dt);
        let p = 1.0 / (1.0 + (-z[3]).exp());
        let eta_up = 1.0 + z[4].exp().clamp(1e-3, 1e5);
        let eta_down = z[5].exp().clamp(1e-3, 1e5);
        DejdParams::new(z[0] * self.sample_sd / self.dt, sigma, lambda, p.clamp(1e-9, 1.0 - 1e-9), eta_up, eta_down)
    }

    fn from_params(&self, p: &DejdParams) -> Vec<f64> {
        vec![
            p.mu * self.dt / self.sample_sd,
            p.sigma.ln(),
            p.jump_intensity.ln(),
            (p.p_up / (1.0 - p.p_up)).ln(),
            (p.eta_up - 1.0).ln(),
            p.eta_down.ln(),
        ]
    }
}

struct NegLogLik<'a> {
    coords: Coords,
    returns: &'a [f64],
}

impl CostFunction for NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let value = match self.coords.to_params(z) {
            Ok(p) => dejd_log_likelihood(&p, self.coords.dt, self.returns)
                .map(|ll| -ll / self.returns.len() as f64)
                .unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        };
        Ok(if value.is_finite() { value } else { 1e10 })
    }
}

struct StartResult {
    z: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: u64,
}

fn run_nelder_mead(problem: NegLogLik<'_>, z0: Vec<f64>) -> Option<StartResult> {
    let steps = [0.1, 0.2, 0.7, 0.7, 0.4, 0.4];
    let mut simplex = vec![z0.clone()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = z0.clone();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-10).ok()?;
    let res = Executor::new(problem, solver)
        .configure(|st| st.max_iters(MAX_ITERS))
        .run()
        .ok()?;
    let state = res.state();
    Some(StartResult {
        z: state.get_best_param()?.clone(),
        cost: state.get_best_cost(),
        converged: matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged)),
        iterations: state.get_iter(),
    })
}

/// Maximum-likelihood DEJD fit to `dt`-spaced log returns from a fixed set
/// of starting points; each start is polished by one restart.
pub fn fit_dejd(returns: &[f64], dt: f64) -> Result<DejdFit> {
    if returns.len() < MIN_RETURNS {
        return Err(GapRiskError::InsufficientData {
            needed: MIN_RETURNS,
            got: returns.len(),
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(invalid("returns", "must be finite"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let gauss = gaussian_fit(returns, dt)?;
    let sample_sd = gauss.sigma * dt.sqrt();
    if !(sample_sd > 0.0) {
        return Err(GapRiskError::Optimization("returns have zero variance".into()));
    }
    let gauss_ll = dejd_log_likelihood(&gauss, dt, returns)?;
    let coords = Coords { dt, sample_sd };

    // Jump size as a multiple of the sample sd, and the share of variance
    // carried by jumps.
    let mut starts = Vec::new();
    for size in [0.4, 1.2] {
        for share in [0.1, 0.4] {
            let a = size * sample_sd;
            let lambda = share * sample_sd * sample_sd / (2.0 * a * a * dt);
            let sigma = ((1.0 - share) * sample_sd * sample_sd / dt).sqrt();
            starts.push(DejdParams::new(gauss.mu, sigma, lambda, 0.5, 1.0 + 1.0 / a, 1.0 / a)?);
        }
    }
    let results: Vec<Option<StartResult>> = starts
        .par_iter()
        .map(|p| {
            let z0 = coords.from_params(p);
            let first = run_nelder_mead(NegLogLik { coords: coords.clone(), returns }, z0)?;
            let second = run_nelder_mead(NegLogLik { coords: coords.clone(), returns }, first.z.clone())?;
            Some(StartResult {
                iterations: first.iterations + second.iterations,
                ..if second.cost <= first.cost { second } else { first }
            })
        })
        .collect();
    let best = results
        .into_iter()
        .flatten()
        .filter(|r| r.cost.is_finite() && r.cost < 1e10)
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or_else(|| GapRiskError::Optimization("no start produced a finite likelihood".into()))?;
    let params = coords.to_params(&best.z)?;
    let ll = dejd_log_likelihood(&params, dt, returns)?;
    // The jump-free model is nested; never report a worse fit than it.
    let (params, ll) = if ll >= gauss_ll { (params, ll) } else { (gauss, gauss_ll) };
    Ok(DejdFit {
        params,
        log_likelihood: ll,
        gaussian_log_likelihood: gauss_ll,
        converged: best.converged,
        iterations: best.iterations,
        starts: starts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, Normal};

    #[test]
    fn gaussian_limit_matches_pdf() {
        let p = DejdParams::new(0.05, 0.2, 1e-12, 0.5, 50.0, 50.0).unwrap();
        let dt = 1.0 / 252.0;
        let n = Normal::new(0.05 * dt, 0.2 * dt.sqrt()).unwrap();
        let xs = [-0.04, -0.01, 0.0, 0.003, 0.02];
        for (x, f) in xs.iter().zip(dejd_density(&p, dt, &xs).unwrap()) {
            assert!((f - n.pdf(*x)).abs() < 1e-8 * n.pdf(0.0), "x={x}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = DejdParams::spx_2008_2013();
        let dt = 1.0 / 252.0;
        let h = 1e-4;
        let xs: Vec<f64> = (-3000..=3000).map(|i| i as f64 * h).collect();
        let f = dejd_density(&p, dt, &xs).unwrap();
        let mass: f64 = f.iter().sum::<f64>() * h;
        let mean: f64 = xs.iter().zip(&f).map(|(x, f)| x * f).sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        let want = (p.mu + p.jump_intensity * p.mean_jump()) * dt;
        assert!((mean - want).abs() < 1e-9);
        assert!(f.iter().all(|v| *v > -1e-12));
    }

    #[test]
    fn jump_free_likelihood_is_closed_form() {
        let p = DejdParams::new(0.1, 0.25, 0.0, 0.5, 10.0, 10.0).unwrap();
        let r = [0.01, -0.02, 0.005];
        let dt = 1.0 / 252.0;
        let n = Normal::new(0.1 * dt, 0.25 * dt.sqrt()).unwrap();
        let want: f64 = r.iter().map(|x| n.ln_pdf(*x)).sum();
        assert!((dejd_log_likelihood(&p, dt, &r).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_enough_data() {
        assert!(matches!(
            fit_dejd(&[0.0; 10], 1.0 / 252.0),
            Err(GapRiskError::InsufficientData { needed: 500, got: 10 })
        ));
    }
}
