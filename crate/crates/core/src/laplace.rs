//! Two-sided Laplace inversion for the return cdf and undiscounted put/call
//! values of a DEJD horizon increment.
//!
//! Every quantity is written as a Bromwich integral along `Re(z) = a` of a
//! transform built from the moment generating function `M(s)` of the centred
//! increment `Y = X - drift`:
//!
//! | quantity                      | transform              | strip            |
//! |-------------------------------|------------------------|------------------|
//! | `F(y)` (for `y <= 0`)         | `M(-z) / z`            | `(0, eta_down)`  |
//! | `F(y) - 1` (for `y >= 0`)     | same                   | `(-eta_up, 0)`   |
//! | `E[(e^k - e^Y)^+]` (`k <= 0`) | `M(1-z) / (z(z-1))`    | `(1, 1+eta_down)`|
//! | `E[(e^Y - e^k)^+]` (`k >= 0`) | same                   | `(1-eta_up, 0)`  |
//!
//! The trapezoid rule with step `2 pi / P` aliases the target with copies
//! shifted by multiples of `P` and damped by `e^{-a P}`; Chernoff tail bounds
//! turn that into an explicit discretization bound. The tail of the series is
//! bounded through the Gaussian factor `e^{-v w^2 / 2}` of `|M|`. One period
//! `P` and one term count `N` are chosen to satisfy all four bounds, so the
//! cdf and option inversions of a given law always share their setting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::dejd::{DejdParams, DriftView};
use crate::error::{invalid, GapRiskError, Result};

/// Put values whose Chernoff bound falls below this are returned as zero.
pub const DEEP_OTM_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub abs_tolerance: f64,
    pub max_terms: usize,
    /// Admissible damping as fractions `(lo, hi)` of the distance from the
    /// origin to the nearest pole of the relevant strip.
    pub damping_bounds: (f64, f64),
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-10,
            max_terms: 4096,
            damping_bounds: (1e-3, 1.0 / 3.0),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tolerance > 0.0) {
            return Err(invalid("abs_tolerance", "must be > 0"));
        }
        if self.max_terms < 64 {
            return Err(invalid("max_terms", "must be >= 64"));
        }
        let (lo, hi) = self.damping_bounds;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(invalid(
                "damping_bounds",
                format!("need 0 < lo <= hi < 1, got ({lo}, {hi})"),
            ));
        }
        Ok(())
    }
}

/// One Bromwich line: abscissa and sampled transform values `G(a + i n d)`.
#[derive(Debug, Clone)]
struct Line {
    abscissa: f64,
    samples: Vec<Complex64>,
}

impl Line {
    /// Trapezoid sum `e^{a w} (d/pi) [G(a)/2 + sum Re(e^{i n d w} G_n)]`.
    #[inline]
    fn invert(&self, w: f64, step: f64) -> f64 {
        let (s, c) = (step * w).sin_cos();
        let rot = Complex64::new(c, s);
        let mut phase = rot;
        let mut acc = 0.5 * self.samples[0].re;
        for g in &self.samples[1..] {
            acc += phase.re * g.re - phase.im * g.im;
            phase *= rot;
        }
        (self.abscissa * w).exp() * step / PI * acc
    }
}

#[derive(Debug, Clone)]
enum Shape {
    /// Point mass at the drift.
    Degenerate,
    Inverted {
        step: f64,
        cdf_left: Box<Line>,
        cdf_right: Box<Line>,
        put: Box<Line>,
        call: Box<Line>,
        /// Discretization plus truncation bound of each evaluation.
        error_bound: f64,
    },
}

/// Precomputed inversion for the centred increment of one (params,
/// vol_scale, horizon) law. Evaluations only differ through the drift and
/// the threshold, so one kernel serves every cell of a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct InversionKernel {
    view: DriftView,
    horizon: f64,
    cfg: InversionConfig,
    shape: Shape,
    /// `E[e^Y]` of the centred increment.
    forward: f64,
    /// Standard deviation of the centred increment.
    sd: f64,
}

/// Bounds handed to [`required_period`]: decay rates and log prefactors of
/// the two aliasing tails.
struct AliasTail {
    near_rate: f64,
    near_log_scale: f64,
    far_rate: f64,
    far_log_scale: f64,
}

impl AliasTail {
    fn bound(&self, period: f64) -> f64 {
        let geo = |rate: f64, log_scale: f64| {
            let r = (-rate * period).exp();
            (log_scale - rate * period).exp() / (1.0 - r)
        };
        geo(self.near_rate, self.near_log_scale) + geo(self.far_rate, self.far_log_scale)
    }

    fn min_rate(&self) -> f64 {
        self.near_rate.min(self.far_rate)
    }
}

fn required_period(tails: &[AliasTail], target: f64) -> f64 {
    let mut period = tails
        .iter()
        .map(|t| ((2.0f64).ln() + t.near_log_scale.max(t.far_log_scale).max(0.0) - target.ln()) / t.min_rate())
        .fold(1e-6, f64::max);
    while period.is_finite() && tails.iter().map(|t| t.bound(period)).sum::<f64>() > target {
        period *= 1.05;
    }
    period
}

/// Upper bound of `(d/pi) * e^log_scale * sum_{n > N} e^{-v (n d)^2 / 2} / (n d)^p`.
fn truncation_bound(step: f64, terms: usize, variance: f64, log_scale: f64, power: i32) -> f64 {
    if variance <= 0.0 {
        return f64::INFINITY;
    }
    let edge = terms as f64 * step;
    let gauss_tail = (PI / (2.0 * variance)).sqrt() / step * erfc(edge * (variance / 2.0).sqrt());
    ((step / PI).ln() + log_scale + gauss_tail.ln() - power as f64 * edge.ln()).exp()
}

impl InversionKernel {
    /// Builds the kernel for the centred law of `view` over `horizon`; the
    /// drift of `view` is only used by the convenience methods taking no
    /// explicit drift.
    pub fn new(view: &DriftView, horizon: f64, cfg: &InversionConfig) -> Result<Self> {
        cfg.validate()?;
        view.base.validate()?;
        if !(horizon > 0.0) {
            return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        let b = view.base;
        let v = view.diffusion_variance(horizon);
        let lh = b.jump_intensity * horizon;
        let forward = if lh > 0.0 || v > 0.0 {
            view.centered_cumulant_real(horizon, 1.0).exp()
        } else {
            1.0
        };
        if v <= 0.0 && lh <= 0.0 {
            return Ok(Self {
                view: *view,
                horizon,
                cfg: *cfg,
                shape: Shape::Degenerate,
                forward,
                sd: 0.0,
            });
        }
        let sd = view.variance(horizon).sqrt();
        let (lo, hi) = cfg.damping_bounds;
        let (up_edge, down_edge) = if lh > 0.0 {
            (b.eta_up, b.eta_down)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let damping = |edge: f64| -> f64 {
            let natural = 2.0 / sd;
            if edge.is_finite() {
                natural.clamp(lo * edge, hi * edge)
            } else {
                natural
            }
        };
        let log_mgf = |s: f64| view.centered_cumulant_real(horizon, s);
        let mid = |a: f64, edge: f64| -> f64 {
            if edge.is_finite() {
                0.5 * (a + edge)
            } else {
                2.0 * a
            }
        };

        // cdf, y <= 0: a in (0, eta_down).
        let a_cl = damping(down_edge);
        let beta_cl = mid(a_cl, down_edge);
        // cdf, y >= 0: a in (-eta_up, 0).
        let a_cr = damping(up_edge);
        let beta_cr = mid(a_cr, up_edge);
        // put, k <= 0: a = 1 + delta with delta in (0, eta_down).
        let d_p = damping(down_edge);
        let beta_p = mid(d_p, down_edge);
        // call, k >= 0: a = -delta with delta in (0, eta_up - 1).
        let call_edge = up_edge - 1.0;
        let d_c = damping(call_edge);
        let beta_c = mid(d_c, call_edge);

        let tails = [
            AliasTail {
                near_rate: a_cl,
                near_log_scale: 0.0,
                far_rate: beta_cl - a_cl,
                far_log_scale: log_mgf(-beta_cl),
            },
            AliasTail {
                near_rate: beta_cr - a_cr,
                near_log_scale: log_mgf(beta_cr),
                far_rate: a_cr,
                far_log_scale: 0.0,
            },
            AliasTail {
                near_rate: d_p,
                near_log_scale: 0.0,
                far_rate: beta_p - d_p,
                far_log_scale: log_mgf(-beta_p),
            },
            AliasTail {
                near_rate: beta_c - d_c,
                near_log_scale: log_mgf(1.0 + beta_c),
                far_rate: d_c,
                far_log_scale: forward.ln(),
            },
        ];
        let budget = cfg.abs_tolerance / 4.0;
        let period = required_period(&tails, budget);
        if !period.is_finite() {
            return Err(GapRiskError::Convergence {
                tolerance: cfg.abs_tolerance,
                achieved: f64::INFINITY,
                max_terms: cfg.max_terms,
            });
        }
        let step = 2.0 * PI / period;
        let disc = tails.iter().map(|t| t.bound(period)).fold(0.0, f64::max);

        // Prefactors |G| <= M(Re s) e^{-v w^2/2} / |w|^p on each line.
        let scales = [
            (log_mgf(-a_cl), 1),
            (log_mgf(a_cr), 1),
            (log_mgf(-d_p), 2),
            (log_mgf(1.0 + d_c), 2),
        ];
        let trunc_at = |n: usize| {
            scales
                .iter()
                .map(|&(s, p)| truncation_bound(step, n, v, s, p))
                .fold(0.0, f64::max)
        };
        let mut terms = 16usize;
        while !(trunc_at(terms) <= budget) && terms < cfg.max_terms {
            terms = (terms * 2).min(cfg.max_terms);
        }
        if !(trunc_at(terms) <= budget) {
            let achieved = disc + trunc_at(cfg.max_terms);
            return Err(GapRiskError::Convergence {
                tolerance: cfg.abs_tolerance,
                achieved,
                max_terms: cfg.max_terms,
            });
        }
        // Tighten the count by bisection between terms/2 and terms.
        let (mut lo_n, mut hi_n) = (terms / 2, terms);
        while hi_n - lo_n > 1 {
            let m = (lo_n + hi_n) / 2;
            if !(trunc_at(m) <= budget) {
                lo_n = m;
            } else {
                hi_n = m;
            }
        }
        let terms = hi_n;
        let error_bound = disc + trunc_at(terms);

        let m_complex = |s: Complex64| view.centered_cumulant(horizon, s).exp();
        let sample = |a: f64, g: &dyn Fn(Complex64) -> Complex64| -> Box<Line> {
            let samples = (0..=terms)
                .map(|n| g(Complex64::new(a, n as f64 * step)))
                .collect();
            Box::new(Line {
                abscissa: a,
                samples,
            })
        };
        let cdf_t = |z: Complex64| m_complex(-z) / z;
        let opt_t = |z: Complex64| m_complex(1.0 - z) / (z * (z - 1.0));

        Ok(Self {
            view: *view,
            horizon,
            cfg: *cfg,
            forward,
            sd,
            shape: Shape::Inverted {
                step,
                cdf_left: sample(a_cl, &cdf_t),
                cdf_right: sample(-a_cr, &cdf_t),
                put: sample(1.0 + d_p, &opt_t),
                call: sample(-d_c, &opt_t),
                error_bound,
            },
        })
    }

    pub fn view(&self) -> &DriftView {
        &self.view
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn config(&self) -> &InversionConfig {
        &self.cfg
    }

    /// Terms summed per evaluation; zero for a point mass.
    pub fn terms(&self) -> usize {
        match &self.shape {
            Shape::Degenerate => 0,
            Shape::Inverted { put, .. } => put.samples.len() - 1,
        }
    }

    /// Period of the aliased copies, `2 pi / step`.
    pub fn period(&self) -> f64 {
        match &self.shape {
            Shape::Degenerate => f64::INFINITY,
            Shape::Inverted { step, .. } => 2.0 * PI / step,
        }
    }

    /// Combined discretization and truncation bound of one inversion of the
    /// centred law.
    pub fn error_bound(&self) -> f64 {
        match &self.shape {
            Shape::Degenerate => 0.0,
            Shape::Inverted { error_bound, .. } => *error_bound,
        }
    }

    /// `E[e^{X}]` for the given drift.
    pub fn forward(&self, drift: f64) -> f64 {
        drift.exp() * self.forward
    }

    /// `P(X <= x)` where `X = drift + Y`.
    pub fn cdf(&self, drift: f64, x: f64) -> f64 {
        let y = x - drift;
        match &self.shape {
            Shape::Degenerate => {
                if y >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Inverted {
                step,
                cdf_left,
                cdf_right,
                ..
            } => {
                if y == f64::NEG_INFINITY {
                    return 0.0;
                }
                if y == f64::INFINITY {
                    return 1.0;
                }
                let f = if y <= 0.0 {
                    cdf_left.invert(y, *step)
                } else {
                    1.0 + cdf_right.invert(y, *step)
                };
                f.clamp(0.0, 1.0)
            }
        }
    }

    /// Chernoff bound on `E[(K - e^X)^+] <= K P(X <= ln K)`.
    fn put_chernoff(&self, drift: f64, strike: f64) -> f64 {
        let y = strike.ln() - drift;
        if y >= 0.0 {
            return strike;
        }
        let b = self.view.base;
        let edge = if b.jump_intensity > 0.0 {
            b.eta_down
        } else {
            f64::INFINITY
        };
        // Minimise beta*y + K(-beta) over a coarse ladder inside the strip.
        let best = (1..=40)
            .map(|i| {
                let beta = if edge.is_finite() {
                    edge * i as f64 / 41.0
                } else {
                    i as f64 * 10.0 / self.view.variance(self.horizon).sqrt().max(1e-12) / 40.0
                };
                beta * y + self.view.centered_cumulant_real(self.horizon, -beta)
            })
            .fold(0.0, f64::min);
        strike * best.exp().min(1.0)
    }

    /// Undiscounted `E[(K - e^X)^+]`.
    pub fn put(&self, drift: f64, strike: f64) -> Result<f64> {
        if !(strike > 0.0) {
            return Err(invalid("strike_ratio", format!("must be > 0, got {strike}")));
        }
        match &self.shape {
            Shape::Degenerate => Ok((strike - drift.exp()).max(0.0)),
            Shape::Inverted {
                step,
                put,
                call,
                error_bound,
                ..
            } => {
                let scale = drift.exp();
                self.check_scaled_bound(scale * error_bound)?;
                let k = strike.ln() - drift;
                if k < -4.0 * self.sd && self.put_chernoff(drift, strike) < DEEP_OTM_FLOOR {
                    return Ok(0.0);
                }
                let centred = if k <= 0.0 {
                    put.invert(k, *step)
                } else {
                    call.invert(k, *step) + k.exp() - self.forward
                };
                Ok((scale * centred).clamp(0.0, strike))
            }
        }
    }

    /// Undiscounted `E[(e^X - K)^+]`.
    pub fn call(&self, drift: f64, strike: f64) -> Result<f64> {
        if !(strike > 0.0) {
            return Err(invalid("strike_ratio", format!("must be > 0, got {strike}")));
        }
        match &self.shape {
            Shape::Degenerate => Ok((drift.exp() - strike).max(0.0)),
            Shape::Inverted {
                step,
                put,
                call,
                error_bound,
                ..
            } => {
                let scale = drift.exp();
                self.check_scaled_bound(scale * error_bound)?;
                let k = strike.ln() - drift;
                let centred = if k >= 0.0 {
                    call.invert(k, *step)
                } else {
                    put.invert(k, *step) - k.exp() + self.forward
                };
                Ok((scale * centred).max(0.0))
            }
        }
    }

    fn check_scaled_bound(&self, bound: f64) -> Result<()> {
        if bound > self.cfg.abs_tolerance {
            return Err(GapRiskError::Convergence {
                tolerance: self.cfg.abs_tolerance,
                achieved: bound,
                max_terms: self.cfg.max_terms,
            });
        }
        Ok(())
    }
}

/// `P(X <= x)` for the increment of `view` over `horizon`.
pub fn return_cdf(view: &DriftView, horizon: f64, x: f64, cfg: &InversionConfig) -> Result<f64> {
    if x.is_nan() {
        return Err(invalid("x", "must not be NaN"));
    }
    Ok(InversionKernel::new(view, horizon, cfg)?.cdf(view.drift, x))
}

/// Undiscounted put `E[(K - e^X)^+]` per unit spot.
pub fn put_value(view: &DriftView, horizon: f64, strike: f64, cfg: &InversionConfig) -> Result<f64> {
    InversionKernel::new(view, horizon, cfg)?.put(view.drift, strike)
}

/// Undiscounted call `E[(e^X - K)^+]` per unit spot.
pub fn call_value(
    view: &DriftView,
    horizon: f64,
    strike: f64,
    cfg: &InversionConfig,
) -> Result<f64> {
    InversionKernel::new(view, horizon, cfg)?.call(view.drift, strike)
}

/// Convenience constructor of the unconditional kernel over `horizon`.
pub fn unconditional_kernel(
    params: &DejdParams,
    horizon: f64,
    cfg: &InversionConfig,
) -> Result<InversionKernel> {
    InversionKernel::new(&DriftView::unconditional(*params, horizon), horizon, cfg)
}
