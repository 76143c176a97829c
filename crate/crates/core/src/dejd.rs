//! Double-exponential jump-diffusion collateral model.
//!
//! The log-return over a horizon `u` is
//!
//! ```text
//! X = drift + sigma * vol_scale * W(u) + sum_{j <= N(u)} Y_j
//! ```
//!
//! with `N` Poisson of rate `jump_intensity` and `Y_j` mixed exponential:
//! up-jumps with probability `p_up` and rate `eta_up`, down-jumps with
//! probability `1 - p_up` and rate `eta_down`.
//!
//! A [`DriftView`] carries the drift over the horizon explicitly so the same
//! machinery serves both the unconditional law and the law conditional on a
//! credit Brownian path, where the drift absorbs `sigma * rho * dW_c` and the
//! diffusion is scaled by `sqrt(1 - rho^2)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GapRiskError, Result};

/// Trading days per year; all day counts in the crate use this convention.
pub const TRADING_DAYS: f64 = 252.0;

/// Converts a number of trading days to a year fraction.
pub fn trading_days(days: f64) -> f64 {
    days / TRADING_DAYS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DejdParams {
    /// Log drift per year.
    pub mu: f64,
    /// Diffusion volatility per sqrt(year).
    pub sigma: f64,
    /// Poisson jump rate per year.
    pub jump_intensity: f64,
    /// Probability that a jump is an up-jump.
    pub p_up: f64,
    /// Rate of the exponential up-jump size; must exceed 1.
    pub eta_up: f64,
    /// Rate of the exponential down-jump size.
    pub eta_down: f64,
}

impl DejdParams {
    pub fn new(
        mu: f64,
        sigma: f64,
        jump_intensity: f64,
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
    ) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            jump_intensity,
            p_up,
            eta_up,
            eta_down,
        };
        p.validate()?;
        Ok(p)
    }

    /// SPX 500 estimate over 2008-2013 used throughout the haircut studies.
    pub fn spx_2008_2013() -> Self {
        Self {
            mu: 0.1231,
            sigma: 0.2399,
            jump_intensity: 79.7697,
            p_up: 0.4596,
            eta_up: 169.96,
            eta_down: 128.36,
        }
    }

    /// Pure Gaussian model with the given log drift and volatility.
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            jump_intensity: 0.0,
            p_up: 0.5,
            eta_up: 50.0,
            eta_down: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if !(self.jump_intensity >= 0.0 && self.jump_intensity.is_finite()) {
            return Err(invalid(
                "jump_intensity",
                format!("must be >= 0, got {}", self.jump_intensity),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_up) {
            return Err(invalid("p_up", format!("must lie in [0, 1], got {}", self.p_up)));
        }
        if !(self.eta_up > 1.0 && self.eta_up.is_finite()) {
            return Err(invalid("eta_up", format!("must exceed 1, got {}", self.eta_up)));
        }
        if !(self.eta_down > 0.0 && self.eta_down.is_finite()) {
            return Err(invalid(
                "eta_down",
                format!("must be > 0, got {}", self.eta_down),
            ));
        }
        Ok(())
    }

    pub fn q_down(&self) -> f64 {
        1.0 - self.p_up
    }

    /// `E[e^{sY}]` of a single jump, finite for `-eta_down < Re(s) < eta_up`.
    pub fn jump_mgf(&self, s: Complex64) -> Complex64 {
        self.p_up * self.eta_up / (self.eta_up - s) + self.q_down() * self.eta_down / (self.eta_down + s)
    }

    /// Mean jump size `p/eta_up - q/eta_down`.
    pub fn mean_jump(&self) -> f64 {
        self.p_up / self.eta_up - self.q_down() / self.eta_down
    }

    /// Second moment of a jump `2p/eta_up^2 + 2q/eta_down^2`.
    pub fn jump_second_moment(&self) -> f64 {
        2.0 * self.p_up / (self.eta_up * self.eta_up)
            + 2.0 * self.q_down() / (self.eta_down * self.eta_down)
    }
}

/// The law of the log-return over one horizon: the base jump structure with
/// an explicit total drift and a diffusion scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftView {
    pub base: DejdParams,
    /// Total log drift over the horizon (dimensionless).
    pub drift: f64,
    /// Multiplier on `base.sigma`, in `[0, 1]`.
    pub vol_scale: f64,
}

impl DriftView {
    /// Unconditional view: drift `mu * horizon`, full diffusion.
    pub fn unconditional(base: DejdParams, horizon: f64) -> Self {
        Self {
            base,
            drift: base.mu * horizon,
            vol_scale: 1.0,
        }
    }

    pub fn with_drift(base: DejdParams, drift: f64, vol_scale: f64) -> Result<Self> {
        base.validate()?;
        if !(0.0..=1.0).contains(&vol_scale) {
            return Err(invalid("vol_scale", format!("must lie in [0, 1], got {vol_scale}")));
        }
        if !drift.is_finite() {
            return Err(invalid("drift", "must be finite"));
        }
        Ok(Self {
            base,
            drift,
            vol_scale,
        })
    }

    /// Diffusion variance over the horizon.
    pub fn diffusion_variance(&self, horizon: f64) -> f64 {
        let s = self.base.sigma * self.vol_scale;
        s * s * horizon
    }

    pub fn mean(&self, horizon: f64) -> f64 {
        self.drift + self.base.jump_intensity * horizon * self.base.mean_jump()
    }

    pub fn variance(&self, horizon: f64) -> f64 {
        self.diffusion_variance(horizon)
            + self.base.jump_intensity * horizon * self.base.jump_second_moment()
    }

    /// Cumulant `log E[e^{s(X - drift)}]` of the centred increment at a
    /// complex argument. The caller is responsible for staying inside the
    /// strip `-eta_down < Re(s) < eta_up`.
    pub fn centered_cumulant(&self, horizon: f64, s: Complex64) -> Complex64 {
        let v = self.diffusion_variance(horizon);
        let lh = self.base.jump_intensity * horizon;
        0.5 * v * s * s + lh * (self.base.jump_mgf(s) - 1.0)
    }

    /// Real cumulant of the centred increment.
    pub fn centered_cumulant_real(&self, horizon: f64, s: f64) -> f64 {
        let v = self.diffusion_variance(horizon);
        let lh = self.base.jump_intensity * horizon;
        let b = &self.base;
        0.5 * v * s * s
            + lh * (b.p_up * b.eta_up / (b.eta_up - s) + b.q_down() * b.eta_down / (b.eta_down + s) - 1.0)
    }

    /// First derivative of [`Self::centered_cumulant_real`] in `s`.
    pub fn centered_cumulant_slope(&self, horizon: f64, s: f64) -> f64 {
        let v = self.diffusion_variance(horizon);
        let lh = self.base.jump_intensity * horizon;
        let b = &self.base;
        v * s
            + lh * (b.p_up * b.eta_up / ((b.eta_up - s) * (b.eta_up - s))
                - b.q_down() * b.eta_down / ((b.eta_down + s) * (b.eta_down + s)))
    }
}

/// `log E[e^{sX}]` for the horizon increment described by `view`.
///
/// Errors when `s` sits on or outside a pole of the jump transform.
pub fn levy_exponent(view: &DriftView, horizon: f64, s: f64) -> Result<f64> {
    let b = &view.base;
    if s >= b.eta_up || s <= -b.eta_down {
        return Err(GapRiskError::Domain(format!(
            "transform argument {s} outside ({}, {})",
            -b.eta_down, b.eta_up
        )));
    }
    Ok(s * view.drift + view.centered_cumulant_real(horizon, s))
}

/// Exact draw of the log-return over `horizon`.
pub fn sample_increment<R: Rng + ?Sized>(view: &DriftView, horizon: f64, rng: &mut R) -> f64 {
    let b = &view.base;
    let mut x = view.drift;
    let sd = view.diffusion_variance(horizon).sqrt();
    if sd > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        x += sd * z;
    }
    let mean_jumps = b.jump_intensity * horizon;
    if mean_jumps > 0.0 {
        let n = Poisson::new(mean_jumps)
            .map(|d| d.sample(rng) as u64)
            .unwrap_or(0);
        for _ in 0..n {
            let e: f64 = Exp1.sample(rng);
            if rng.random::<f64>() < b.p_up {
                x += e / b.eta_up;
            } else {
                x -= e / b.eta_down;
            }
        }
    }
    x
}

/// Law of the asset log-return over `horizon` conditional on the credit
/// Brownian increment `credit_increment` over the same window.
pub fn conditional_view(
    params: &DejdParams,
    rho: f64,
    credit_increment: f64,
    horizon: f64,
) -> Result<DriftView> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("must lie in [-1, 1], got {rho}")));
    }
    DriftView::with_drift(
        *params,
        params.mu * horizon + params.sigma * rho * credit_increment,
        (1.0 - rho * rho).max(0.0).sqrt(),
    )
}
