use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

/// Per-timestep noise coefficients for `t = 1..=T`, with the convention
/// `alpha_bar[0] = 1`. Index 0 of `betas` and `alphas` is unused padding.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    horizon: usize,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

fn cosine_f(t: f64, horizon: f64, s: f64) -> f64 {
    (((t / horizon + s) / (1.0 + s)) * FRAC_PI_2).cos().powi(2)
}

impl NoiseSchedule {
    /// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
    /// `f(t) = cos^2(((t/T + s) / (1 + s)) pi/2)`, realized through
    /// `beta_t = min(1 - f(t)/f(t-1), max_beta)` so that
    /// `alpha_bar_t = alpha_bar_{t-1} (1 - beta_t)` holds exactly.
    pub fn cosine(horizon: usize, s: f64, max_beta: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon T must be >= 1".into()));
        }
        let big_t = horizon as f64;
        let betas: Vec<f64> = std::iter::once(0.0)
            .chain((1..=horizon).map(|t| {
                let ratio = cosine_f(t as f64, big_t, s) / cosine_f(t as f64 - 1.0, big_t, s);
                (1.0 - ratio).min(max_beta)
            }))
            .collect();
        Ok(Self::from_betas(betas))
    }

    pub fn cosine_default(horizon: usize) -> Result<Self> {
        Self::cosine(horizon, COSINE_OFFSET, MAX_BETA)
    }

    /// `betas[0]` is ignored.
    fn from_betas(betas: Vec<f64>) -> Self {
        let horizon = betas.len() - 1;
        let mut alphas = vec![1.0; horizon + 1];
        let mut alpha_bars = vec![1.0; horizon + 1];
        for t in 1..=horizon {
            alphas[t] = 1.0 - betas[t];
            alpha_bars[t] = alpha_bars[t - 1] * alphas[t];
        }
        Self {
            horizon,
            betas,
            alphas,
            alpha_bars,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: self.horizon,
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    /// Defined for `t = 0..=T`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `beta~_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t]) * self.betas[t]
    }

    /// Coefficients `(on x0, on x_t)` of the posterior mean.
    pub fn posterior_mean_coefs(&self, t: usize) -> (f64, f64) {
        let denom = 1.0 - self.alpha_bars[t];
        (
            self.alpha_bars[t - 1].sqrt() * self.betas[t] / denom,
            self.alphas[t].sqrt() * (1.0 - self.alpha_bars[t - 1]) / denom,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basic_properties() {
        let s = NoiseSchedule::cosine_default(200).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=200 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.beta(t) > 0.0 && s.beta(t) <= MAX_BETA);
            assert!((s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() < 1e-15);
        }
        assert!(s.alpha_bar(200) < 1e-3);
        assert_eq!(s.posterior_variance(1), 0.0);
    }

    #[test]
    fn cosine_midpoint_closed_form() {
        let s = NoiseSchedule::cosine_default(1000).unwrap();
        let f = |t: f64| (((t / 1000.0 + 0.008) / 1.008) * std::f64::consts::PI / 2.0).cos().powi(2);
        let want = f(500.0) / f(0.0);
        assert!((s.alpha_bar(500) - want).abs() < 1e-12);
        assert!((s.alpha_bar(500) - 0.4939).abs() < 2e-4);
    }

    #[test]
    fn last_beta_is_clipped() {
        let s = NoiseSchedule::cosine_default(50).unwrap();
        assert_eq!(s.beta(50), MAX_BETA);
        assert!(NoiseSchedule::cosine_default(0).is_err());
        assert!(s.check_t(0).is_err() && s.check_t(51).is_err() && s.check_t(50).is_ok());
    }
}
