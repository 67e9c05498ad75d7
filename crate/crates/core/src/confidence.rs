//! Confidence radii and membership tests for the reward and transition
//! confidence sets, in the frequentist (RKHS) and Bayesian (GP prior with a
//! discretization argument) flavors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpPosterior, TransitionPosterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    #[default]
    Frequentist,
    BayesGp,
}

/// Derivative-bound constants and box sides for the Bayesian sets. The
/// reward GP's partial derivatives satisfy `P(sup |df/dz_j| > L) <= a e^{-(L/b)^2}`
/// and the boxes are `[0, c1]^m` and `[0, c2]^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesConstants {
    #[serde(default = "one")]
    pub a_r: f64,
    #[serde(default = "one")]
    pub b_r: f64,
    #[serde(default = "one")]
    pub a_p: f64,
    #[serde(default = "one")]
    pub b_p: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for BayesConstants {
    fn default() -> Self {
        BayesConstants {
            a_r: 1.0,
            b_r: 1.0,
            a_p: 1.0,
            b_p: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceConfig {
    /// RKHS norm bound of the mean reward function.
    pub b_r: f64,
    /// RKHS norm bound of the mean transition function.
    pub b_p: f64,
    pub sigma_r: f64,
    pub sigma_p: f64,
    pub delta: f64,
    pub horizon: usize,
    /// State dimension.
    pub m: usize,
    /// Action dimension.
    pub n: usize,
    /// Lipschitz bound on the one-step future value function.
    pub lipschitz: f64,
    pub mode: ConfidenceMode,
    pub bayes: BayesConstants,
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be nonnegative, got {v}")))
            }
        };
        positive("B_R", self.b_r)?;
        positive("B_P", self.b_p)?;
        nonneg("sigma_R", self.sigma_r)?;
        nonneg("sigma_P", self.sigma_p)?;
        nonneg("lipschitz", self.lipschitz)?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.horizon == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::config("horizon and state/action dimensions must be at least 1"));
        }
        if self.mode == ConfidenceMode::BayesGp {
            let b = &self.bayes;
            for (name, v) in [("a_R", b.a_r), ("b_R", b.b_r), ("a_P", b.a_p), ("b_P", b.b_p), ("c1", b.c1), ("c2", b.c2)] {
                positive(name, v)?;
            }
        }
        Ok(())
    }
}

/// `beta_{R,l} = B_R + sigma_R / sqrt(H) * sqrt(2 (ln(3/delta) + gamma))`,
/// where `gamma` is the MIG estimate after `(l-1) H` reward observations.
pub fn beta_r(cfg: &ConfidenceConfig, _l: usize, gamma_prev: f64) -> f64 {
    let h = cfg.horizon as f64;
    cfg.b_r + cfg.sigma_r / h.sqrt() * (2.0 * ((3.0 / cfg.delta).ln() + gamma_prev)).sqrt()
}

/// `beta_{P,l} = B_P + sigma_P / sqrt(mH) * sqrt(2 (ln(3/delta) + gamma))`,
/// with `gamma` the MIG estimate after `m (l-1) H` indexed observations.
pub fn beta_p(cfg: &ConfidenceConfig, _l: usize, gamma_prev: f64) -> f64 {
    let mh = (cfg.m * cfg.horizon) as f64;
    cfg.b_p + cfg.sigma_p / mh.sqrt() * (2.0 * ((3.0 / cfg.delta).ln() + gamma_prev)).sqrt()
}

/// Schedule lookup with `gamma_0 = 0`; `schedule[t - 1]` holds `gamma_t`.
pub fn gamma_at(schedule: &[f64], t: usize) -> Result<f64> {
    if t == 0 {
        return Ok(0.0);
    }
    schedule.get(t - 1).copied().ok_or_else(|| {
        Error::input(format!(
            "information-gain schedule has {} entries, gamma_{t} requested",
            schedule.len()
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `[mu(z) - beta sigma(z), mu(z) + beta sigma(z)]`.
pub fn reward_band(posterior: &GpPosterior, beta: f64, z: &[f64]) -> Result<Interval> {
    reward_band_with_slack(posterior, beta, 0.0, z)
}

/// Reward band widened by an additive `slack` (the `1/l^2` term of the
/// Bayesian set).
pub fn reward_band_with_slack(posterior: &GpPosterior, beta: f64, slack: f64, z: &[f64]) -> Result<Interval> {
    if !(beta >= 0.0) {
        return Err(Error::input(format!("beta must be nonnegative, got {beta}")));
    }
    let (mu, var) = posterior.predict(z)?;
    let half = beta * var.max(0.0).sqrt() + slack;
    Ok(Interval {
        lo: mu - half,
        hi: mu + half,
    })
}

/// Ball `{ f(z) : ||f(z) - mu_P(z)||_2 <= beta ||sigma_P(z)||_2 }`,
/// returned as `(center, radius)`.
pub fn transition_ball(posterior: &TransitionPosterior, beta: f64, z: &[f64]) -> Result<(Vec<f64>, f64)> {
    if !(beta >= 0.0) {
        return Err(Error::input(format!("beta must be nonnegative, got {beta}")));
    }
    let (mu, sd) = posterior.predict_transition(z)?;
    let radius = beta * l2(&sd);
    Ok((mu, radius))
}

pub fn ball_contains(center: &[f64], radius: f64, v: &[f64]) -> bool {
    let d: f64 = center.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    d <= radius
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn require_bayes(cfg: &ConfidenceConfig) -> Result<()> {
    if cfg.mode != ConfidenceMode::BayesGp {
        return Err(Error::config("discretization grid sizes are only defined in bayes-gp mode"));
    }
    Ok(())
}

fn grid_term(c: f64, dim: usize, l: usize, b: f64, log_arg: f64) -> f64 {
    let lg = log_arg.ln();
    if !(lg > 0.0) {
        return 0.0;
    }
    (2.0 * c * dim as f64 * (l * l) as f64 * b * lg.sqrt()).powi(dim as i32)
}

fn ceil_size(v: f64) -> u64 {
    // float-to-int casts saturate at u64::MAX
    (v.ceil() as u64).max(1)
}

/// Discretization sizes `(|S_l|, |A_l|)` for the Bayesian confidence sets.
pub fn bayes_grid_sizes(cfg: &ConfidenceConfig, l: usize) -> Result<(u64, u64)> {
    require_bayes(cfg)?;
    let b = &cfg.bayes;
    let (m, n) = (cfg.m, cfg.n);
    let reward_arg = 6.0 * (m + n) as f64 * b.a_r / cfg.delta;
    let trans_arg = 6.0 * (m * (m + n)) as f64 * b.a_p / cfg.delta;
    let s = grid_term(b.c1, m, l, b.b_r, reward_arg).max(grid_term(b.c1, m, l, b.b_p, trans_arg));
    let a = grid_term(b.c2, n, l, b.b_r, reward_arg).max(grid_term(b.c2, n, l, b.b_p, trans_arg));
    Ok((ceil_size(s), ceil_size(a)))
}

/// `sqrt(2 ln(|S_l| |A_l| pi^2 l^2 / delta))`.
pub fn bayes_beta_r(cfg: &ConfidenceConfig, l: usize, s_size: u64, a_size: u64) -> f64 {
    bayes_beta(cfg, l, s_size, a_size, 1.0)
}

/// `sqrt(2 ln(|S_l| |A_l| m pi^2 l^2 / delta))`.
pub fn bayes_beta_p(cfg: &ConfidenceConfig, l: usize, s_size: u64, a_size: u64) -> f64 {
    bayes_beta(cfg, l, s_size, a_size, cfg.m as f64)
}

fn bayes_beta(cfg: &ConfidenceConfig, l: usize, s_size: u64, a_size: u64, extra: f64) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let lf = l as f64;
    let log = (s_size as f64).ln() + (a_size as f64).ln() + extra.ln() + (pi2 * lf * lf / cfg.delta).ln();
    (2.0 * log).max(0.0).sqrt()
}

/// Additive widening of the Bayesian reward band, `1 / l^2`.
pub fn bayes_reward_slack(l: usize) -> f64 {
    1.0 / (l * l) as f64
}

/// Additive widening of the Bayesian transition ball, `sqrt(m) / l^2`.
pub fn bayes_transition_slack(m: usize, l: usize) -> f64 {
    (m as f64).sqrt() / (l * l) as f64
}

/// Radii used in episode `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRadii {
    pub beta_r: f64,
    pub beta_p: f64,
    pub slack_r: f64,
    pub slack_p: f64,
}

/// Radii for episode `l` (1-based). In frequentist mode the reward and
/// transition MIG schedules are read at `(l-1)H` and `m(l-1)H`.
pub fn episode_radii(
    cfg: &ConfidenceConfig,
    l: usize,
    gamma_r: &[f64],
    gamma_p: &[f64],
) -> Result<EpisodeRadii> {
    match cfg.mode {
        ConfidenceMode::Frequentist => {
            let t = (l - 1) * cfg.horizon;
            Ok(EpisodeRadii {
                beta_r: beta_r(cfg, l, gamma_at(gamma_r, t)?),
                beta_p: beta_p(cfg, l, gamma_at(gamma_p, cfg.m * t)?),
                slack_r: 0.0,
                slack_p: 0.0,
            })
        }
        ConfidenceMode::BayesGp => {
            let (s, a) = bayes_grid_sizes(cfg, l)?;
            Ok(EpisodeRadii {
                beta_r: bayes_beta_r(cfg, l, s, a),
                beta_p: bayes_beta_p(cfg, l, s, a),
                slack_r: bayes_reward_slack(l),
                slack_p: bayes_transition_slack(cfg.m, l),
            })
        }
    }
}
