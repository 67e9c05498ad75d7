//! Monte-Carlo check of the reward and transition confidence sets: draw RKHS
//! ground truths, fit the posteriors on noisy data, and count the runs in
//! which any grid point falls outside its set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BoxSpec, ExperimentConfig, GridSpec};
use crate::agents::default_lambdas;
use crate::confidence::{episode_radii, l2, ConfidenceConfig, ConfidenceMode};
use crate::envs::{concat, EpisodicEnv, NoiseScales, RkhsEnv};
use crate::error::{Error, Result};
use crate::gp::{indexed_points, GpPosterior, TransitionPosterior};
use crate::infogain::mig_schedule_with_repeats;
use crate::kernels::KernelSpec;
use crate::planners::Grid;
use crate::rng::{stream, Stream};

fn default_episode() -> usize {
    10
}

fn default_centers() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub state_box: BoxSpec,
    pub action_box: BoxSpec,
    /// Kernel on `z = (s, a)`.
    pub reward_kernel: KernelSpec,
    /// Kernel on `z`; the index slot is appended automatically.
    pub transition_kernel: KernelSpec,
    pub b_r: f64,
    pub b_p: f64,
    pub sigma_r: f64,
    pub sigma_p: f64,
    pub horizon: usize,
    /// Sets are checked at the start of this episode, i.e. after
    /// `(episode - 1) * horizon` observations.
    #[serde(default = "default_episode")]
    pub episode: usize,
    #[serde(default = "default_centers")]
    pub n_centers: usize,
    pub grid: GridSpec,
    pub lambda_r: Option<f64>,
    pub lambda_p: Option<f64>,
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        let sb = self.state_box.to_box()?;
        let ab = self.action_box.to_box()?;
        let (m, n) = (sb.dim(), ab.dim());
        self.reward_kernel.validate()?;
        self.transition_kernel.validate()?;
        if self.reward_kernel.dim() != m + n || self.transition_kernel.dim() != m + n {
            return Err(Error::config(format!("coverage kernels must act on {} coordinates", m + n)));
        }
        if self.grid.state.len() != m || self.grid.action.len() != n {
            return Err(Error::config("coverage grid resolutions do not match the boxes"));
        }
        if self.horizon == 0 || self.episode == 0 || self.n_centers == 0 {
            return Err(Error::config("coverage horizon, episode and n_centers must be at least 1"));
        }
        for v in [self.b_r, self.b_p] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config("coverage norm bounds must be positive"));
            }
        }
        for v in [self.sigma_r, self.sigma_p] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config("coverage noise scales must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub runs: usize,
    pub delta: f64,
    /// Fraction of runs with a reward violation somewhere on the grid.
    pub reward_rate: f64,
    pub transition_rate: f64,
    /// `delta` plus two binomial standard errors.
    pub threshold: f64,
    pub beta_r: f64,
    pub beta_p: f64,
    pub pass: bool,
}

impl CoverageReport {
    /// `key=value` lines for standard output.
    pub fn to_lines(&self) -> String {
        format!(
            "runs={}\ndelta={}\nreward_violation_rate={}\ntransition_violation_rate={}\nthreshold={}\nbeta_r={}\nbeta_p={}\npass={}\n",
            self.runs,
            self.delta,
            self.reward_rate,
            self.transition_rate,
            self.threshold,
            self.beta_r,
            self.beta_p,
            self.pass
        )
    }
}

/// `beta_scale` multiplies both radii; values below one deliberately break
/// the guarantee and exist to exercise the failure path.
pub fn run_coverage(cfg: &ExperimentConfig, runs: usize, seed: u64, beta_scale: f64) -> Result<CoverageReport> {
    let cov = cfg
        .coverage
        .as_ref()
        .ok_or_else(|| Error::config("config has no [coverage] section"))?;
    if runs == 0 {
        return Err(Error::config("coverage needs at least one run"));
    }
    if !(beta_scale.is_finite() && beta_scale >= 0.0) {
        return Err(Error::config("beta scale must be nonnegative"));
    }
    cov.validate()?;
    let state_box = cov.state_box.to_box()?;
    let action_box = cov.action_box.to_box()?;
    let (m, n) = (state_box.dim(), action_box.dim());
    let h = cov.horizon;
    let mode = cfg.confidence.mode;
    let (dl_r, dl_p) = default_lambdas(mode, h, m, cov.sigma_r, cov.sigma_p);
    let lambda_r = cov.lambda_r.unwrap_or(dl_r);
    let lambda_p = cov.lambda_p.unwrap_or(dl_p);
    let conf = ConfidenceConfig {
        b_r: cov.b_r,
        b_p: cov.b_p,
        sigma_r: cov.sigma_r,
        sigma_p: cov.sigma_p,
        delta: cfg.confidence.delta,
        horizon: h,
        m,
        n,
        lipschitz: 0.0,
        mode,
        bayes: cfg.confidence.bayes,
    };
    conf.validate()?;

    let grid = Grid::lattice(&state_box, &cov.grid.state, &action_box, &cov.grid.action)?;
    let pairs = grid.pairs();
    let indexed = indexed_points(&pairs, m);
    let transition_kernel = cov.transition_kernel.clone().indexed(m);
    let data_points = (cov.episode - 1) * h;
    let (gamma_r, gamma_p) = match mode {
        ConfidenceMode::Frequentist => (
            mig_schedule_with_repeats(&cov.reward_kernel, &pairs, data_points, lambda_r)?,
            mig_schedule_with_repeats(&transition_kernel, &indexed, m * data_points, lambda_p)?,
        ),
        ConfidenceMode::BayesGp => (Vec::new(), Vec::new()),
    };
    let radii = episode_radii(&conf, cov.episode, &gamma_r, &gamma_p)?;
    let beta_r = radii.beta_r * beta_scale;
    let beta_p = radii.beta_p * beta_scale;

    let mut master = stream(seed, Stream::EnvGeneration);
    let run_seeds: Vec<u64> = (0..runs).map(|_| master.gen()).collect();
    let pool = super::thread_pool()?;
    let outcomes = pool.install(|| {
        run_seeds
        .par_iter()
        .map(|&s| -> Result<(bool, bool)> {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let env = RkhsEnv::sample(
                &cov.reward_kernel,
                &transition_kernel,
                state_box.clone(),
                action_box.clone(),
                cov.b_r,
                cov.b_p,
                cov.n_centers,
                h,
                NoiseScales {
                    sigma_r: cov.sigma_r,
                    sigma_p: cov.sigma_p,
                },
                &mut rng,
            )?;
            let mut zs = Vec::with_capacity(data_points);
            let mut rewards = Vec::with_capacity(data_points);
            let mut nexts = Vec::with_capacity(data_points);
            for _ in 0..data_points {
                let s = state_box.sample(&mut rng);
                let a = action_box.sample(&mut rng);
                let r: f64 = StandardNormal.sample(&mut rng);
                rewards.push(env.oracle_mean_reward(&s, &a) + cov.sigma_r * r);
                let next: Vec<f64> = env
                    .oracle_mean_transition(&s, &a)
                    .into_iter()
                    .map(|p| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        p + cov.sigma_p * e
                    })
                    .collect();
                nexts.push(next);
                zs.push(concat(&s, &a));
            }
            let reward = GpPosterior::fit(cov.reward_kernel.clone(), lambda_r, &zs, &rewards)?;
            let mut transition = TransitionPosterior::new(transition_kernel.clone(), m, lambda_p)?;
            transition.extend(&zs, &nexts)?;
            let (mut bad_r, mut bad_p) = (false, false);
            for z in &pairs {
                let (mu, var) = reward.predict(z)?;
                let truth = env.oracle_mean_reward(&z[..m], &z[m..]);
                if (truth - mu).abs() > beta_r * var.sqrt() + radii.slack_r {
                    bad_r = true;
                }
                let (mean, sd) = transition.predict_transition(z)?;
                let diff: Vec<f64> = env
                    .oracle_mean_transition(&z[..m], &z[m..])
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| a - b)
                    .collect();
                if l2(&diff) > beta_p * l2(&sd) + radii.slack_p {
                    bad_p = true;
                }
            }
            Ok((bad_r, bad_p))
        })
        .collect::<Result<Vec<_>>>()
    })?;

    let rate = |f: fn(&(bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / runs as f64;
    let reward_rate = rate(|o| o.0);
    let transition_rate = rate(|o| o.1);
    let delta = conf.delta;
    let threshold = delta + 2.0 * (delta * (1.0 - delta) / runs as f64).sqrt();
    Ok(CoverageReport {
        runs,
        delta,
        reward_rate,
        transition_rate,
        threshold,
        beta_r,
        beta_p,
        pass: reward_rate <= threshold && transition_rate <= threshold,
    })
}
